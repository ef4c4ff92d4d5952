"""Labeled headshot fixtures for conformance and precision checks.

Renders synthetic headshots whose skin tone encodes the labeled category
(the sidecar's own palette), writes a manifest plus labels.json, and is
exposed as the ``postersidecar-fixtures`` entry point.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from pathlib import Path

from PIL import Image, ImageDraw

from .models import PALETTES

IMAGE_SIZE = 128
TONE_JITTER = 4  # small enough that nearest-palette classification is safe


def render_headshot(seed: int, category: str, model: str = "four") -> Image.Image:
    rng = random.Random(seed)
    bg = (rng.randrange(90, 140), rng.randrange(150, 200), rng.randrange(205, 255))
    img = Image.new("RGB", (IMAGE_SIZE, IMAGE_SIZE), bg)
    draw = ImageDraw.Draw(img)
    base = PALETTES[model][category]
    jitter = rng.randrange(-TONE_JITTER, TONE_JITTER + 1)
    skin = tuple(max(0, min(255, ch + jitter)) for ch in base)
    cx = IMAGE_SIZE // 2 + rng.randrange(-5, 6)
    cy = IMAGE_SIZE // 2 + rng.randrange(-5, 6)
    rx = rng.randrange(30, 40)
    ry = rng.randrange(38, 50)
    draw.ellipse([cx - rx, cy - ry, cx + rx, cy + ry], fill=skin)
    for dx in (-rx // 2, rx // 2):
        draw.ellipse([cx + dx - 4, cy - ry // 4 - 3, cx + dx + 4, cy - ry // 4 + 3], fill=(25, 25, 25))
    draw.ellipse([cx - 6, cy + ry // 3 - 2, cx + 6, cy + ry // 3 + 4], fill=(120, 45, 45))
    return img


def render_background_only(seed: int) -> Image.Image:
    rng = random.Random(seed)
    color = (rng.randrange(60, 110), rng.randrange(140, 190), rng.randrange(200, 250))
    return Image.new("RGB", (IMAGE_SIZE, IMAGE_SIZE), color)


def make_labeled_set(
    out_dir: str | Path,
    per_category: int = 10,
    model: str = "four",
    seed: int = 1,
) -> Path:
    """N headshots per category, with manifest.jsonl and labels.json."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    labels = {}
    manifest_lines = []
    counter = 0
    for category in sorted(PALETTES[model]):
        for i in range(per_category):
            name = f"headshot_{counter:03d}.png"
            img = render_headshot(seed * 10000 + counter, category, model)
            img.save(out / "images" / name)
            labels[name] = category
            manifest_lines.append(
                json.dumps({"image_ref": name, "path": str(out / "images" / name)}, separators=(",", ":"))
            )
            counter += 1
    (out / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    (out / "labels.json").write_text(json.dumps(labels, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return out


def make_conformance_fixture(out_dir: str | Path, seed: int = 5) -> Path:
    """Five mixed images, one of them face-free, for protocol validation."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    cats = sorted(PALETTES["four"])
    manifest_lines = []
    for i in range(5):
        name = f"img_{i}.png"
        if i == 3:
            img = render_background_only(seed + i)
        else:
            img = render_headshot(seed * 100 + i, cats[i % len(cats)])
        img.save(out / "images" / name)
        manifest_lines.append(
            json.dumps({"image_ref": name, "path": str(out / "images" / name)}, separators=(",", ":"))
        )
    (out / "manifest.jsonl").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="postersidecar-fixtures", description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--kind", choices=["labeled", "conformance"], default="labeled")
    parser.add_argument("--per-category", type=int, default=10)
    parser.add_argument("--model", choices=["four", "seven"], default="four")
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args(argv)
    if args.kind == "labeled":
        out = make_labeled_set(args.out, args.per_category, args.model, args.seed)
    else:
        out = make_conformance_fixture(args.out, args.seed)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
