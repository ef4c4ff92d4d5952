"""Deterministic synthetic corpora for tests, demos, and acceptance runs.

Poster art is built from an 8x9 block-brightness grid upscaled to full size,
so its dhash is controllable: base designs are rejection-sampled until they
differ by at least 20 bits in the top seven rows, and title-overlay variants
only touch the bottom row band, keeping them 3-12 bits from their base. That
guarantees single-linkage dedup at the paper's threshold (strict < 16) finds
exactly one cluster per design, permutation-proof.

The corpus writer emits everything one pipeline run needs: a movie dump
(TSV), a replay cassette with rendered poster/headshot files, the identity
plan for the mock inference backend, and ground-truth matches.
"""

from __future__ import annotations

import io
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .catalog import write_jsonl
from .gateway import FOUR_CLASS, IdentityPlan, PlannedFace
from .imageprep import compute_dhash, hamming
from .ingestion import _atomic_write_bytes, _atomic_write_json

POSTER_W, POSTER_H = 180, 240
HEADSHOT_W, HEADSHOT_H = 128, 128

GRID_ROWS, GRID_COLS = 8, 9
TONE_DARK, TONE_LIGHT = 40, 215

MIN_DESIGN_DISTANCE = 20  # bits, measured on the top 7 rows only
VARIANT_DISTANCE = (3, 12)  # inclusive full-hash distance from the base

CATEGORY_WEIGHTS = (("White", 0.55), ("Black", 0.20), ("Asian", 0.15), ("Indian", 0.10))

SKIN_TONES = {
    "White": (232, 190, 170),
    "Black": (92, 60, 40),
    "Asian": (226, 195, 140),
    "Indian": (150, 100, 70),
}


def _pick_category(rng: random.Random) -> str:
    roll = rng.random()
    acc = 0.0
    for cat, weight in CATEGORY_WEIGHTS:
        acc += weight
        if roll < acc:
            return cat
    return CATEGORY_WEIGHTS[-1][0]


def _png(img: Image.Image) -> bytes:
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Poster art with controlled dhash structure
# ---------------------------------------------------------------------------


def render_grid(grid: np.ndarray, width: int = POSTER_W, height: int = POSTER_H,
                tint: tuple[int, int, int] = (1, 1, 1)) -> Image.Image:
    """Upscale the 8x9 brightness grid into a poster-sized block image."""
    img = Image.new("RGB", (width, height))
    draw = ImageDraw.Draw(img)
    cell_w = width / GRID_COLS
    cell_h = height / GRID_ROWS
    for r in range(GRID_ROWS):
        for c in range(GRID_COLS):
            tone = int(grid[r, c])
            color = (min(255, tone * tint[0]), min(255, tone * tint[1]), min(255, tone * tint[2]))
            draw.rectangle(
                [round(c * cell_w), round(r * cell_h), round((c + 1) * cell_w) - 1, round((r + 1) * cell_h) - 1],
                fill=color,
            )
    return img


def _top_rows_distance(a: int, b: int) -> int:
    mask = (1 << 56) - 1  # rows 0..6 = bits 0..55
    return ((a ^ b) & mask).bit_count()


def _grid_hash(grid: np.ndarray) -> int:
    """dhash of a rendered grid, computed straight from cell tones.

    Poster dimensions are exact multiples of the grid, so the 9x8 resample
    lands strictly inside constant blocks and reproduces the cell tones;
    rendering is verified against this value once per accepted design.
    """
    bits = 0
    for r in range(GRID_ROWS):
        for c in range(GRID_COLS - 1):
            if grid[r, c + 1] > grid[r, c]:
                bits |= 1 << (r * 8 + c)
    return bits


# title marks flip these bottom-row cells; non-adjacent so edge effects are
# independent, and the paint tone (0 on light cells, 255 on dark cells) is
# outside the design tone range, which makes 1-2 bit flips per cell certain
_MARK_COLUMNS = (1, 3, 5, 7)
_MARKS_PER_VARIANT = 3


@dataclass
class PosterDesigns:
    """Rendered designs and variants for one movie."""

    designs: list[Image.Image]
    variants: list[list[Image.Image]]  # variants[d][v]; variant 0 is the design itself

    def flat(self) -> list[tuple[int, int, Image.Image]]:
        out = []
        for d, imgs in enumerate(self.variants):
            for v, img in enumerate(imgs):
                out.append((d, v, img))
        return out


def make_poster_designs(seed: int, n_designs: int, n_variants: int) -> PosterDesigns:
    """Designs far apart in dhash; variants provably 3-6 bits from base.

    Designs are rejection-sampled on the grid hash until pairwise top-row
    distance is >= 20 bits, so no variant pair across designs can come
    within the dedup threshold. Variants flip 3 marked cells in the bottom
    row: each mark changes 1-2 of that row's bits and nothing else.
    """
    from itertools import combinations

    max_variants = len(list(combinations(_MARK_COLUMNS, _MARKS_PER_VARIANT))) + 1
    if n_variants > max_variants:
        raise ValueError(f"at most {max_variants} variants per design")

    rng = random.Random(seed)
    grids: list[np.ndarray] = []
    hashes: list[int] = []
    attempts = 0
    while len(grids) < n_designs:
        attempts += 1
        if attempts > 20000:
            raise RuntimeError("poster design sampling did not converge")
        grid = np.where(
            np.array([[rng.random() < 0.5 for _ in range(GRID_COLS)] for _ in range(GRID_ROWS)]),
            TONE_LIGHT,
            TONE_DARK,
        )
        bits = _grid_hash(grid)
        if all(_top_rows_distance(bits, other) >= MIN_DESIGN_DISTANCE for other in hashes):
            grids.append(grid)
            hashes.append(bits)

    cell_w = POSTER_W / GRID_COLS
    band_top = round((GRID_ROWS - 1) * POSTER_H / GRID_ROWS)
    variants: list[list[Image.Image]] = []
    for d, grid in enumerate(grids):
        base = render_grid(grid)
        rendered_bits = compute_dhash(base)
        if rendered_bits != hashes[d]:
            raise AssertionError("rendering broke the grid hash; poster dims must be grid multiples")
        row = [base]
        combos = list(combinations(_MARK_COLUMNS, _MARKS_PER_VARIANT))
        rng.shuffle(combos)
        for v in range(n_variants - 1):
            img = base.copy()
            draw = ImageDraw.Draw(img)
            for col in combos[v]:
                tone = 0 if grid[GRID_ROWS - 1, col] == TONE_LIGHT else 255
                x0 = round(col * cell_w)
                x1 = round((col + 1) * cell_w) - 1
                draw.rectangle([x0, band_top, x1, POSTER_H - 1], fill=(tone, tone, tone))
            dist = hamming(compute_dhash(img), hashes[d])
            if not (VARIANT_DISTANCE[0] <= dist <= VARIANT_DISTANCE[1]):
                raise AssertionError(f"variant landed {dist} bits from base; mark math is off")
            row.append(img)
        variants.append(row)
    return PosterDesigns(designs=[row[0] for row in variants], variants=variants)


# ---------------------------------------------------------------------------
# Actor headshots
# ---------------------------------------------------------------------------


def render_headshot(seed: int, category: str, grayscale: bool = False) -> Image.Image:
    """Synthetic headshot: tinted background, skin-tone face oval, eyes."""
    rng = random.Random(seed)
    bg = (rng.randrange(100, 160), rng.randrange(150, 210), rng.randrange(200, 255))
    img = Image.new("RGB", (HEADSHOT_W, HEADSHOT_H), bg)
    draw = ImageDraw.Draw(img)
    skin = SKIN_TONES[category]
    jitter = rng.randrange(-12, 13)
    skin = tuple(max(0, min(255, ch + jitter)) for ch in skin)
    cx, cy = HEADSHOT_W // 2 + rng.randrange(-6, 7), HEADSHOT_H // 2 + rng.randrange(-6, 7)
    rx, ry = rng.randrange(28, 38), rng.randrange(36, 48)
    draw.ellipse([cx - rx, cy - ry, cx + rx, cy + ry], fill=skin)
    eye_dy = -ry // 4
    for dx in (-rx // 2, rx // 2):
        draw.ellipse([cx + dx - 4, cy + eye_dy - 3, cx + dx + 4, cy + eye_dy + 3], fill=(30, 30, 30))
    draw.ellipse([cx - 6, cy + ry // 3 - 2, cx + 6, cy + ry // 3 + 4], fill=(120, 50, 50))
    if grayscale:
        img = img.convert("L").convert("RGB")
    return img


# ---------------------------------------------------------------------------
# Corpus assembly
# ---------------------------------------------------------------------------


@dataclass
class CorpusMovie:
    movie_id: str
    title: str
    year: int
    genres: tuple[str, ...]
    language: str
    num_votes: int
    avg_rating: float
    cast: tuple[tuple[str, int], ...]  # (actor_id, rank)
    poster_ids: tuple[str, ...]
    n_designs: int


@dataclass
class CorpusInfo:
    root: Path
    movies: list[CorpusMovie] = field(default_factory=list)
    actor_category: dict[str, str] = field(default_factory=dict)
    actor_images: dict[str, int] = field(default_factory=dict)  # actor -> color image count
    cast_faces: int = 0
    extra_faces: int = 0
    truth: dict[tuple[str, int], str | None] = field(default_factory=dict)

    @property
    def planted_identification(self) -> float:
        total = self.cast_faces + self.extra_faces
        return self.cast_faces / total if total else 0.0


def generate_corpus(
    out_dir: str | Path,
    n_movies: int = 10,
    seed: int = 7,
    n_designs: int = 3,
    n_variants: int = 2,
    cast_size: int = 10,
    cast_faces_per_movie: int = 7,
    extra_faces_per_movie: int = 3,
    scrambled_ranks: bool = False,
    star_pool: int = 12,
    with_reject_movies: bool = True,
    render_images: bool = True,
) -> CorpusInfo:
    """Write a complete synthetic corpus under ``out_dir``.

    Every movie gets ``n_designs`` poster designs x ``n_variants`` variants
    (variants are near-duplicates by construction), ``cast_faces_per_movie``
    faces of indexed cast members and ``extra_faces_per_movie`` extras
    planted across the design representatives. With ``scrambled_ranks`` the
    cast list grows by imageless filler actors and poster actors land at
    arbitrary ranks, so a top-10 index misses some of them.

    ``render_images=False`` skips poster/headshot rendering, the cassette,
    and the dump: only plan.json, truth.jsonl and the in-memory metadata are
    produced. The plan-driven mock backend needs no pixels, so matching
    experiments run this way at a fraction of the cost.
    """
    rng = random.Random(seed)
    root = Path(out_dir)
    info = CorpusInfo(root=root)
    plan = IdentityPlan(model=FOUR_CLASS)

    stars = [f"nm9{si:04d}" for si in range(star_pool)]
    for star in stars:
        info.actor_category[star] = _pick_category(rng)

    basics_rows = []
    ratings_rows = []

    filler_count = 5 if scrambled_ranks else 0
    for mi in range(n_movies):
        movie_id = f"tt{mi:04d}"
        year = rng.randrange(1975, 2024)
        language = "en" if rng.random() < 0.7 else rng.choice(["fr", "es", "ja", "de"])
        genres = tuple(sorted(rng.sample(["Action", "Crime", "Drama", "Comedy", "Documentary", "Thriller"],
                                         rng.randrange(1, 4))))
        votes = rng.randrange(1000, 500000)
        rating = round(rng.uniform(4.0, 9.0), 1)

        cast_ids = []
        fillers: set[str] = set()
        for ci in range(cast_size):
            if rng.random() < 0.3:
                candidate = rng.choice(stars)
                if candidate in cast_ids:
                    candidate = f"nm{mi:03d}{ci:03d}"
            else:
                candidate = f"nm{mi:03d}{ci:03d}"
            cast_ids.append(candidate)
            if candidate not in info.actor_category:
                info.actor_category[candidate] = _pick_category(rng)
        for fi in range(filler_count):
            filler = f"nm{mi:03d}f{fi:02d}"
            cast_ids.append(filler)
            fillers.add(filler)
            info.actor_category[filler] = _pick_category(rng)
            info.actor_images.setdefault(filler, 0)

        ranks = list(range(1, len(cast_ids) + 1))
        if scrambled_ranks:
            rng.shuffle(ranks)
        cast = tuple(sorted(zip(cast_ids, ranks), key=lambda item: item[1]))

        poster_ids = []
        poster_images: dict[str, Image.Image] = {}
        if render_images:
            designs = make_poster_designs(seed * 1000 + mi, n_designs, n_variants)
            for d, v, img in designs.flat():
                poster_id = f"{movie_id}_p{d}{v}"
                poster_ids.append(poster_id)
                poster_images[poster_id] = img
        else:
            poster_ids = [f"{movie_id}_p{d}{v}" for d in range(n_designs) for v in range(n_variants)]

        # allocate faces across designs; every variant shows the same faces
        eligible = [a for a in cast_ids if a not in fillers]
        face_actors = rng.sample(eligible, min(cast_faces_per_movie, len(eligible)))
        extras = [f"extra{mi:03d}x{k}" for k in range(extra_faces_per_movie)]
        for extra in extras:
            info.actor_category[extra] = _pick_category(rng)
        slots: list[tuple[str, bool]] = [(a, False) for a in face_actors] + [(e, True) for e in extras]
        rng.shuffle(slots)

        per_design: list[list[tuple[str, bool]]] = [[] for _ in range(n_designs)]
        for idx, slot in enumerate(slots):
            per_design[idx % n_designs].append(slot)

        for d in range(n_designs):
            faces = []
            taken: list[tuple[int, int]] = []
            for identity, is_extra in per_design[d]:
                w = rng.randrange(22, 48)
                h = rng.randrange(26, 52)
                for _ in range(50):
                    x = rng.randrange(0, POSTER_W - w)
                    y = rng.randrange(0, POSTER_H - h)
                    if all(abs(x - tx) > 30 or abs(y - ty) > 30 for tx, ty in taken):
                        break
                taken.append((x, y))
                faces.append(
                    PlannedFace(
                        identity=identity,
                        bbox=(float(x), float(y), float(w), float(h)),
                        category=info.actor_category[identity],
                        confidence=round(0.92 + 0.07 * rng.random(), 4),
                    )
                )
            for v in range(n_variants):
                poster_id = f"{movie_id}_p{d}{v}"
                plan.faces[poster_id] = faces
            rep_poster = f"{movie_id}_p{d}0"
            for face_index, face in enumerate(faces):
                identity = face.identity
                is_extra = identity.startswith("extra")
                info.truth[(rep_poster, face_index)] = None if is_extra else identity
                if is_extra:
                    info.extra_faces += 1
                else:
                    info.cast_faces += 1

        info.movies.append(
            CorpusMovie(
                movie_id=movie_id,
                title=f"Synthetic Movie {mi}",
                year=year,
                genres=genres,
                language=language,
                num_votes=votes,
                avg_rating=rating,
                cast=cast,
                poster_ids=tuple(poster_ids),
                n_designs=n_designs,
            )
        )

        if not render_images:
            basics_rows.append((movie_id, "movie", f"Synthetic Movie {mi}", year, ",".join(genres)))
            ratings_rows.append((movie_id, rating, votes))
            continue

        # cassette entry: IMDb main poster is design 0 variant 0, rest TMDB
        cassette_movie = {
            "details": {"original_language": language, "cast": [[a, r] for a, r in cast]},
            "imdb_main": {
                "poster_id": f"{movie_id}_p00",
                "width": POSTER_W,
                "height": POSTER_H,
                "blob": f"blobs/{movie_id}_p00.png",
            },
            "tmdb": [
                {
                    "poster_id": pid,
                    "width": POSTER_W,
                    "height": POSTER_H,
                    "blob": f"blobs/{pid}.png",
                }
                for pid in poster_ids
                if pid != f"{movie_id}_p00"
            ],
        }
        _atomic_write_json(root / "cassette" / "movies" / f"{movie_id}.json", cassette_movie)
        for pid in poster_ids:
            _atomic_write_bytes(root / "cassette" / "blobs" / f"{pid}.png", _png(poster_images[pid]))

        basics_rows.append((movie_id, "movie", f"Synthetic Movie {mi}", year, ",".join(genres)))
        ratings_rows.append((movie_id, rating, votes))

    if with_reject_movies:
        basics_rows.append(("tt9901", "movie", "Rejected Toon", 2001, "Animation,Comedy"))
        ratings_rows.append(("tt9901", 7.7, 50000))
        basics_rows.append(("tt9902", "movie", "Obscure Short-run", 1987, "Drama"))
        ratings_rows.append(("tt9902", 6.1, 150))

    # actor profile images + plan entries; poster actors always get >=1 color image
    poster_actors = {
        face.identity
        for faces in plan.faces.values()
        for face in faces
        if not face.identity.startswith("extra")
    }
    all_cast = sorted({a for m in info.movies for a, _r in m.cast})
    for actor_id in all_cast:
        if info.actor_images.get(actor_id) == 0 and actor_id not in poster_actors:
            n_images = 0  # imageless fillers stay imageless
        elif actor_id in poster_actors:
            n_images = rng.randrange(1, 4)
        else:
            n_images = rng.randrange(0, 4)
        category = info.actor_category[actor_id]
        # only actors off the posters may carry grayscale shots (those are
        # filtered before embedding and must not starve the index)
        grayscale_flags = [
            (actor_id not in poster_actors) and rng.random() < 0.2 for _ in range(n_images)
        ]
        images = []
        color_count = 0
        for ordinal, gray in enumerate(grayscale_flags):
            if render_images:
                img = render_headshot(hash_seed(seed, actor_id, ordinal), category, grayscale=gray)
                images.append({"blob": f"blobs/actor_{actor_id}_{ordinal}.png"})
                _atomic_write_bytes(root / "cassette" / "blobs" / f"actor_{actor_id}_{ordinal}.png", _png(img))
            if not gray:
                color_count += 1
                plan.faces[f"actor:{actor_id}:{ordinal}"] = [
                    PlannedFace(
                        identity=actor_id,
                        bbox=(24.0, 16.0, 80.0, 96.0),
                        category=category,
                        confidence=0.99,
                    )
                ]
        info.actor_images[actor_id] = color_count
        if render_images:
            _atomic_write_json(
                root / "cassette" / "actors" / f"{actor_id}.json",
                {"name": f"Synthetic Actor {actor_id}", "images": images},
            )

    dump_dir = root / "dump"
    dump_dir.mkdir(parents=True, exist_ok=True)
    basics_lines = ["tconst\ttitleType\tprimaryTitle\toriginalTitle\tisAdult\tstartYear\tendYear\truntimeMinutes\tgenres"]
    for movie_id, kind, title, year, genres in basics_rows:
        basics_lines.append(f"{movie_id}\t{kind}\t{title}\t{title}\t0\t{year}\t\\N\t100\t{genres}")
    (dump_dir / "title.basics.tsv").write_text("\n".join(basics_lines) + "\n", encoding="utf-8")
    ratings_lines = ["tconst\taverageRating\tnumVotes"]
    for movie_id, rating, votes in ratings_rows:
        ratings_lines.append(f"{movie_id}\t{rating}\t{votes}")
    (dump_dir / "title.ratings.tsv").write_text("\n".join(ratings_lines) + "\n", encoding="utf-8")

    plan.save(root / "plan.json")
    write_jsonl(
        root / "truth.jsonl",
        (
            {"poster_id": pid, "face_index": fi, "actor_id": actor}
            for (pid, fi), actor in sorted(info.truth.items())
        ),
    )
    return info


def hash_seed(*parts: object) -> int:
    """Stable cross-process seed from structured parts."""
    import hashlib

    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def dedup_fixture_images(seed: int = 21, n_designs: int = 4, n_variants: int = 3) -> list[tuple[str, Image.Image]]:
    """The 12-poster dedup fixture: 4 base designs x 3 overlay variants."""
    designs = make_poster_designs(seed, n_designs, n_variants)
    return [(f"fx_p{d}{v}", img) for d, v, img in designs.flat()]
