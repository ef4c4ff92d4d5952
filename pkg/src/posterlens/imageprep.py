"""Perceptual-hash dedup of posters and grayscale filtering of actor photos.

The dhash variant is pinned so hashes are bit-exact and testable against a
pixel-level oracle:

- decode to RGB, grayscale via ITU-R 601 luma ``0.299*R + 0.587*G + 0.114*B``
  in float64,
- resize to 9 wide x 8 high with center-aligned 4-neighbor bilinear sampling
  (implemented here, not delegated to the image library, so the arithmetic is
  fully specified),
- bit ``row*8 + col`` is set iff the resized row brightens left to right at
  that column, i.e. ``resized[row][col+1] > resized[row][col]``.

Identical pixel content always hashes identically; re-encoding losslessly
preserves the hash.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .catalog import PosterRef

DHASH_WIDTH = 9
DHASH_HEIGHT = 8

DEFAULT_DEDUP_THRESHOLD = 16
DEFAULT_GRAYSCALE_TOLERANCE = 10.0


class DecodeError(ValueError):
    """Raised when an image file cannot be decoded; carries the path."""

    def __init__(self, path: str | os.PathLike[str], cause: Exception | None = None):
        super().__init__(f"cannot decode image: {path}" + (f" ({cause})" if cause else ""))
        self.path = str(path)


@dataclass(frozen=True)
class DedupCluster:
    movie_id: str
    members: tuple[str, ...]  # poster ids, deterministic order
    representative: str

    def to_json(self) -> dict:
        return {
            "movie_id": self.movie_id,
            "representative": self.representative,
            "members": list(self.members),
        }


def load_rgb(path: str | os.PathLike[str]) -> np.ndarray:
    """Decode an image file to an HxWx3 uint8 array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(path, exc) from exc


def luma_601(rgb: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma in float64. Input HxWx3, output HxW."""
    arr = rgb.astype(np.float64)
    return 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]


def bilinear_resize(gray: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Center-aligned bilinear sampling with edge clamping, float64.

    For output pixel (r, c) the source point is
    ``((c + 0.5) * W/out_w - 0.5, (r + 0.5) * H/out_h - 0.5)`` and the value
    interpolates the 4 surrounding pixels. The per-element expression is kept
    structurally identical to the scalar definition so a plain-loop oracle
    reproduces it bit for bit.
    """
    h, w = gray.shape
    src_x = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    src_y = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5

    x0 = np.floor(src_x)
    y0 = np.floor(src_y)
    fx = src_x - x0
    fy = src_y - y0
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0.astype(np.int64) + 1, 0, w - 1)
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0.astype(np.int64) + 1, 0, h - 1)

    fx = fx[np.newaxis, :]
    fy = fy[:, np.newaxis]
    p00 = gray[y0i[:, np.newaxis], x0i[np.newaxis, :]]
    p01 = gray[y0i[:, np.newaxis], x1i[np.newaxis, :]]
    p10 = gray[y1i[:, np.newaxis], x0i[np.newaxis, :]]
    p11 = gray[y1i[:, np.newaxis], x1i[np.newaxis, :]]
    return (1.0 - fy) * ((1.0 - fx) * p00 + fx * p01) + fy * ((1.0 - fx) * p10 + fx * p11)


def dhash_from_array(rgb: np.ndarray) -> int:
    """64-bit difference hash of a decoded HxWx3 (or HxW grayscale) image."""
    if rgb.ndim == 2:
        gray = rgb.astype(np.float64)
    else:
        gray = luma_601(rgb)
    if gray.size == 0:
        raise ValueError("image has no pixels")
    resized = bilinear_resize(gray, DHASH_WIDTH, DHASH_HEIGHT)
    bits = 0
    for row in range(DHASH_HEIGHT):
        for col in range(DHASH_WIDTH - 1):
            if resized[row, col + 1] > resized[row, col]:
                bits |= 1 << (row * 8 + col)
    return bits


def compute_dhash(image: str | os.PathLike[str] | np.ndarray | Image.Image) -> int:
    """dhash of an image given as path, PIL image, or decoded array."""
    if isinstance(image, np.ndarray):
        return dhash_from_array(image)
    if isinstance(image, Image.Image):
        return dhash_from_array(np.asarray(image.convert("RGB"), dtype=np.uint8))
    return dhash_from_array(load_rgb(image))


def hamming(a: int, b: int) -> int:
    """Number of differing bits between two 64-bit hashes."""
    return ((a ^ b) & 0xFFFFFFFFFFFFFFFF).bit_count()


def dhash_hex(bits: int) -> str:
    return f"{bits:016x}"


def dhash_from_hex(hexstr: str) -> int:
    return int(hexstr, 16)


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def dedup_posters(
    posters: Sequence[tuple[PosterRef, int]],
    threshold: int = DEFAULT_DEDUP_THRESHOLD,
) -> tuple[list[PosterRef], list[DedupCluster]]:
    """Single-linkage dedup of one movie's posters on dhash Hamming distance.

    Pairs merge when their distance is strictly below ``threshold`` (identical
    hashes always merge, so threshold 0 still collapses byte-identical
    groups). One representative is kept per cluster: the first member under
    the deterministic order (IMDb main poster first, then lexicographic
    poster id), so the kept set never depends on input order.
    """
    if not posters:
        return [], []
    movie_ids = {ref.movie_id for ref, _ in posters}
    if len(movie_ids) != 1:
        raise ValueError(f"dedup_posters expects a single movie, got {sorted(movie_ids)}")
    movie_id = movie_ids.pop()

    # Work in deterministic order so cluster output is permutation-stable.
    ordered = sorted(posters, key=lambda item: item[0].order_key())
    n = len(ordered)
    uf = _UnionFind(n)
    for i in range(n):
        hash_i = ordered[i][1]
        for j in range(i + 1, n):
            dist = hamming(hash_i, ordered[j][1])
            if dist < threshold or dist == 0:
                uf.union(i, j)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)

    kept: list[PosterRef] = []
    clusters: list[DedupCluster] = []
    for root in sorted(groups):
        member_idx = groups[root]  # already ascending = deterministic order
        members = tuple(ordered[i][0].poster_id for i in member_idx)
        representative = ordered[member_idx[0]][0]
        kept.append(representative)
        clusters.append(DedupCluster(movie_id=movie_id, members=members, representative=representative.poster_id))
    return kept, clusters


def channel_mse(rgb: np.ndarray) -> tuple[float, float, float]:
    """Per-channel MSE against the per-pixel channel mean (0-255 scale)."""
    arr = rgb.astype(np.float64)
    mean = arr.mean(axis=2, keepdims=True)
    mse = ((arr - mean) ** 2).mean(axis=(0, 1))
    return float(mse[0]), float(mse[1]), float(mse[2])


def is_grayscale(
    image: str | os.PathLike[str] | np.ndarray,
    tolerance: float = DEFAULT_GRAYSCALE_TOLERANCE,
) -> bool:
    """True when every channel's MSE from the per-pixel mean is <= tolerance.

    Single-channel files are grayscale by definition.
    """
    if isinstance(image, np.ndarray):
        arr = image
        if arr.ndim == 2:
            return True
    else:
        try:
            with Image.open(image) as img:
                if img.mode in ("L", "LA", "1", "I", "I;16", "F"):
                    return True
                arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            raise DecodeError(image, exc) from exc
    return max(channel_mse(arr)) <= tolerance


def hash_posters(
    posters: Iterable[PosterRef],
    root: str | os.PathLike[str] | None = None,
) -> list[tuple[PosterRef, int]]:
    """Compute dhash for each poster's image file.

    ``root`` resolves relative image paths (catalogs store paths relative to
    their own directory).
    """
    out = []
    for ref in posters:
        path = Path(ref.image_path)
        if root is not None and not path.is_absolute():
            path = Path(root) / path
        out.append((ref, compute_dhash(path)))
    return out
