"""Bundle file writing per the posterlens gateway wire format.

detections.jsonl   {"image_ref", "width", "height", "faces": [{"bbox", "confidence"}]}
embeddings.bin     magic b"EMB1", little-endian u32 count, u32 dim, f32 data
embeddings.index.jsonl   {"ordinal", "image_ref", "face_index"}
scores.jsonl       {"image_ref", "face_index", "model", "scores"}
bundle.json        counts and backend label

The format is re-implemented here on purpose: the sidecar talks to the
pipeline only through these files.
"""

from __future__ import annotations

import json
import os
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from . import EMBED_DIM, SidecarError

EMBED_MAGIC = b"EMB1"


@dataclass(frozen=True)
class ManifestEntry:
    image_ref: str
    path: str


def read_manifest(path: str | os.PathLike[str]) -> list[ManifestEntry]:
    entries = []
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                entries.append(ManifestEntry(image_ref=rec["image_ref"], path=rec.get("path", "")))
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise SidecarError(f"unreadable manifest {path}: {exc}") from exc
    return entries


@dataclass
class BundleWriter:
    """Accumulates records and writes the bundle atomically at the end."""

    backend: str
    tasks: tuple[str, ...]
    detections: list[dict[str, Any]] = field(default_factory=list)
    embeddings: list[np.ndarray] = field(default_factory=list)
    index: list[dict[str, Any]] = field(default_factory=list)
    scores: list[dict[str, Any]] = field(default_factory=list)

    def add_image(self, image_ref: str, width: int, height: int,
                  faces: list[tuple[tuple[float, float, float, float], float]]) -> None:
        self.detections.append(
            {
                "image_ref": image_ref,
                "width": width,
                "height": height,
                "faces": [{"bbox": list(bbox), "confidence": conf} for bbox, conf in faces],
            }
        )

    def add_embedding(self, image_ref: str, face_index: int, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (EMBED_DIM,):
            raise SidecarError(f"embedding for {image_ref} has shape {vector.shape}, expected ({EMBED_DIM},)")
        self.index.append({"ordinal": len(self.embeddings), "image_ref": image_ref, "face_index": face_index})
        self.embeddings.append(vector)

    def add_scores(self, image_ref: str, face_index: int, model: str, scores: dict[str, float]) -> None:
        self.scores.append(
            {"image_ref": image_ref, "face_index": face_index, "model": model, "scores": scores}
        )

    def write(self, out_dir: str | os.PathLike[str]) -> Path:
        """Write the whole bundle (temp dir, then rename into place)."""
        out_dir = Path(out_dir)
        tmp = out_dir.with_name(out_dir.name + f".tmp.{os.getpid()}")
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir(parents=True)
        try:
            _write_jsonl(tmp / "detections.jsonl", self.detections)
            matrix = (
                np.stack(self.embeddings).astype("<f4")
                if self.embeddings
                else np.zeros((0, EMBED_DIM), dtype="<f4")
            )
            with open(tmp / "embeddings.bin", "wb") as fh:
                fh.write(EMBED_MAGIC)
                fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
                fh.write(matrix.tobytes(order="C"))
            _write_jsonl(tmp / "embeddings.index.jsonl", self.index)
            _write_jsonl(tmp / "scores.jsonl", self.scores)
            meta = {
                "backend": self.backend,
                "tasks": list(self.tasks),
                "images": len(self.detections),
                "images_processed": len(self.detections),
                "images_with_faces": sum(1 for d in self.detections if d["faces"]),
                "faces": sum(len(d["faces"]) for d in self.detections),
                "face_coverage": (
                    sum(1 for d in self.detections if d["faces"]) / len(self.detections)
                    if self.detections
                    else 0.0
                ),
                "embedding_dim": EMBED_DIM,
                "failed_shards": 0,
            }
            with open(tmp / "bundle.json", "w", encoding="utf-8") as fh:
                json.dump(meta, fh, separators=(",", ":"))
                fh.write("\n")
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
        return out_dir


def _write_jsonl(path: Path, records: list[dict[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")))
            fh.write("\n")


def read_bundle_embeddings(path: str | os.PathLike[str]) -> np.ndarray:
    """Reader used by the sidecar's own tests."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBED_MAGIC:
            raise SidecarError(f"{path}: bad magic {magic!r}")
        count, dim = struct.unpack("<II", fh.read(8))
        data = fh.read()
    if len(data) != count * dim * 4:
        raise SidecarError(f"{path}: truncated payload")
    return np.frombuffer(data, dtype="<f4").reshape(count, dim)


def read_jsonl(path: str | os.PathLike[str]) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
