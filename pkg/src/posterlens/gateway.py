"""Batch inference protocol between the pipeline and face-model backends.

A backend (real sidecar process or the deterministic mock) receives a manifest
of images and produces a bundle directory:

- ``detections.jsonl``   one record per manifest image: its faces (possibly none)
- ``embeddings.bin``     magic ``EMB1``, little-endian u32 count, u32 dim,
                         then count*dim float32 values
- ``embeddings.index.jsonl``  ordinal -> (image_ref, face_index)
- ``scores.jsonl``       per-face ethnicity score vectors
- ``bundle.json``        counts, tasks, backend label

Bundles are immutable once written; every byte is deterministic for a given
backend + manifest, so reruns can be compared byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import struct
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .catalog import dump_json_line, read_jsonl, write_jsonl

EMBED_MAGIC = b"EMB1"
EMBED_DIM = 512

DETECT = "detect"
EMBED = "embed"
ETHNICITY = "ethnicity"
ALL_TASKS = (DETECT, EMBED, ETHNICITY)

FOUR_CLASS = "four"
SEVEN_CLASS = "seven"
CATEGORIES = {
    FOUR_CLASS: ("Asian", "Black", "Indian", "White"),
    SEVEN_CLASS: (
        "Black",
        "East Asian",
        "Indian",
        "Latino-Hispanic",
        "Middle Eastern",
        "Southeast Asian",
        "White",
    ),
}

DEFAULT_SHARD_SIZE = 512

EMBED_NORM_TOL = 1e-4
SCORE_SUM_TOL = 1e-6


class BundleFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    image_ref: str
    path: str
    width: int = 0
    height: int = 0

    def to_json(self) -> dict[str, Any]:
        return {"image_ref": self.image_ref, "path": self.path, "width": self.width, "height": self.height}


@dataclass(frozen=True)
class FaceDetection:
    image_ref: str
    bbox: tuple[float, float, float, float]  # x, y, w, h; origin top-left
    confidence: float

    def validate(self, width: int | None = None, height: int | None = None) -> None:
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise BundleFormatError(f"{self.image_ref}: empty bbox {self.bbox}")
        if not (0.0 <= self.confidence <= 1.0):
            raise BundleFormatError(f"{self.image_ref}: confidence {self.confidence} outside [0,1]")
        if width is not None and height is not None:
            if x < 0 or y < 0 or x + w > width or y + h > height:
                raise BundleFormatError(f"{self.image_ref}: bbox {self.bbox} outside {width}x{height}")


@dataclass(frozen=True)
class EthnicityScores:
    model: str  # FOUR_CLASS or SEVEN_CLASS
    scores: Mapping[str, float]

    def validate(self) -> None:
        expected = CATEGORIES.get(self.model)
        if expected is None:
            raise BundleFormatError(f"unknown ethnicity model {self.model!r}")
        if tuple(sorted(self.scores)) != tuple(sorted(expected)):
            raise BundleFormatError(f"score categories {sorted(self.scores)} != {sorted(expected)}")
        total = sum(self.scores.values())
        if abs(total - 1.0) > SCORE_SUM_TOL:
            raise BundleFormatError(f"scores sum to {total}, not 1")
        for cat, val in self.scores.items():
            if not (0.0 <= val <= 1.0):
                raise BundleFormatError(f"score {cat}={val} outside [0,1]")

    def argmax(self) -> str:
        # fixed alphabetical order breaks ties deterministically
        best = None
        for cat in sorted(self.scores):
            if best is None or self.scores[cat] > self.scores[best]:
                best = cat
        assert best is not None
        return best


def write_manifest(path: str | os.PathLike[str], entries: Iterable[ManifestEntry]) -> None:
    write_jsonl(path, (e.to_json() for e in entries))


def read_manifest(path: str | os.PathLike[str]) -> list[ManifestEntry]:
    return [
        ManifestEntry(
            image_ref=rec["image_ref"],
            path=rec["path"],
            width=int(rec.get("width", 0)),
            height=int(rec.get("height", 0)),
        )
        for rec in read_jsonl(path)
    ]


def write_embeddings(path: str | os.PathLike[str], vectors: np.ndarray) -> None:
    """Binary embedding file: EMB1 magic, u32 count, u32 dim, f32 data (LE)."""
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    if vectors.ndim != 2:
        raise ValueError(f"expected 2-D array, got shape {vectors.shape}")
    with open(path, "wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(struct.pack("<II", vectors.shape[0], vectors.shape[1]))
        fh.write(vectors.tobytes(order="C"))


def read_embeddings(path: str | os.PathLike[str]) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBED_MAGIC:
            raise BundleFormatError(f"{path}: bad magic {magic!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise BundleFormatError(f"{path}: truncated header")
        count, dim = struct.unpack("<II", header)
        data = fh.read()
    expected = count * dim * 4
    if len(data) != expected:
        raise BundleFormatError(f"{path}: payload {len(data)} bytes, expected {expected} for {count}x{dim}")
    return np.frombuffer(data, dtype="<f4").reshape(count, dim)


@dataclass
class InferenceBundle:
    """Parsed view of a bundle directory."""

    root: Path
    detections: dict[str, list[FaceDetection]]  # image_ref -> faces (ordered)
    image_sizes: dict[str, tuple[int, int]]  # image_ref -> (width, height)
    embeddings: np.ndarray  # count x dim
    embedding_index: dict[tuple[str, int], int]  # (image_ref, face_index) -> ordinal
    scores: dict[tuple[str, int], EthnicityScores]
    meta: dict[str, Any] = field(default_factory=dict)

    def faces(self, image_ref: str) -> list[FaceDetection]:
        return self.detections.get(image_ref, [])

    def embedding_for(self, image_ref: str, face_index: int) -> np.ndarray | None:
        ordinal = self.embedding_index.get((image_ref, face_index))
        if ordinal is None:
            return None
        return self.embeddings[ordinal]

    def scores_for(self, image_ref: str, face_index: int) -> EthnicityScores | None:
        return self.scores.get((image_ref, face_index))


@dataclass
class ShardResult:
    """In-memory output of a backend for one shard."""

    detections: list[dict[str, Any]] = field(default_factory=list)
    embeddings: list[np.ndarray] = field(default_factory=list)
    embedding_index: list[dict[str, Any]] = field(default_factory=list)
    scores: list[dict[str, Any]] = field(default_factory=list)


class InferenceBackend(Protocol):
    name: str

    def run_shard(self, entries: Sequence[ManifestEntry], tasks: Sequence[str]) -> ShardResult: ...


def _detection_record(entry: ManifestEntry, faces: list[dict[str, Any]]) -> dict[str, Any]:
    return {
        "image_ref": entry.image_ref,
        "width": entry.width,
        "height": entry.height,
        "faces": faces,
    }


def _write_bundle_files(
    out_dir: Path,
    detections: list[dict[str, Any]],
    embedding_rows: list[np.ndarray],
    embedding_index: list[dict[str, Any]],
    scores: list[dict[str, Any]],
    meta: dict[str, Any],
) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(out_dir / "detections.jsonl", detections)
    if embedding_rows:
        matrix = np.stack(embedding_rows).astype("<f4")
    else:
        matrix = np.zeros((0, EMBED_DIM), dtype="<f4")
    write_embeddings(out_dir / "embeddings.bin", matrix)
    write_jsonl(out_dir / "embeddings.index.jsonl", embedding_index)
    write_jsonl(out_dir / "scores.jsonl", scores)
    with open(out_dir / "bundle.json", "w", encoding="utf-8") as fh:
        fh.write(dump_json_line(meta))
        fh.write("\n")


def run_inference(
    manifest: Sequence[ManifestEntry],
    backend: InferenceBackend,
    tasks: Sequence[str],
    out_dir: str | os.PathLike[str],
    shard_size: int = DEFAULT_SHARD_SIZE,
) -> Path:
    """Run a backend over the manifest in shards and assemble one bundle.

    A shard that raises is retried once; a persistent failure is recorded in
    ``failures.jsonl`` and its images are skipped (they simply have no
    records in the bundle).
    """
    out_dir = Path(out_dir)
    tasks = tuple(tasks)
    for task in tasks:
        if task not in ALL_TASKS:
            raise ValueError(f"unknown task {task!r}")

    detections: list[dict[str, Any]] = []
    embedding_rows: list[np.ndarray] = []
    embedding_index: list[dict[str, Any]] = []
    scores: list[dict[str, Any]] = []
    failures: list[dict[str, Any]] = []

    shards = [manifest[i : i + shard_size] for i in range(0, len(manifest), shard_size)]
    for shard_no, shard in enumerate(shards):
        result = None
        last_error = None
        for _attempt in range(2):
            try:
                result = backend.run_shard(shard, tasks)
                break
            except Exception as exc:  # partial shard output is discarded wholesale
                last_error = exc
        if result is None:
            failures.append(
                {
                    "shard": shard_no,
                    "image_refs": [e.image_ref for e in shard],
                    "error": str(last_error),
                }
            )
            continue
        detections.extend(result.detections)
        base = len(embedding_rows)
        embedding_rows.extend(result.embeddings)
        for rec in result.embedding_index:
            rec = dict(rec)
            rec["ordinal"] = base + rec["ordinal"]
            embedding_index.append(rec)
        scores.extend(result.scores)

    images_with_faces = sum(1 for rec in detections if rec["faces"])
    meta = {
        "backend": getattr(backend, "name", backend.__class__.__name__),
        "tasks": list(tasks),
        "images": len(manifest),
        "images_processed": len(detections),
        "images_with_faces": images_with_faces,
        "faces": sum(len(rec["faces"]) for rec in detections),
        "face_coverage": (images_with_faces / len(detections)) if detections else 0.0,
        "embedding_dim": EMBED_DIM,
        "failed_shards": len(failures),
    }

    # assemble into a temp dir, then move into place: no partial bundles
    tmp_dir = out_dir.with_name(out_dir.name + f".tmp.{os.getpid()}")
    if tmp_dir.exists():
        shutil.rmtree(tmp_dir)
    _write_bundle_files(tmp_dir, detections, embedding_rows, embedding_index, scores, meta)
    if failures:
        write_jsonl(tmp_dir / "failures.jsonl", failures)
    if out_dir.exists():
        shutil.rmtree(out_dir)
    os.replace(tmp_dir, out_dir)
    return out_dir


def read_bundle(bundle_dir: str | os.PathLike[str]) -> InferenceBundle:
    bundle_dir = Path(bundle_dir)
    detections: dict[str, list[FaceDetection]] = {}
    sizes: dict[str, tuple[int, int]] = {}
    for rec in read_jsonl(bundle_dir / "detections.jsonl"):
        ref = rec["image_ref"]
        faces = [
            FaceDetection(image_ref=ref, bbox=tuple(face["bbox"]), confidence=float(face["confidence"]))
            for face in rec["faces"]
        ]
        detections[ref] = faces
        sizes[ref] = (int(rec.get("width", 0)), int(rec.get("height", 0)))

    embeddings = read_embeddings(bundle_dir / "embeddings.bin")
    index: dict[tuple[str, int], int] = {}
    for rec in read_jsonl(bundle_dir / "embeddings.index.jsonl"):
        index[(rec["image_ref"], int(rec["face_index"]))] = int(rec["ordinal"])
    if len(index) != embeddings.shape[0]:
        raise BundleFormatError(
            f"embedding index has {len(index)} entries but file holds {embeddings.shape[0]} vectors"
        )

    scores: dict[tuple[str, int], EthnicityScores] = {}
    scores_path = bundle_dir / "scores.jsonl"
    if scores_path.exists():
        for rec in read_jsonl(scores_path):
            scores[(rec["image_ref"], int(rec["face_index"]))] = EthnicityScores(
                model=rec["model"], scores=rec["scores"]
            )

    meta: dict[str, Any] = {}
    meta_path = bundle_dir / "bundle.json"
    if meta_path.exists():
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    return InferenceBundle(
        root=bundle_dir,
        detections=detections,
        image_sizes=sizes,
        embeddings=embeddings,
        embedding_index=index,
        scores=scores,
        meta=meta,
    )


def validate_bundle(
    bundle_dir: str | os.PathLike[str],
    manifest: Sequence[ManifestEntry] | None = None,
) -> list[str]:
    """Check a bundle against every protocol invariant; returns problems."""
    problems: list[str] = []
    try:
        bundle = read_bundle(bundle_dir)
    except (BundleFormatError, FileNotFoundError, json.JSONDecodeError) as exc:
        return [f"unreadable bundle: {exc}"]

    sizes = dict(bundle.image_sizes)
    if manifest is not None:
        for entry in manifest:
            if entry.image_ref not in bundle.detections:
                problems.append(f"manifest image {entry.image_ref} has no detections record")
            if entry.width and entry.height:
                sizes[entry.image_ref] = (entry.width, entry.height)

    for ref, faces in bundle.detections.items():
        width, height = sizes.get(ref, (0, 0))
        for face in faces:
            try:
                face.validate(width or None, height or None)
            except BundleFormatError as exc:
                problems.append(str(exc))

    norms = np.linalg.norm(bundle.embeddings, axis=1) if bundle.embeddings.size else np.array([])
    for ordinal, norm in enumerate(norms):
        if abs(norm - 1.0) > EMBED_NORM_TOL:
            problems.append(f"embedding {ordinal} norm {norm:.6f} not within {EMBED_NORM_TOL} of 1")

    for (ref, face_index), _ordinal in bundle.embedding_index.items():
        faces = bundle.detections.get(ref)
        if faces is None or face_index >= len(faces):
            problems.append(f"embedding index points at missing face ({ref}, {face_index})")

    for (ref, face_index), sc in bundle.scores.items():
        try:
            sc.validate()
        except BundleFormatError as exc:
            problems.append(str(exc))
        faces = bundle.detections.get(ref)
        if faces is None or face_index >= len(faces):
            problems.append(f"scores point at missing face ({ref}, {face_index})")
    return problems


# ---------------------------------------------------------------------------
# Mock backend: deterministic, plan-driven
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlannedFace:
    identity: str
    bbox: tuple[float, float, float, float]
    category: str  # planted ethnicity category
    confidence: float = 0.98


@dataclass
class IdentityPlan:
    """What the mock backend should 'see' in each image."""

    model: str = FOUR_CLASS
    faces: dict[str, list[PlannedFace]] = field(default_factory=dict)  # image_ref -> faces

    def identities(self) -> list[str]:
        seen = set()
        for faces in self.faces.values():
            for face in faces:
                seen.add(face.identity)
        return sorted(seen)

    def to_json(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "faces": {
                ref: [
                    {
                        "identity": f.identity,
                        "bbox": list(f.bbox),
                        "category": f.category,
                        "confidence": f.confidence,
                    }
                    for f in faces
                ]
                for ref, faces in sorted(self.faces.items())
            },
        }

    @classmethod
    def from_json(cls, rec: dict[str, Any]) -> "IdentityPlan":
        plan = cls(model=rec.get("model", FOUR_CLASS))
        for ref, faces in rec["faces"].items():
            plan.faces[ref] = [
                PlannedFace(
                    identity=f["identity"],
                    bbox=tuple(f["bbox"]),
                    category=f["category"],
                    confidence=float(f.get("confidence", 0.98)),
                )
                for f in faces
            ]
        return plan

    def save(self, path: str | os.PathLike[str]) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> "IdentityPlan":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def _stable_rng(*parts: object) -> np.random.Generator:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


MAX_PLANTED_IDENTITIES = 2 * EMBED_DIM  # signed one-hot axes

_IDENTITY_JITTER = 0.05  # keeps intra < 0.3 and inter > 1.0 with margin


class MockBackend:
    """Deterministic backend that plants identities and ethnicities.

    Every identity gets a signed one-hot base direction; per-image jitter has
    norm exactly 0.05, so same-identity embeddings sit within ~0.21 of each
    other while different identities are at least ~1.2 apart. Ethnicity
    scores concentrate 0.9 on the planted category. All randomness is keyed
    on (seed, image_ref, face_index): reruns and shard order cannot change a
    single byte of output.
    """

    def __init__(self, seed: int, plan: IdentityPlan, concentration: float = 0.9):
        self.name = f"mock(seed={seed})"
        self.seed = seed
        self.plan = plan
        self.concentration = concentration
        identities = plan.identities()
        if len(identities) > MAX_PLANTED_IDENTITIES:
            raise ValueError(f"mock supports at most {MAX_PLANTED_IDENTITIES} identities, got {len(identities)}")
        self._axis = {ident: i for i, ident in enumerate(identities)}

    def base_vector(self, identity: str) -> np.ndarray:
        idx = self._axis[identity]
        vec = np.zeros(EMBED_DIM, dtype=np.float64)
        vec[idx % EMBED_DIM] = 1.0 if idx < EMBED_DIM else -1.0
        return vec

    def embedding(self, identity: str, image_ref: str, face_index: int) -> np.ndarray:
        rng = _stable_rng(self.seed, "embed", image_ref, face_index)
        noise = rng.standard_normal(EMBED_DIM)
        noise *= _IDENTITY_JITTER / np.linalg.norm(noise)
        vec = self.base_vector(identity) + noise
        return vec / np.linalg.norm(vec)

    def ethnicity_scores(self, face: PlannedFace, image_ref: str, face_index: int) -> dict[str, float]:
        cats = CATEGORIES[self.plan.model]
        if face.category not in cats:
            raise ValueError(f"planted category {face.category!r} not in {self.plan.model} set")
        rng = _stable_rng(self.seed, "ethnicity", image_ref, face_index)
        rest = (1.0 - self.concentration) / (len(cats) - 1)
        raw = {}
        for cat in cats:
            base = self.concentration if cat == face.category else rest
            raw[cat] = base + 0.02 * rest * float(rng.random())
        total = sum(raw.values())
        scores = {cat: val / total for cat, val in raw.items()}
        # exact simplex: push rounding residue into the planted category
        residue = 1.0 - sum(scores.values())
        scores[face.category] += residue
        return scores

    def run_shard(self, entries: Sequence[ManifestEntry], tasks: Sequence[str]) -> ShardResult:
        result = ShardResult()
        for entry in entries:
            planned = self.plan.faces.get(entry.image_ref, [])
            faces = []
            for face_index, face in enumerate(planned):
                faces.append({"bbox": list(face.bbox), "confidence": face.confidence})
                if EMBED in tasks:
                    result.embedding_index.append(
                        {
                            "ordinal": len(result.embeddings),
                            "image_ref": entry.image_ref,
                            "face_index": face_index,
                        }
                    )
                    result.embeddings.append(self.embedding(face.identity, entry.image_ref, face_index))
                if ETHNICITY in tasks:
                    result.scores.append(
                        {
                            "image_ref": entry.image_ref,
                            "face_index": face_index,
                            "model": self.plan.model,
                            "scores": self.ethnicity_scores(face, entry.image_ref, face_index),
                        }
                    )
            result.detections.append(_detection_record(entry, faces))
        return result


def mock_backend(seed: int, identity_plan: IdentityPlan, concentration: float = 0.9) -> MockBackend:
    return MockBackend(seed, identity_plan, concentration)


class SubprocessBackend:
    """Adapter for the sidecar contract.

    Invokes ``<cmd> --manifest <path> --tasks detect,embed --out <dir>`` per
    shard; exit code 0 means a complete shard bundle is present, nonzero
    means the sidecar left no partial files and the shard failed.
    """

    def __init__(self, command: Sequence[str], workdir: str | os.PathLike[str]):
        self.command = list(command)
        self.workdir = Path(workdir)
        self.name = " ".join(self.command)
        self._shard_no = 0

    def run_shard(self, entries: Sequence[ManifestEntry], tasks: Sequence[str]) -> ShardResult:
        self.workdir.mkdir(parents=True, exist_ok=True)
        shard_dir = self.workdir / f"shard-{self._shard_no:05d}"
        self._shard_no += 1
        manifest_path = shard_dir.with_suffix(".manifest.jsonl")
        write_manifest(manifest_path, entries)
        if shard_dir.exists():
            shutil.rmtree(shard_dir)
        proc = subprocess.run(
            [*self.command, "--manifest", str(manifest_path), "--tasks", ",".join(tasks), "--out", str(shard_dir)],
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            raise RuntimeError(f"backend exited {proc.returncode}: {proc.stderr.strip()[:500]}")
        bundle = read_bundle(shard_dir)
        result = ShardResult()
        ordinal = 0
        for entry in entries:
            faces = bundle.faces(entry.image_ref)
            width, height = bundle.image_sizes.get(entry.image_ref, (entry.width, entry.height))
            result.detections.append(
                {
                    "image_ref": entry.image_ref,
                    "width": width,
                    "height": height,
                    "faces": [{"bbox": list(f.bbox), "confidence": f.confidence} for f in faces],
                }
            )
            for face_index in range(len(faces)):
                emb = bundle.embedding_for(entry.image_ref, face_index)
                if emb is not None:
                    result.embedding_index.append(
                        {"ordinal": ordinal, "image_ref": entry.image_ref, "face_index": face_index}
                    )
                    result.embeddings.append(np.asarray(emb, dtype=np.float64))
                    ordinal += 1
                sc = bundle.scores_for(entry.image_ref, face_index)
                if sc is not None:
                    result.scores.append(
                        {
                            "image_ref": entry.image_ref,
                            "face_index": face_index,
                            "model": sc.model,
                            "scores": dict(sc.scores),
                        }
                    )
        return result
