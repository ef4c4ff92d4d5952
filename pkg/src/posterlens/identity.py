"""Actor embedding index, poster-face matching, and ethnicity voting.

Matching is strictly per movie: each movie's poster faces are compared
against an index of that movie's cast embeddings (whole cast, or only the
top-k ranked actors), taking the closest entry by Euclidean distance. Since
all embeddings are unit vectors this ranking equals descending cosine
similarity (d^2 = 2 - 2cos).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .catalog import ActorProfileRaw
from .gateway import CATEGORIES, EthnicityScores

WHOLE_CAST = "whole"
TOP_K = "top"

DEFAULT_ACCEPT_THRESHOLD = 1.0
DEFAULT_CONFIDENCE_FLOOR = 0.9
DEFAULT_TOP_K = 10


@dataclass(frozen=True)
class IndexScope:
    kind: str  # WHOLE_CAST or TOP_K
    k: int = 0

    @classmethod
    def whole_cast(cls) -> "IndexScope":
        return cls(WHOLE_CAST)

    @classmethod
    def top_k(cls, k: int = DEFAULT_TOP_K) -> "IndexScope":
        if k <= 0:
            raise ValueError("k must be positive")
        return cls(TOP_K, k)

    @classmethod
    def parse(cls, text: str) -> "IndexScope":
        if text == "whole":
            return cls.whole_cast()
        if text.startswith("top:"):
            return cls.top_k(int(text.split(":", 1)[1]))
        raise ValueError(f"bad scope {text!r}; expected 'whole' or 'top:<k>'")


@dataclass
class ActorIndex:
    """Immutable per-movie index of (actor_id, image ordinal, embedding)."""

    scope: IndexScope
    actor_ids: tuple[str, ...] = ()
    ordinals: tuple[int, ...] = ()
    matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    omitted: tuple[str, ...] = ()  # actors with zero usable embeddings

    def __len__(self) -> int:
        return len(self.actor_ids)

    @property
    def distinct_actors(self) -> set[str]:
        return set(self.actor_ids)


@dataclass(frozen=True)
class MatchResult:
    poster_id: str
    face_index: int
    actor_id: str | None
    distance: float

    @property
    def accepted(self) -> bool:
        return self.actor_id is not None

    def to_json(self) -> dict[str, Any]:
        return {
            "poster_id": self.poster_id,
            "face_index": self.face_index,
            "actor_id": self.actor_id,
            "distance": self.distance if math.isfinite(self.distance) else None,
        }


@dataclass(frozen=True)
class VotedEthnicity:
    actor_id: str
    model: str
    averaged_scores: Mapping[str, float]
    voted: str

    def to_json(self) -> dict[str, Any]:
        return {
            "actor_id": self.actor_id,
            "model": self.model,
            "averaged_scores": {cat: self.averaged_scores[cat] for cat in sorted(self.averaged_scores)},
            "voted": self.voted,
        }


def build_index(
    actors: Sequence[tuple[ActorProfileRaw, Sequence[np.ndarray]]],
    scope: IndexScope,
    ranks: Mapping[str, int] | None = None,
) -> ActorIndex:
    """Build the per-movie index from actor profiles and their embeddings.

    ``ranks`` (actor_id -> cast rank) is required for the top-k scope.
    Actors with zero embeddings are omitted but reported via ``omitted``.
    """
    if scope.kind == TOP_K and ranks is None:
        raise ValueError("top-k scope requires cast ranks")

    actor_ids: list[str] = []
    ordinals: list[int] = []
    rows: list[np.ndarray] = []
    omitted: list[str] = []
    for profile, embeddings in actors:
        if scope.kind == TOP_K:
            rank = ranks.get(profile.actor_id)  # type: ignore[union-attr]
            if rank is None or rank > scope.k:
                continue
        if len(embeddings) == 0:
            omitted.append(profile.actor_id)
            continue
        for ordinal, emb in enumerate(embeddings):
            vec = np.asarray(emb, dtype=np.float64)
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > 1e-3:
                raise ValueError(f"{profile.actor_id} embedding {ordinal} not normalized (norm={norm:.4f})")
            actor_ids.append(profile.actor_id)
            ordinals.append(ordinal)
            rows.append(vec)

    matrix = np.stack(rows) if rows else np.zeros((0, 0))
    return ActorIndex(
        scope=scope,
        actor_ids=tuple(actor_ids),
        ordinals=tuple(ordinals),
        matrix=matrix,
        omitted=tuple(omitted),
    )


def match_face(
    face: np.ndarray,
    index: ActorIndex,
    accept_threshold: float = DEFAULT_ACCEPT_THRESHOLD,
    poster_id: str = "",
    face_index: int = 0,
) -> MatchResult:
    """Closest index entry by Euclidean distance; NONE above the threshold.

    Ties on distance break by (actor_id, image ordinal) so the result never
    depends on index entry order.
    """
    if len(index) == 0:
        return MatchResult(poster_id, face_index, None, math.inf)
    vec = np.asarray(face, dtype=np.float64)
    # elementwise + pairwise-sum reduction: deterministic, no BLAS reduction order
    dists = np.sqrt(((index.matrix - vec) ** 2).sum(axis=1))
    best = float(dists.min())
    candidates = np.flatnonzero(dists == best)
    pick = min(candidates, key=lambda i: (index.actor_ids[i], index.ordinals[i]))
    if best > accept_threshold:
        return MatchResult(poster_id, face_index, None, best)
    return MatchResult(poster_id, face_index, index.actor_ids[pick], best)


def vote_ethnicity(scores_per_image: Sequence[EthnicityScores], actor_id: str = "") -> VotedEthnicity | None:
    """Element-wise mean of per-image score vectors, then argmax.

    The mean and the argmax comparison are computed over exact rationals
    (floats convert losslessly), so the vote is bit-for-bit reproducible and
    exactly invariant under uniform positive rescaling of the inputs. Ties
    break by the fixed alphabetical category order. Returns None for an
    empty list: the actor is ethnicity-unknown and excluded from fractions.
    """
    if not scores_per_image:
        return None
    models = {sc.model for sc in scores_per_image}
    if len(models) != 1:
        raise ValueError(f"mixed score models: {sorted(models)}")
    model = models.pop()
    cats = sorted(CATEGORIES[model])
    exact: dict[str, Fraction] = {}
    for cat in cats:
        total = Fraction(0)
        for sc in scores_per_image:
            total += Fraction(sc.scores[cat])
        exact[cat] = total / len(scores_per_image)
    voted = cats[0]
    for cat in cats[1:]:
        if exact[cat] > exact[voted]:
            voted = cat
    return VotedEthnicity(
        actor_id=actor_id,
        model=model,
        averaged_scores={cat: float(val) for cat, val in exact.items()},
        voted=voted,
    )


@dataclass(frozen=True)
class MatchingReport:
    detected: int
    accepted: int
    correct: int

    @property
    def verification(self) -> float | None:
        """Fraction of accepted matches that are correct; None if undefined."""
        if self.accepted == 0:
            return None
        return self.correct / self.accepted

    @property
    def identification(self) -> float:
        """Fraction of detected faces that received an accepted match."""
        if self.detected == 0:
            return 0.0
        return self.accepted / self.detected

    def to_json(self) -> dict[str, Any]:
        return {
            "detected": self.detected,
            "accepted": self.accepted,
            "correct": self.correct,
            "verification": self.verification,
            "identification": self.identification,
        }


def best_face_index(bundle: "InferenceBundle", image_ref: str, floor: float) -> int | None:
    """Highest-confidence face at or above the floor (headshot rule)."""
    faces = bundle.faces(image_ref)
    best = None
    for idx, face in enumerate(faces):
        if face.confidence < floor:
            continue
        if best is None or face.confidence > faces[best].confidence:
            best = idx
    return best


def collect_actor_embeddings(
    bundle: "InferenceBundle",
    floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> dict[str, list[tuple[int, np.ndarray]]]:
    """actor_id -> [(image ordinal, embedding)] from an actor-image bundle.

    Actor image refs follow ``actor:<actor_id>:<ordinal>``; each image
    contributes its best face's embedding.
    """
    by_actor: dict[str, list[tuple[int, np.ndarray]]] = {}
    for ref in sorted(bundle.detections):
        if not ref.startswith("actor:"):
            continue
        _, actor_id, ordinal_text = ref.split(":", 2)
        best = best_face_index(bundle, ref, floor)
        if best is None:
            continue
        emb = bundle.embedding_for(ref, best)
        if emb is None:
            continue
        by_actor.setdefault(actor_id, []).append((int(ordinal_text), np.asarray(emb, dtype=np.float64)))
    for entries in by_actor.values():
        entries.sort(key=lambda item: item[0])
    return by_actor


def match_catalog(
    movies: Sequence,  # MovieRecord
    posters_by_movie: Mapping[str, Sequence[str]],
    poster_bundle: "InferenceBundle",
    actor_embeddings: Mapping[str, list[tuple[int, np.ndarray]]],
    scope: IndexScope,
    accept_threshold: float = DEFAULT_ACCEPT_THRESHOLD,
    confidence_floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> tuple[list[dict], list[dict], dict]:
    """Per-movie index build + matching over every kept poster face.

    Returns (match records, omitted-actor records, coverage counters).
    """
    matches: list[dict] = []
    omitted: list[dict] = []
    coverage = {"faces_total": 0, "faces_below_floor": 0, "faces_accepted": 0, "faces_rejected": 0}
    for movie in movies:
        ranks = {actor_id: rank for actor_id, rank in movie.cast}
        entries = []
        for actor_id in sorted(ranks):
            embs = [emb for _ordinal, emb in actor_embeddings.get(actor_id, [])]
            entries.append((ActorProfileRaw(actor_id=actor_id, name=""), embs))
        index = build_index(entries, scope, ranks=ranks)
        if index.omitted:
            omitted.append({"movie_id": movie.movie_id, "actors": list(index.omitted)})
        for poster_id in posters_by_movie.get(movie.movie_id, []):
            for face_index, face in enumerate(poster_bundle.faces(poster_id)):
                coverage["faces_total"] += 1
                if face.confidence < confidence_floor:
                    coverage["faces_below_floor"] += 1
                    continue
                emb = poster_bundle.embedding_for(poster_id, face_index)
                if emb is None:
                    continue
                result = match_face(emb, index, accept_threshold, poster_id=poster_id, face_index=face_index)
                coverage["faces_accepted" if result.accepted else "faces_rejected"] += 1
                matches.append({"movie_id": movie.movie_id, **result.to_json()})
    return matches, omitted, coverage


def vote_catalog(
    actor_bundle: "InferenceBundle",
    floor: float = DEFAULT_CONFIDENCE_FLOOR,
) -> tuple[list[dict], dict]:
    """Voted ethnicity per actor from an actor-image bundle's score vectors."""
    per_actor: dict[str, list[EthnicityScores]] = {}
    for ref in sorted(actor_bundle.detections):
        if not ref.startswith("actor:"):
            continue
        _, actor_id, _ordinal = ref.split(":", 2)
        per_actor.setdefault(actor_id, [])
        best = best_face_index(actor_bundle, ref, floor)
        if best is None:
            continue
        scores = actor_bundle.scores_for(ref, best)
        if scores is not None:
            per_actor[actor_id].append(scores)
    records = []
    unknown = 0
    for actor_id in sorted(per_actor):
        voted = vote_ethnicity(per_actor[actor_id], actor_id=actor_id)
        if voted is None:
            unknown += 1
            records.append({"actor_id": actor_id, "model": None, "averaged_scores": None, "voted": None})
        else:
            records.append(voted.to_json())
    return records, {"actors_scored": len(per_actor) - unknown, "actors_unknown": unknown}


def evaluate_matching(
    matches: Iterable[MatchResult],
    truth: Mapping[tuple[str, int], str | None],
) -> MatchingReport:
    """Score matches against ground truth.

    ``truth`` maps (poster_id, face_index) to the true actor_id, or None for
    faces of non-indexed extras.
    """
    detected = accepted = correct = 0
    for match in matches:
        key = (match.poster_id, match.face_index)
        if key not in truth:
            continue
        detected += 1
        if match.accepted:
            accepted += 1
            if truth[key] == match.actor_id:
                correct += 1
    return MatchingReport(detected=detected, accepted=accepted, correct=correct)
