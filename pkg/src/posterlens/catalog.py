"""Domain records and the JSONL catalog files they are persisted in.

Every entity kind gets one JSONL file (movies.jsonl, posters.jsonl,
actors.jsonl), UTF-8, one record per line, keys in a fixed order so that
repeated runs are byte-identical.
"""

from __future__ import annotations

import datetime
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

IMDB_MAIN = "IMDB_MAIN"
TMDB = "TMDB"
POSTER_SOURCES = (IMDB_MAIN, TMDB)

MIN_YEAR = 1888

MAX_PROFILE_IMAGES = 3


class CatalogError(ValueError):
    """A record violates a domain invariant."""


@dataclass(frozen=True)
class MovieRecord:
    movie_id: str
    title: str
    year: int
    genres: frozenset[str]
    is_animated: bool
    num_votes: int
    avg_rating: float
    original_language: str
    cast: tuple[tuple[str, int], ...] = ()  # (actor_id, rank), sorted by rank

    def validate(self) -> None:
        max_year = datetime.date.today().year + 2
        if not (MIN_YEAR <= self.year <= max_year):
            raise CatalogError(f"{self.movie_id}: year {self.year} outside [{MIN_YEAR}, {max_year}]")
        if self.num_votes < 0:
            raise CatalogError(f"{self.movie_id}: negative num_votes")
        if not (0.0 <= self.avg_rating <= 10.0):
            raise CatalogError(f"{self.movie_id}: avg_rating {self.avg_rating} outside [0, 10]")
        ranks = [rank for _, rank in self.cast]
        if sorted(ranks) != list(range(1, len(ranks) + 1)):
            raise CatalogError(f"{self.movie_id}: cast ranks not unique/contiguous from 1: {ranks}")

    def to_json(self) -> dict[str, Any]:
        return {
            "movie_id": self.movie_id,
            "title": self.title,
            "year": self.year,
            "genres": sorted(self.genres),
            "is_animated": self.is_animated,
            "num_votes": self.num_votes,
            "avg_rating": self.avg_rating,
            "original_language": self.original_language,
            "cast": [[actor_id, rank] for actor_id, rank in self.cast],
        }

    @classmethod
    def from_json(cls, rec: dict[str, Any]) -> "MovieRecord":
        movie = cls(
            movie_id=rec["movie_id"],
            title=rec["title"],
            year=int(rec["year"]),
            genres=frozenset(rec["genres"]),
            is_animated=bool(rec["is_animated"]),
            num_votes=int(rec["num_votes"]),
            avg_rating=float(rec["avg_rating"]),
            original_language=rec["original_language"],
            cast=tuple((a, int(r)) for a, r in rec["cast"]),
        )
        movie.validate()
        return movie

    def with_cast(self, cast: Iterable[tuple[str, int]], language: str | None = None) -> "MovieRecord":
        ordered = tuple(sorted(cast, key=lambda item: item[1]))
        return MovieRecord(
            movie_id=self.movie_id,
            title=self.title,
            year=self.year,
            genres=self.genres,
            is_animated=self.is_animated,
            num_votes=self.num_votes,
            avg_rating=self.avg_rating,
            original_language=language if language is not None else self.original_language,
            cast=ordered,
        )


@dataclass(frozen=True)
class PosterRef:
    poster_id: str
    movie_id: str
    source: str  # IMDB_MAIN or TMDB
    image_path: str
    width: int
    height: int

    def validate(self) -> None:
        if self.source not in POSTER_SOURCES:
            raise CatalogError(f"{self.poster_id}: unknown source {self.source!r}")
        if self.width <= 0 or self.height <= 0:
            raise CatalogError(f"{self.poster_id}: non-positive dimensions")

    def order_key(self) -> tuple[int, str]:
        # IMDb main poster sorts first, then lexicographic poster id.
        return (0 if self.source == IMDB_MAIN else 1, self.poster_id)

    def to_json(self) -> dict[str, Any]:
        return {
            "poster_id": self.poster_id,
            "movie_id": self.movie_id,
            "source": self.source,
            "image_path": self.image_path,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_json(cls, rec: dict[str, Any]) -> "PosterRef":
        poster = cls(
            poster_id=rec["poster_id"],
            movie_id=rec["movie_id"],
            source=rec["source"],
            image_path=rec["image_path"],
            width=int(rec["width"]),
            height=int(rec["height"]),
        )
        poster.validate()
        return poster


@dataclass(frozen=True)
class ActorProfileRaw:
    actor_id: str
    name: str
    image_paths: tuple[str, ...] = ()

    def validate(self) -> None:
        if len(self.image_paths) > MAX_PROFILE_IMAGES:
            raise CatalogError(f"{self.actor_id}: more than {MAX_PROFILE_IMAGES} profile images")

    def to_json(self) -> dict[str, Any]:
        return {
            "actor_id": self.actor_id,
            "name": self.name,
            "image_paths": list(self.image_paths),
        }

    @classmethod
    def from_json(cls, rec: dict[str, Any]) -> "ActorProfileRaw":
        actor = cls(
            actor_id=rec["actor_id"],
            name=rec["name"],
            image_paths=tuple(rec["image_paths"]),
        )
        actor.validate()
        return actor


@dataclass
class RejectsLedger:
    """Collects skipped/failed records; persisted as a JSONL sidecar."""

    entries: list[dict[str, Any]] = field(default_factory=list)

    def add(self, kind: str, key: str, reason: str) -> None:
        self.entries.append({"kind": kind, "key": key, "reason": reason})

    def write(self, path: str | os.PathLike[str]) -> None:
        write_jsonl(path, self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def dump_json_line(record: dict[str, Any]) -> str:
    return json.dumps(record, separators=(",", ":"))


def write_jsonl(path: str | os.PathLike[str], records: Iterable[dict[str, Any]]) -> None:
    """Write records atomically (write temp, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(dump_json_line(rec))
            fh.write("\n")
    os.replace(tmp, path)


def read_jsonl(path: str | os.PathLike[str]) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def write_movies(path: str | os.PathLike[str], movies: Iterable[MovieRecord]) -> None:
    write_jsonl(path, (m.to_json() for m in movies))


def read_movies(path: str | os.PathLike[str]) -> list[MovieRecord]:
    return [MovieRecord.from_json(rec) for rec in read_jsonl(path)]


def write_posters(path: str | os.PathLike[str], posters: Iterable[PosterRef]) -> None:
    write_jsonl(path, (p.to_json() for p in posters))


def read_posters(path: str | os.PathLike[str]) -> list[PosterRef]:
    return [PosterRef.from_json(rec) for rec in read_jsonl(path)]


def write_actors(path: str | os.PathLike[str], actors: Iterable[ActorProfileRaw]) -> None:
    write_jsonl(path, (a.to_json() for a in actors))


def read_actors(path: str | os.PathLike[str]) -> list[ActorProfileRaw]:
    return [ActorProfileRaw.from_json(rec) for rec in read_jsonl(path)]
