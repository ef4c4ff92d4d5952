"""Movie, poster, and actor ingestion from the two public movie databases.

Access goes through the abstract ``MetadataClient`` so the pipeline can run
against a live HTTP client, a recorded cassette, or an in-memory fake. Every
fetch is cached on disk keyed by (entity id, source): a warm run makes zero
client calls and reproduces the cold run byte for byte. Failures never abort
a run; they land in JSONL ledgers (rejects, fetch failures) so web-scale
ingestion stays resumable.
"""

from __future__ import annotations

import abc
import csv
import gzip
import io
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Sequence

from .catalog import (
    IMDB_MAIN,
    TMDB,
    ActorProfileRaw,
    CatalogError,
    MovieRecord,
    PosterRef,
    RejectsLedger,
    write_jsonl,
)

log = logging.getLogger(__name__)

DEFAULT_MIN_VOTES = 1000
ANIMATION_GENRE = "Animation"

TSV_NULL = "\\N"


class ClientError(RuntimeError):
    """Transient or permanent client failure (network, server error)."""


@dataclass(frozen=True)
class PosterAsset:
    poster_id: str
    source: str  # IMDB_MAIN or TMDB
    width: int
    height: int
    content: bytes  # encoded image file


@dataclass(frozen=True)
class ActorAsset:
    actor_id: str
    name: str
    images: tuple[bytes, ...]  # encoded image files, deterministic order


@dataclass(frozen=True)
class MovieDetails:
    original_language: str
    cast: tuple[tuple[str, int], ...]  # (actor_id, rank)


class MetadataClient(abc.ABC):
    """What the pipeline needs from the movie databases."""

    @abc.abstractmethod
    def imdb_main_poster(self, movie_id: str) -> PosterAsset | None: ...

    @abc.abstractmethod
    def tmdb_posters(self, movie_id: str) -> list[PosterAsset]: ...

    @abc.abstractmethod
    def movie_details(self, movie_id: str) -> MovieDetails | None: ...

    @abc.abstractmethod
    def actor_profile(self, actor_id: str) -> ActorAsset | None: ...


class RateLimiter:
    """Blocks so that calls never exceed requests_per_second."""

    def __init__(self, requests_per_second: float, clock: Callable[[], float] = time.monotonic,
                 sleeper: Callable[[float], None] = time.sleep):
        self.interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self._clock = clock
        self._sleep = sleeper
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def wait(self) -> None:
        if self.interval == 0.0:
            return
        with self._lock:
            now = self._clock()
            delay = self._next_allowed - now
            self._next_allowed = max(now, self._next_allowed) + self.interval
        if delay > 0:
            self._sleep(delay)


@dataclass
class RetryPolicy:
    attempts: int = 4
    base_delay: float = 0.5
    max_delay: float = 8.0
    sleeper: Callable[[float], None] = time.sleep

    def run(self, fn: Callable[[], Any], describe: str) -> Any:
        delay = self.base_delay
        for attempt in range(1, self.attempts + 1):
            try:
                return fn()
            except ClientError as exc:
                if attempt == self.attempts:
                    raise
                log.warning("%s failed (attempt %d/%d): %s", describe, attempt, self.attempts, exc)
                self.sleeper(delay)
                delay = min(delay * 2, self.max_delay)
        raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# Movie dump (TSV) loading and filtering
# ---------------------------------------------------------------------------


def _open_maybe_gzip(path: Path) -> io.TextIOWrapper:
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
    return open(path, encoding="utf-8")


def _find_dump_file(dump_dir: Path, stem: str) -> Path:
    for name in (f"{stem}.tsv", f"{stem}.tsv.gz"):
        candidate = dump_dir / name
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{dump_dir} has no {stem}.tsv[.gz]")


def load_movie_dump(
    dump_dir: str | os.PathLike[str],
    rejects: RejectsLedger | None = None,
) -> Iterator[MovieRecord]:
    """Join title.basics and title.ratings shaped TSVs into MovieRecords.

    Records with unparseable fields are skipped into the rejects ledger.
    Language and cast are not part of the dump; they are filled by
    enrichment (see ``enrich_movies``) and default to "und" / empty here.
    """
    dump_dir = Path(dump_dir)
    rejects = rejects if rejects is not None else RejectsLedger()

    ratings: dict[str, tuple[float, int]] = {}
    with _open_maybe_gzip(_find_dump_file(dump_dir, "title.ratings")) as fh:
        for row in csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE):
            try:
                ratings[row["tconst"]] = (float(row["averageRating"]), int(row["numVotes"]))
            except (KeyError, TypeError, ValueError):
                rejects.add("rating", str(row.get("tconst")), "unparseable ratings row")

    with _open_maybe_gzip(_find_dump_file(dump_dir, "title.basics")) as fh:
        for row in csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE):
            tconst = row.get("tconst") or ""
            try:
                if row.get("titleType") != "movie":
                    continue
                year_text = row.get("startYear") or TSV_NULL
                if year_text == TSV_NULL:
                    rejects.add("movie", tconst, "missing startYear")
                    continue
                genres_text = row.get("genres") or TSV_NULL
                genres = frozenset() if genres_text == TSV_NULL else frozenset(genres_text.split(","))
                avg_rating, num_votes = ratings.get(tconst, (0.0, 0))
                movie = MovieRecord(
                    movie_id=tconst,
                    title=row.get("primaryTitle") or "",
                    year=int(year_text),
                    genres=genres,
                    is_animated=ANIMATION_GENRE in genres,
                    num_votes=num_votes,
                    avg_rating=avg_rating,
                    original_language="und",
                    cast=(),
                )
                movie.validate()
            except (CatalogError, TypeError, ValueError) as exc:
                rejects.add("movie", tconst, str(exc))
                continue
            yield movie


def filter_movies(
    movies: Iterable[MovieRecord],
    min_votes: int = DEFAULT_MIN_VOTES,
    exclude_animated: bool = True,
    rejects: RejectsLedger | None = None,
) -> Iterator[MovieRecord]:
    """Keep movies with num_votes >= min_votes and, when requested, drop
    animated ones. Order preserved; malformed records are skipped into the
    rejects ledger rather than aborting the stream."""
    if min_votes < 0:
        raise ValueError("min_votes must be >= 0")
    for movie in movies:
        try:
            movie.validate()
        except CatalogError as exc:
            if rejects is not None:
                rejects.add("movie", movie.movie_id, str(exc))
            continue
        if movie.num_votes < min_votes:
            continue
        if exclude_animated and movie.is_animated:
            continue
        yield movie


# ---------------------------------------------------------------------------
# Cached fetching
# ---------------------------------------------------------------------------


def _atomic_write_bytes(path: Path, content: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    tmp.write_bytes(content)
    os.replace(tmp, path)


def _atomic_write_json(path: Path, payload: Any) -> None:
    _atomic_write_bytes(path, json.dumps(payload, indent=1, sort_keys=True).encode("utf-8"))


@dataclass
class FetchLedger(RejectsLedger):
    """Same shape as RejectsLedger; separate file for fetch failures."""


class FetchCache:
    """Disk cache at <root>/cache, keyed by (entity, source).

    Image files live inside the cache; meta JSON records the relative paths
    so a warm run reads everything from disk. Writes are atomic per key.
    """

    def __init__(self, root: str | os.PathLike[str]):
        self.root = Path(root)
        self.cache_dir = self.root / "cache"

    def _poster_meta(self, movie_id: str, source: str) -> Path:
        return self.cache_dir / "posters" / movie_id / source / "meta.json"

    def _actor_meta(self, actor_id: str) -> Path:
        return self.cache_dir / "actors" / actor_id / "meta.json"

    def _details_meta(self, movie_id: str) -> Path:
        return self.cache_dir / "details" / f"{movie_id}.json"

    def get_posters(self, movie_id: str, source: str) -> list[PosterRef] | None:
        meta = self._poster_meta(movie_id, source)
        if not meta.exists():
            return None
        payload = json.loads(meta.read_text("utf-8"))
        return [PosterRef.from_json(rec) for rec in payload["posters"]]

    def put_posters(self, movie_id: str, source: str, assets: Sequence[PosterAsset]) -> list[PosterRef]:
        refs = []
        for asset in assets:
            rel = Path("cache") / "posters" / movie_id / source / f"{asset.poster_id}.png"
            _atomic_write_bytes(self.root / rel, asset.content)
            refs.append(
                PosterRef(
                    poster_id=asset.poster_id,
                    movie_id=movie_id,
                    source=source,
                    image_path=str(rel),
                    width=asset.width,
                    height=asset.height,
                )
            )
        _atomic_write_json(self._poster_meta(movie_id, source), {"posters": [r.to_json() for r in refs]})
        return refs

    def get_actor(self, actor_id: str) -> ActorProfileRaw | None:
        meta = self._actor_meta(actor_id)
        if not meta.exists():
            return None
        return ActorProfileRaw.from_json(json.loads(meta.read_text("utf-8")))

    def put_actor(self, actor_id: str, name: str, images: Sequence[bytes]) -> ActorProfileRaw:
        paths = []
        for ordinal, content in enumerate(images):
            rel = Path("cache") / "actors" / actor_id / f"{ordinal}.png"
            _atomic_write_bytes(self.root / rel, content)
            paths.append(str(rel))
        profile = ActorProfileRaw(actor_id=actor_id, name=name, image_paths=tuple(paths))
        _atomic_write_json(self._actor_meta(actor_id), profile.to_json())
        return profile

    def get_details(self, movie_id: str) -> MovieDetails | None:
        meta = self._details_meta(movie_id)
        if not meta.exists():
            return None
        payload = json.loads(meta.read_text("utf-8"))
        return MovieDetails(
            original_language=payload["original_language"],
            cast=tuple((a, int(r)) for a, r in payload["cast"]),
        )

    def put_details(self, movie_id: str, details: MovieDetails) -> None:
        _atomic_write_json(
            self._details_meta(movie_id),
            {"original_language": details.original_language, "cast": [[a, r] for a, r in details.cast]},
        )


def fetch_posters(
    movie: MovieRecord,
    client: MetadataClient,
    cache: FetchCache,
    retry: RetryPolicy | None = None,
    failures: FetchLedger | None = None,
) -> list[PosterRef]:
    """Union of both sources' posters for one movie, IMDb main first.

    Results are cached per (movie_id, source); repeat calls touch no client.
    A source that still fails after retries (or yields nothing anywhere)
    lands in the fetch-failures ledger.
    """
    retry = retry or RetryPolicy()
    refs: list[PosterRef] = []
    for source in (IMDB_MAIN, TMDB):
        cached = cache.get_posters(movie.movie_id, source)
        if cached is not None:
            refs.extend(cached)
            continue
        try:
            if source == IMDB_MAIN:
                asset = retry.run(lambda: client.imdb_main_poster(movie.movie_id), f"imdb poster {movie.movie_id}")
                assets = [asset] if asset is not None else []
            else:
                assets = retry.run(lambda: client.tmdb_posters(movie.movie_id), f"tmdb posters {movie.movie_id}")
        except ClientError as exc:
            if failures is not None:
                failures.add("posters", movie.movie_id, f"{source}: {exc}")
            continue
        refs.extend(cache.put_posters(movie.movie_id, source, assets))
    if not refs and failures is not None:
        failures.add("posters", movie.movie_id, "no posters in any source")
    refs.sort(key=lambda r: r.order_key())
    return refs


def fetch_actor_profiles(
    cast: Sequence[str],
    client: MetadataClient,
    cache: FetchCache,
    retry: RetryPolicy | None = None,
    failures: FetchLedger | None = None,
    max_images: int = 3,
) -> list[ActorProfileRaw]:
    """Up to three profile images per actor, deterministic order.

    Actors with zero images are retained with empty image_paths (they are
    excluded from ethnicity voting later, not silently dropped).
    """
    retry = retry or RetryPolicy()
    profiles = []
    for actor_id in cast:
        cached = cache.get_actor(actor_id)
        if cached is not None:
            profiles.append(cached)
            continue
        try:
            asset = retry.run(lambda: client.actor_profile(actor_id), f"actor {actor_id}")
        except ClientError as exc:
            if failures is not None:
                failures.add("actor", actor_id, str(exc))
            continue
        if asset is None:
            profiles.append(cache.put_actor(actor_id, "", []))
            continue
        profiles.append(cache.put_actor(actor_id, asset.name, list(asset.images[:max_images])))
    return profiles


def enrich_movies(
    movies: Iterable[MovieRecord],
    client: MetadataClient,
    cache: FetchCache,
    retry: RetryPolicy | None = None,
    failures: FetchLedger | None = None,
) -> Iterator[MovieRecord]:
    """Fill cast ranking and original language from the client (cached)."""
    retry = retry or RetryPolicy()
    for movie in movies:
        details = cache.get_details(movie.movie_id)
        if details is None:
            try:
                details = retry.run(lambda: client.movie_details(movie.movie_id), f"details {movie.movie_id}")
            except ClientError as exc:
                if failures is not None:
                    failures.add("details", movie.movie_id, str(exc))
                details = None
            if details is not None:
                cache.put_details(movie.movie_id, details)
        if details is None:
            yield movie
            continue
        enriched = movie.with_cast(details.cast, language=details.original_language)
        try:
            enriched.validate()
        except CatalogError as exc:
            if failures is not None:
                failures.add("details", movie.movie_id, f"bad cast ranking: {exc}")
            enriched = movie.with_cast((), language=details.original_language)
        yield enriched


# ---------------------------------------------------------------------------
# Clients: cassette replay, recording, counting, live HTTP
# ---------------------------------------------------------------------------


class CassetteClient(MetadataClient):
    """Replays a recorded cassette directory; never touches the network.

    Layout: blobs/<blob>.png plus movies/<movie_id>.json and
    actors/<actor_id>.json referencing blobs by relative path.
    """

    def __init__(self, cassette_dir: str | os.PathLike[str]):
        self.dir = Path(cassette_dir)

    def _load(self, rel: str) -> dict[str, Any] | None:
        path = self.dir / rel
        if not path.exists():
            return None
        return json.loads(path.read_text("utf-8"))

    def _blob(self, rel: str) -> bytes:
        return (self.dir / rel).read_bytes()

    def _poster(self, rec: dict[str, Any], source: str) -> PosterAsset:
        return PosterAsset(
            poster_id=rec["poster_id"],
            source=source,
            width=int(rec["width"]),
            height=int(rec["height"]),
            content=self._blob(rec["blob"]),
        )

    def imdb_main_poster(self, movie_id: str) -> PosterAsset | None:
        payload = self._load(f"movies/{movie_id}.json")
        if payload is None or payload.get("imdb_main") is None:
            return None
        return self._poster(payload["imdb_main"], IMDB_MAIN)

    def tmdb_posters(self, movie_id: str) -> list[PosterAsset]:
        payload = self._load(f"movies/{movie_id}.json")
        if payload is None:
            return []
        return [self._poster(rec, TMDB) for rec in payload.get("tmdb", [])]

    def movie_details(self, movie_id: str) -> MovieDetails | None:
        payload = self._load(f"movies/{movie_id}.json")
        if payload is None or "details" not in payload:
            return None
        details = payload["details"]
        return MovieDetails(
            original_language=details["original_language"],
            cast=tuple((a, int(r)) for a, r in details["cast"]),
        )

    def actor_profile(self, actor_id: str) -> ActorAsset | None:
        payload = self._load(f"actors/{actor_id}.json")
        if payload is None:
            return None
        return ActorAsset(
            actor_id=actor_id,
            name=payload["name"],
            images=tuple(self._blob(rec["blob"]) for rec in payload["images"]),
        )


class RecordingClient(MetadataClient):
    """Passes through to a live client while writing a replayable cassette."""

    def __init__(self, inner: MetadataClient, cassette_dir: str | os.PathLike[str]):
        self.inner = inner
        self.dir = Path(cassette_dir)

    def _store_blob(self, key: str, content: bytes) -> str:
        rel = f"blobs/{key}.png"
        _atomic_write_bytes(self.dir / rel, content)
        return rel

    def _movie_payload(self, movie_id: str) -> dict[str, Any]:
        path = self.dir / f"movies/{movie_id}.json"
        if path.exists():
            return json.loads(path.read_text("utf-8"))
        return {}

    def _save_movie(self, movie_id: str, payload: dict[str, Any]) -> None:
        _atomic_write_json(self.dir / f"movies/{movie_id}.json", payload)

    def imdb_main_poster(self, movie_id: str) -> PosterAsset | None:
        asset = self.inner.imdb_main_poster(movie_id)
        payload = self._movie_payload(movie_id)
        if asset is None:
            payload["imdb_main"] = None
        else:
            payload["imdb_main"] = {
                "poster_id": asset.poster_id,
                "width": asset.width,
                "height": asset.height,
                "blob": self._store_blob(asset.poster_id, asset.content),
            }
        self._save_movie(movie_id, payload)
        return asset

    def tmdb_posters(self, movie_id: str) -> list[PosterAsset]:
        assets = self.inner.tmdb_posters(movie_id)
        payload = self._movie_payload(movie_id)
        payload["tmdb"] = [
            {
                "poster_id": a.poster_id,
                "width": a.width,
                "height": a.height,
                "blob": self._store_blob(a.poster_id, a.content),
            }
            for a in assets
        ]
        self._save_movie(movie_id, payload)
        return assets

    def movie_details(self, movie_id: str) -> MovieDetails | None:
        details = self.inner.movie_details(movie_id)
        if details is not None:
            payload = self._movie_payload(movie_id)
            payload["details"] = {
                "original_language": details.original_language,
                "cast": [[a, r] for a, r in details.cast],
            }
            self._save_movie(movie_id, payload)
        return details

    def actor_profile(self, actor_id: str) -> ActorAsset | None:
        asset = self.inner.actor_profile(actor_id)
        if asset is not None:
            _atomic_write_json(
                self.dir / f"actors/{actor_id}.json",
                {
                    "name": asset.name,
                    "images": [
                        {"blob": self._store_blob(f"{actor_id}_{i}", content)}
                        for i, content in enumerate(asset.images)
                    ],
                },
            )
        return asset


class CountingClient(MetadataClient):
    """Wrapper that counts calls; used to prove warm runs stay offline."""

    def __init__(self, inner: MetadataClient):
        self.inner = inner
        self.calls = 0

    def imdb_main_poster(self, movie_id: str) -> PosterAsset | None:
        self.calls += 1
        return self.inner.imdb_main_poster(movie_id)

    def tmdb_posters(self, movie_id: str) -> list[PosterAsset]:
        self.calls += 1
        return self.inner.tmdb_posters(movie_id)

    def movie_details(self, movie_id: str) -> MovieDetails | None:
        self.calls += 1
        return self.inner.movie_details(movie_id)

    def actor_profile(self, actor_id: str) -> ActorAsset | None:
        self.calls += 1
        return self.inner.actor_profile(actor_id)


class HttpMetadataClient(MetadataClient):
    """Thin live client for a TMDB-shaped JSON API with rate limiting.

    Endpoint shapes: /movie/{id}/images (poster list with file URLs and
    pixel sizes), /movie/{id} (original_language), /movie/{id}/credits
    (cast with order), /person/{id}/images (profiles). The IMDb main poster
    comes from the movie record's own poster URL field when present.
    HTTP errors raise ClientError so the retry policy can engage.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str,
        session: Any = None,
        requests_per_second: float = 4.0,
    ):
        import requests

        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.session = session or requests.Session()
        self.limiter = RateLimiter(requests_per_second)

    def _get_json(self, path: str) -> dict[str, Any]:
        self.limiter.wait()
        try:
            resp = self.session.get(f"{self.base_url}{path}", params={"api_key": self.api_key}, timeout=30)
        except Exception as exc:
            raise ClientError(f"GET {path}: {exc}") from exc
        if resp.status_code != 200:
            raise ClientError(f"GET {path}: HTTP {resp.status_code}")
        return resp.json()

    def _get_bytes(self, url: str) -> bytes:
        self.limiter.wait()
        try:
            resp = self.session.get(url, timeout=60)
        except Exception as exc:
            raise ClientError(f"GET {url}: {exc}") from exc
        if resp.status_code != 200:
            raise ClientError(f"GET {url}: HTTP {resp.status_code}")
        return resp.content

    def imdb_main_poster(self, movie_id: str) -> PosterAsset | None:
        payload = self._get_json(f"/movie/{movie_id}")
        url = payload.get("main_poster_url")
        if not url:
            return None
        return PosterAsset(
            poster_id=f"{movie_id}_main",
            source=IMDB_MAIN,
            width=int(payload.get("main_poster_width", 0) or 0),
            height=int(payload.get("main_poster_height", 0) or 0),
            content=self._get_bytes(url),
        )

    def tmdb_posters(self, movie_id: str) -> list[PosterAsset]:
        payload = self._get_json(f"/movie/{movie_id}/images")
        assets = []
        for rec in payload.get("posters", []):
            assets.append(
                PosterAsset(
                    poster_id=rec["id"],
                    source=TMDB,
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                    content=self._get_bytes(rec["url"]),
                )
            )
        return assets

    def movie_details(self, movie_id: str) -> MovieDetails | None:
        payload = self._get_json(f"/movie/{movie_id}")
        credits = self._get_json(f"/movie/{movie_id}/credits")
        # credits "order" is 0-based; cast ranks are 1-based
        cast = tuple((rec["id"], int(rec.get("rank", int(rec.get("order", 0)) + 1))) for rec in credits.get("cast", []))
        return MovieDetails(original_language=payload.get("original_language", "und"), cast=cast)

    def actor_profile(self, actor_id: str) -> ActorAsset | None:
        payload = self._get_json(f"/person/{actor_id}/images")
        images = tuple(self._get_bytes(rec["url"]) for rec in payload.get("profiles", []))
        return ActorAsset(actor_id=actor_id, name=payload.get("name", ""), images=images)


# ---------------------------------------------------------------------------
# Full ingest: dump -> filtered, enriched catalogs + fetched assets
# ---------------------------------------------------------------------------


@dataclass
class IngestResult:
    movies: list[MovieRecord] = field(default_factory=list)
    posters: list[PosterRef] = field(default_factory=list)
    actors: list[ActorProfileRaw] = field(default_factory=list)
    per_source_posters: dict[str, int] = field(default_factory=dict)
    rejects: int = 0
    fetch_failures: int = 0


def ingest_catalog(
    dump_dir: str | os.PathLike[str],
    client: MetadataClient,
    out_dir: str | os.PathLike[str],
    min_votes: int = DEFAULT_MIN_VOTES,
    exclude_animated: bool = True,
    retry: RetryPolicy | None = None,
) -> IngestResult:
    """Run the whole ingestion stage into ``out_dir``.

    Emits movies.jsonl, posters.jsonl, actors.jsonl, rejects.jsonl,
    fetch_failures.jsonl and counts.json; image files live under
    ``out_dir/cache`` with catalog paths relative to ``out_dir``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = FetchCache(out)
    rejects = RejectsLedger()
    failures = FetchLedger()
    retry = retry or RetryPolicy()

    raw = load_movie_dump(dump_dir, rejects)
    kept = filter_movies(raw, min_votes=min_votes, exclude_animated=exclude_animated, rejects=rejects)
    movies = list(enrich_movies(kept, client, cache, retry, failures))

    posters: list[PosterRef] = []
    per_source: dict[str, int] = {IMDB_MAIN: 0, TMDB: 0}
    for movie in movies:
        for ref in fetch_posters(movie, client, cache, retry, failures):
            posters.append(ref)
            per_source[ref.source] += 1

    actor_ids = sorted({actor_id for movie in movies for actor_id, _rank in movie.cast})
    actors = fetch_actor_profiles(actor_ids, client, cache, retry, failures)

    write_jsonl(out / "movies.jsonl", (m.to_json() for m in movies))
    write_jsonl(out / "posters.jsonl", (p.to_json() for p in posters))
    write_jsonl(out / "actors.jsonl", (a.to_json() for a in actors))
    rejects.write(out / "rejects.jsonl")
    failures.write(out / "fetch_failures.jsonl")
    counts = {
        "movies": len(movies),
        "posters_total": len(posters),
        "posters_imdb_main": per_source[IMDB_MAIN],
        "posters_tmdb": per_source[TMDB],
        "actors": len(actors),
        "rejects": len(rejects),
        "fetch_failures": len(failures),
    }
    _atomic_write_json(out / "counts.json", counts)
    return IngestResult(
        movies=movies,
        posters=posters,
        actors=actors,
        per_source_posters=per_source,
        rejects=len(rejects),
        fetch_failures=len(failures),
    )
