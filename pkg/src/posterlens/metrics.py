"""Representation statistics over matched poster faces.

All statistics follow the same two-level scheme: compute per movie first,
then average unweighted across movies, so movies with many posters do not
dominate. Aggregation runs over exact rationals (floats convert losslessly
to Fraction), which makes every table bit-for-bit reproducible, independent
of reduction order, and equal to a brute-force recount; values convert to
float only when a table is emitted.

Leaf quantities that involve a square root (center distance) are pinned to
an explicit float formula, then treated as exact inputs.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from .catalog import read_jsonl, write_jsonl

ENGLISH = "ENGLISH"
NON_ENGLISH = "NON_ENGLISH"

DEFAULT_MAX_RANK = 12

UNIQUE_ACTOR_BUCKETS = ("1", "2", "3", "4", "5", "6", ">6")


@dataclass(frozen=True)
class FaceFact:
    """One matched, ethnicity-resolved face on a kept poster."""

    movie_id: str
    poster_id: str
    face_index: int
    actor_id: str
    ethnicity: str
    bbox: tuple[float, float, float, float]
    cast_rank: int
    decade: int
    genres: frozenset[str]
    language_class: str
    poster_width: int
    poster_height: int

    def area(self) -> Fraction:
        return Fraction(self.bbox[2]) * Fraction(self.bbox[3])

    def to_json(self) -> dict[str, Any]:
        return {
            "movie_id": self.movie_id,
            "poster_id": self.poster_id,
            "face_index": self.face_index,
            "actor_id": self.actor_id,
            "ethnicity": self.ethnicity,
            "bbox": list(self.bbox),
            "cast_rank": self.cast_rank,
            "decade": self.decade,
            "genres": sorted(self.genres),
            "language_class": self.language_class,
            "poster_width": self.poster_width,
            "poster_height": self.poster_height,
        }

    @classmethod
    def from_json(cls, rec: dict[str, Any]) -> "FaceFact":
        return cls(
            movie_id=rec["movie_id"],
            poster_id=rec["poster_id"],
            face_index=int(rec["face_index"]),
            actor_id=rec["actor_id"],
            ethnicity=rec["ethnicity"],
            bbox=tuple(rec["bbox"]),
            cast_rank=int(rec["cast_rank"]),
            decade=int(rec["decade"]),
            genres=frozenset(rec["genres"]),
            language_class=rec["language_class"],
            poster_width=int(rec["poster_width"]),
            poster_height=int(rec["poster_height"]),
        )


def write_facts(path: str | os.PathLike[str], facts: Iterable[FaceFact]) -> None:
    write_jsonl(path, (f.to_json() for f in facts))


def read_facts(path: str | os.PathLike[str]) -> list[FaceFact]:
    return [FaceFact.from_json(rec) for rec in read_jsonl(path)]


def filter_language(facts: Sequence[FaceFact], language: str) -> list[FaceFact]:
    """language: 'en', 'non-en', or 'all'."""
    if language == "all":
        return list(facts)
    if language == "en":
        return [f for f in facts if f.language_class == ENGLISH]
    if language == "non-en":
        return [f for f in facts if f.language_class == NON_ENGLISH]
    raise ValueError(f"bad language filter {language!r}")


@dataclass
class MetricTable:
    """A named, dimensioned aggregation: rows x columns of values."""

    name: str
    row_dim: str
    columns: tuple[str, ...]
    rows: list[tuple[Any, dict[str, float | None]]]
    note: str = ""

    def value(self, row_label: Any, column: str) -> float | None:
        for label, values in self.rows:
            if label == row_label:
                return values.get(column)
        raise KeyError(row_label)

    def row_labels(self) -> list[Any]:
        return [label for label, _ in self.rows]

    def to_csv(self, path: str | os.PathLike[str]) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            if self.note:
                fh.write(f"# {self.note}\n")
            fh.write(",".join([self.row_dim, *self.columns]) + "\n")
            for label, values in self.rows:
                cells = [str(label)]
                for col in self.columns:
                    val = values.get(col)
                    if val is None:
                        cells.append("")
                    elif isinstance(val, int):
                        cells.append(str(val))
                    else:
                        cells.append(repr(float(val)))
                fh.write(",".join(cells) + "\n")


def _categories_in(facts: Sequence[FaceFact]) -> tuple[str, ...]:
    return tuple(sorted({f.ethnicity for f in facts}))


def _by_movie(facts: Sequence[FaceFact]) -> dict[str, list[FaceFact]]:
    movies: dict[str, list[FaceFact]] = {}
    for fact in facts:
        movies.setdefault(fact.movie_id, []).append(fact)
    return movies


def _by_poster(facts: Sequence[FaceFact]) -> dict[str, list[FaceFact]]:
    posters: dict[str, list[FaceFact]] = {}
    for fact in facts:
        posters.setdefault(fact.poster_id, []).append(fact)
    return posters


def _mean(values: Sequence[Fraction]) -> Fraction:
    total = Fraction(0)
    for v in values:
        total += v
    return total / len(values)


def _movie_category_fractions(movie_facts: Sequence[FaceFact], categories: Sequence[str]) -> dict[str, Fraction]:
    """Category share among one movie's distinct matched actors.

    Counting actors once per movie (not once per face) is what makes the
    movie-level statistics invariant under duplicated posters.
    """
    actor_cat: dict[str, str] = {}
    for fact in movie_facts:
        actor_cat[fact.actor_id] = fact.ethnicity
    counts = {cat: 0 for cat in categories}
    for cat in actor_cat.values():
        counts[cat] += 1
    return {cat: Fraction(counts[cat], len(actor_cat)) for cat in categories}


def _largest_face(poster_facts: Sequence[FaceFact]) -> FaceFact:
    """Largest bbox area; ties resolve to the smallest face index."""
    return min(poster_facts, key=lambda f: (-f.area(), f.face_index))


def center_distance_value(fact: FaceFact) -> float:
    """Pinned leaf formula: bbox-center distance over the half-diagonal."""
    x, y, w, h = fact.bbox
    cx = x + w / 2.0
    cy = y + h / 2.0
    dx = cx - fact.poster_width / 2.0
    dy = cy - fact.poster_height / 2.0
    d = math.sqrt(dx * dx + dy * dy)
    half_diagonal = math.sqrt(fact.poster_width * fact.poster_width + fact.poster_height * fact.poster_height) / 2.0
    return d / half_diagonal


def ethnic_frequency_by_decade(
    facts: Sequence[FaceFact],
    categories: Sequence[str] | None = None,
) -> MetricTable:
    """Share of each category among a movie's matched actors, averaged over
    the movies of each decade. Each decade row sums to 1; duplicated posters
    cannot move the numbers because actors count once per movie."""
    categories = tuple(categories or _categories_in(facts))
    per_movie = {
        movie_id: _movie_category_fractions(movie_facts, categories)
        for movie_id, movie_facts in _by_movie(facts).items()
    }
    decades: dict[int, list[str]] = {}
    movie_decade = {f.movie_id: f.decade for f in facts}
    for movie_id, decade in movie_decade.items():
        decades.setdefault(decade, []).append(movie_id)

    rows = []
    for decade in sorted(decades):
        movie_ids = decades[decade]
        values: dict[str, float | None] = {
            cat: float(_mean([per_movie[m][cat] for m in movie_ids])) for cat in categories
        }
        values["n_movies"] = len(movie_ids)
        rows.append((decade, values))
    return MetricTable(
        name="frequency_by_decade",
        row_dim="decade",
        columns=(*categories, "n_movies"),
        rows=rows,
        note="category share of distinct matched actors per movie, averaged over movies in the decade; category columns sum to 1",
    )


def _movie_then_decade_mean(
    facts: Sequence[FaceFact],
    leaf: Mapping[tuple[str, str, int], Fraction],  # (poster_id, movie hint unused) -> value
    categories: Sequence[str],
    name: str,
    note: str,
) -> MetricTable:
    """Shared decade x category aggregation for per-face scalar metrics.

    ``leaf`` maps (poster_id, face identity) -> scalar; a movie's value for a
    category is the mean over its faces of that category, the decade value is
    the mean over movies that have the category.
    """
    per_movie: dict[str, dict[str, Fraction]] = {}
    movie_decade: dict[str, int] = {}
    for movie_id, movie_facts in _by_movie(facts).items():
        movie_decade[movie_id] = movie_facts[0].decade
        by_cat: dict[str, list[Fraction]] = {}
        for fact in movie_facts:
            key = (fact.poster_id, fact.actor_id, fact.face_index)
            by_cat.setdefault(fact.ethnicity, []).append(leaf[key])
        per_movie[movie_id] = {cat: _mean(vals) for cat, vals in by_cat.items()}

    decades: dict[int, list[str]] = {}
    for movie_id, decade in movie_decade.items():
        decades.setdefault(decade, []).append(movie_id)

    rows = []
    for decade in sorted(decades):
        values: dict[str, float | None] = {}
        for cat in categories:
            movie_values = [per_movie[m][cat] for m in decades[decade] if cat in per_movie[m]]
            values[cat] = float(_mean(movie_values)) if movie_values else None
        values["n_movies"] = len(decades[decade])
        rows.append((decade, values))
    return MetricTable(
        name=name,
        row_dim="decade",
        columns=(*categories, "n_movies"),
        rows=rows,
        note=note,
    )


def relative_face_size(
    facts: Sequence[FaceFact],
    categories: Sequence[str] | None = None,
) -> MetricTable:
    """Face area relative to the largest face on the same poster (largest=1),
    averaged movie-level then per decade x category."""
    categories = tuple(categories or _categories_in(facts))
    leaf: dict[tuple[str, str, int], Fraction] = {}
    for poster_id, poster_facts in _by_poster(facts).items():
        largest = _largest_face(poster_facts).area()
        for fact in poster_facts:
            leaf[(poster_id, fact.actor_id, fact.face_index)] = fact.area() / largest
    return _movie_then_decade_mean(
        facts,
        leaf,
        categories,
        name="relative_face_size",
        note="bbox area over the largest matched face's area on the poster; movie-level then decade average",
    )


def center_distance(
    facts: Sequence[FaceFact],
    categories: Sequence[str] | None = None,
) -> MetricTable:
    """Normalized distance from face center to poster center in [0, 1]."""
    categories = tuple(categories or _categories_in(facts))
    leaf = {
        (f.poster_id, f.actor_id, f.face_index): Fraction(center_distance_value(f))
        for f in facts
    }
    return _movie_then_decade_mean(
        facts,
        leaf,
        categories,
        name="center_distance",
        note="bbox-center distance to poster center over the poster half-diagonal; movie-level then decade average",
    )


def _bucket_label(count: int) -> str:
    return str(count) if count <= 6 else ">6"


def unique_actor_buckets(
    facts: Sequence[FaceFact],
    categories: Sequence[str] | None = None,
) -> MetricTable:
    """Movies bucketed by distinct matched actors across kept posters.

    Per bucket: category shares over distinct actors (movie-level averaged)
    plus the mean count of distinct actors per category, so both the
    fraction and absolute-count readings are available.
    """
    categories = tuple(categories or _categories_in(facts))
    buckets: dict[str, list[tuple[dict[str, Fraction], dict[str, int]]]] = {}
    for movie_id, movie_facts in _by_movie(facts).items():
        actor_cat: dict[str, str] = {}
        for fact in movie_facts:
            actor_cat[fact.actor_id] = fact.ethnicity
        n = len(actor_cat)
        counts = {cat: 0 for cat in categories}
        for cat in actor_cat.values():
            counts[cat] += 1
        fractions = {cat: Fraction(counts[cat], n) for cat in categories}
        buckets.setdefault(_bucket_label(n), []).append((fractions, counts))

    rows = []
    for label in UNIQUE_ACTOR_BUCKETS:
        if label not in buckets:
            continue
        movies = buckets[label]
        values: dict[str, float | None] = {}
        for cat in categories:
            values[cat] = float(_mean([fr[cat] for fr, _ in movies]))
        for cat in categories:
            values[f"mean_count:{cat}"] = float(_mean([Fraction(cnt[cat]) for _, cnt in movies]))
        values["n_movies"] = len(movies)
        rows.append((label, values))
    return MetricTable(
        name="unique_actor_buckets",
        row_dim="unique_actors",
        columns=(*categories, *(f"mean_count:{cat}" for cat in categories), "n_movies"),
        rows=rows,
        note="distinct matched actors per movie; category columns are shares of distinct actors and sum to 1",
    )


def conditional_race_given_largest(
    facts: Sequence[FaceFact],
    categories: Sequence[str] | None = None,
) -> MetricTable:
    """P(face category | category of the largest face on the poster).

    Uses posters with at least two matched faces; the largest face sets the
    condition and is excluded from the conditioned distribution. Aggregated
    per movie, then across movies. Each row sums to 1.
    """
    categories = tuple(categories or _categories_in(facts))
    # movie -> condition -> list of per-poster fraction vectors
    per_movie: dict[str, dict[str, list[dict[str, Fraction]]]] = {}
    for poster_id, poster_facts in _by_poster(facts).items():
        if len(poster_facts) < 2:
            continue
        largest = _largest_face(poster_facts)
        rest = [f for f in poster_facts if f is not largest]
        counts = {cat: 0 for cat in categories}
        for fact in rest:
            counts[fact.ethnicity] += 1
        fractions = {cat: Fraction(counts[cat], len(rest)) for cat in categories}
        per_movie.setdefault(largest.movie_id, {}).setdefault(largest.ethnicity, []).append(fractions)

    rows = []
    for condition in categories:
        movie_means = []
        for _movie_id, conditions in sorted(per_movie.items()):
            if condition in conditions:
                vectors = conditions[condition]
                movie_means.append({cat: _mean([v[cat] for v in vectors]) for cat in categories})
        if not movie_means:
            continue
        values: dict[str, float | None] = {
            cat: float(_mean([m[cat] for m in movie_means])) for cat in categories
        }
        values["n_movies"] = len(movie_means)
        rows.append((condition, values))
    return MetricTable(
        name="conditional_race_given_largest",
        row_dim="largest_face_category",
        columns=(*categories, "n_movies"),
        rows=rows,
        note="distribution of the other faces' categories given the largest face's category; category columns sum to 1",
    )


def genre_race_tables(
    facts: Sequence[FaceFact],
    categories: Sequence[str] | None = None,
) -> tuple[MetricTable, MetricTable]:
    """Two normalizations of the genre x category matrix.

    Table A (share_of_genre): rows are genres, each row is the movie-level
    averaged category distribution within the genre and sums to 1.
    Table B (share_of_race): rows are categories, each row distributes that
    category's movie-level mass across genres and sums to 1. A movie counts
    once in every genre it bears.
    """
    categories = tuple(categories or _categories_in(facts))
    per_movie = {
        movie_id: _movie_category_fractions(movie_facts, categories)
        for movie_id, movie_facts in _by_movie(facts).items()
    }
    movie_genres = {}
    for fact in facts:
        movie_genres[fact.movie_id] = fact.genres

    mass: dict[str, dict[str, Fraction]] = {}
    movie_counts: dict[str, int] = {}
    for movie_id, fractions in per_movie.items():
        for genre in movie_genres[movie_id]:
            bucket = mass.setdefault(genre, {cat: Fraction(0) for cat in categories})
            for cat in categories:
                bucket[cat] += fractions[cat]
            movie_counts[genre] = movie_counts.get(genre, 0) + 1

    genres = tuple(sorted(g for g in mass if any(mass[g][cat] > 0 for cat in categories)))

    rows_a = []
    for genre in genres:
        total = sum(mass[genre].values())
        values: dict[str, float | None] = {cat: float(mass[genre][cat] / total) for cat in categories}
        values["n_movies"] = movie_counts[genre]
        rows_a.append((genre, values))
    table_a = MetricTable(
        name="genre_race_share_of_genre",
        row_dim="genre",
        columns=(*categories, "n_movies"),
        rows=rows_a,
        note="movie-level averaged category distribution within each genre; category columns sum to 1",
    )

    rows_b = []
    for cat in categories:
        cat_total = sum(mass[g][cat] for g in genres)
        if cat_total == 0:
            continue
        values = {g: float(mass[g][cat] / cat_total) for g in genres}
        rows_b.append((cat, values))
    table_b = MetricTable(
        name="genre_race_share_of_race",
        row_dim="category",
        columns=genres,
        rows=rows_b,
        note="each category's movie-level mass distributed across genres; genre columns sum to 1",
    )
    return table_a, table_b


def rank_race_ratio(
    facts: Sequence[FaceFact],
    max_rank: int = DEFAULT_MAX_RANK,
    categories: Sequence[str] | None = None,
) -> MetricTable:
    """Category shares among distinct matched actors at each cast rank.

    An actor counts once per movie at their rank regardless of how many
    posters they appear on; restricted to matched actors. Rank columns with
    zero actors are omitted. Each emitted row sums to 1.
    """
    categories = tuple(categories or _categories_in(facts))
    seen: dict[int, dict[tuple[str, str], str]] = {}
    for fact in facts:
        if 1 <= fact.cast_rank <= max_rank:
            seen.setdefault(fact.cast_rank, {})[(fact.movie_id, fact.actor_id)] = fact.ethnicity

    rows = []
    for rank in range(1, max_rank + 1):
        actors = seen.get(rank)
        if not actors:
            continue
        counts = {cat: 0 for cat in categories}
        for cat in actors.values():
            counts[cat] += 1
        values: dict[str, float | None] = {
            cat: float(Fraction(counts[cat], len(actors))) for cat in categories
        }
        values["n_actors"] = len(actors)
        rows.append((rank, values))
    return MetricTable(
        name="rank_race_ratio",
        row_dim="cast_rank",
        columns=(*categories, "n_actors"),
        rows=rows,
        note="share of distinct matched actors per category at each cast rank; category columns sum to 1",
    )


@dataclass(frozen=True)
class PosterFaceStats:
    n_posters: int
    mean: float
    stddev: float  # population standard deviation

    def to_json(self) -> dict[str, Any]:
        return {"n_posters": self.n_posters, "mean": self.mean, "stddev": self.stddev}


def poster_face_stats(facts: Sequence[FaceFact]) -> PosterFaceStats:
    """Population mean and stddev of distinct matched actors per poster."""
    counts = [len({f.actor_id for f in poster_facts}) for poster_facts in _by_poster(facts).values()]
    if not counts:
        return PosterFaceStats(0, 0.0, 0.0)
    mean = _mean([Fraction(c) for c in counts])
    var = _mean([(Fraction(c) - mean) ** 2 for c in counts])
    return PosterFaceStats(n_posters=len(counts), mean=float(mean), stddev=math.sqrt(float(var)))


METRIC_FILES = (
    "frequency_by_decade.csv",
    "relative_face_size.csv",
    "center_distance.csv",
    "unique_actor_buckets.csv",
    "conditional_race_given_largest.csv",
    "genre_race.csv",
    "rank_race_ratio.csv",
)


def write_genre_csv(table_a: MetricTable, table_b: MetricTable, path: str | os.PathLike[str]) -> None:
    """Both genre tables in one long-form CSV (view, genre, category, value)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# share_of_genre: category distribution within a genre (sums to 1 per genre);"
                 " share_of_race: genre distribution of one category (sums to 1 per category)\n")
        fh.write("view,genre,category,value,n_movies\n")
        for genre, values in table_a.rows:
            n = values["n_movies"]
            for cat in table_a.columns:
                if cat == "n_movies":
                    continue
                fh.write(f"share_of_genre,{genre},{cat},{repr(float(values[cat]))},{n}\n")
        for cat, values in table_b.rows:
            for genre in table_b.columns:
                fh.write(f"share_of_race,{genre},{cat},{repr(float(values[genre]))},\n")


def compute_all(
    facts: Sequence[FaceFact],
    categories: Sequence[str] | None = None,
    max_rank: int = DEFAULT_MAX_RANK,
) -> tuple[dict[str, MetricTable], PosterFaceStats]:
    categories = tuple(categories or _categories_in(facts))
    genre_a, genre_b = genre_race_tables(facts, categories)
    tables = {
        "frequency_by_decade": ethnic_frequency_by_decade(facts, categories),
        "relative_face_size": relative_face_size(facts, categories),
        "center_distance": center_distance(facts, categories),
        "unique_actor_buckets": unique_actor_buckets(facts, categories),
        "conditional_race_given_largest": conditional_race_given_largest(facts, categories),
        "genre_race_share_of_genre": genre_a,
        "genre_race_share_of_race": genre_b,
        "rank_race_ratio": rank_race_ratio(facts, max_rank, categories),
    }
    return tables, poster_face_stats(facts)


def write_all(
    tables: Mapping[str, MetricTable],
    stats: PosterFaceStats,
    out_dir: str | os.PathLike[str],
    coverage: Mapping[str, Any] | None = None,
) -> None:
    """Emit the seven metric CSVs plus coverage.json."""
    import json
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tables["frequency_by_decade"].to_csv(out / "frequency_by_decade.csv")
    tables["relative_face_size"].to_csv(out / "relative_face_size.csv")
    tables["center_distance"].to_csv(out / "center_distance.csv")
    tables["unique_actor_buckets"].to_csv(out / "unique_actor_buckets.csv")
    tables["conditional_race_given_largest"].to_csv(out / "conditional_race_given_largest.csv")
    write_genre_csv(tables["genre_race_share_of_genre"], tables["genre_race_share_of_race"], out / "genre_race.csv")
    tables["rank_race_ratio"].to_csv(out / "rank_race_ratio.csv")

    payload = {"poster_face_stats": stats.to_json()}
    if coverage:
        payload["coverage"] = dict(sorted(coverage.items()))
    with open(out / "coverage.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
