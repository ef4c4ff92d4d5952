"""US census population distributions per decade and parity normalization.

The census ships as a versioned CSV asset (decade, category, fraction) with
the five census race categories. The mapper folds those onto the categories
the face models produce: White and Black map through, census Asian absorbs
the models' Asian and Indian categories (the census counts Indian people as
Asian), and everything else pools into Other. Each decade renormalizes to a
simplex regardless of input rounding.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping

log = logging.getLogger(__name__)

CENSUS_RAW_CATEGORIES = ("White", "Black", "American Indian", "Asian", "Pacific Islander")
MAPPED_CATEGORIES = ("Asian", "Black", "Other", "White")

# face-model category -> mapped census category
MODEL_TO_CENSUS = {
    "four": {"White": "White", "Black": "Black", "Asian": "Asian", "Indian": "Asian"},
    "seven": {
        "White": "White",
        "Black": "Black",
        "East Asian": "Asian",
        "Southeast Asian": "Asian",
        "Indian": "Asian",
        "Latino-Hispanic": "Other",
        "Middle Eastern": "Other",
    },
}

SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class RawCensusRow:
    decade: int
    category: str
    fraction: float


@dataclass
class CensusTable:
    """Mapped census fractions: decade -> {Asian, Black, Other, White}."""

    rows: dict[int, dict[str, float]]

    def decades(self) -> list[int]:
        return sorted(self.rows)

    def lookup(self, decade: int) -> tuple[dict[str, float], bool]:
        """Fractions for a decade; falls back to the nearest earlier decade.

        Returns (fractions, fell_back). A decade earlier than the whole
        table uses the earliest decade available.
        """
        if decade in self.rows:
            return self.rows[decade], False
        earlier = [d for d in self.rows if d < decade]
        if earlier:
            fallback = max(earlier)
        else:
            fallback = min(self.rows)
        log.warning("census decade %d missing; using %d", decade, fallback)
        return self.rows[fallback], True

    def validate(self) -> None:
        for decade, fractions in self.rows.items():
            total = sum(fractions.values())
            if abs(total - 1.0) > SIMPLEX_TOL:
                raise ValueError(f"census decade {decade} sums to {total}, not 1")


def load_census_csv(path: str | os.PathLike[str]) -> list[RawCensusRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        filtered = (line for line in fh if not line.startswith("#"))
        for rec in csv.DictReader(filtered):
            rows.append(
                RawCensusRow(
                    decade=int(rec["decade"]),
                    category=rec["category"].strip(),
                    fraction=float(rec["fraction"]),
                )
            )
    return rows


def bundled_census() -> list[RawCensusRow]:
    """The census asset shipped with the package."""
    ref = resources.files("posterlens").joinpath("data/census_us.csv")
    with resources.as_file(ref) as path:
        return load_census_csv(path)


def map_census_categories(raw: Iterable[RawCensusRow]) -> CensusTable:
    """Fold the five census categories onto the model-facing set.

    White -> White, Black -> Black, Asian -> Asian, everything else pools
    into Other; each decade renormalizes to sum exactly 1.
    """
    by_decade: dict[int, dict[str, float]] = {}
    for row in raw:
        if row.category not in CENSUS_RAW_CATEGORIES:
            raise ValueError(f"unknown census category {row.category!r}")
        if row.fraction < 0:
            raise ValueError(f"negative census fraction for {row.category} in {row.decade}")
        decade = by_decade.setdefault(row.decade, {cat: 0.0 for cat in MAPPED_CATEGORIES})
        if row.category in ("White", "Black", "Asian"):
            decade[row.category] += row.fraction
        else:
            decade["Other"] += row.fraction

    for decade, fractions in by_decade.items():
        total = math.fsum(fractions.values())
        if total <= 0:
            raise ValueError(f"census decade {decade} has no mass")
        for cat in MAPPED_CATEGORIES:
            fractions[cat] /= total
        residue = 1.0 - math.fsum(fractions.values())
        fractions["White"] += residue  # pin the simplex exactly

    table = CensusTable(rows=by_decade)
    table.validate()
    return table


def align_to_census(representation: Mapping[str, float], model: str) -> dict[str, float]:
    """Merge model-category fractions into the mapped census categories."""
    mapping = MODEL_TO_CENSUS.get(model)
    if mapping is None:
        raise ValueError(f"unknown model {model!r}")
    out = {cat: 0.0 for cat in MAPPED_CATEGORIES}
    for cat, value in representation.items():
        target = mapping.get(cat)
        if target is None:
            raise ValueError(f"category {cat!r} not in model {model!r}")
        out[target] += value
    return out


def parity_by_decade(
    decade_fractions: Mapping[int, Mapping[str, float]],
    census: CensusTable,
    model: str,
) -> list[dict[str, float | None | int]]:
    """Parity ratios per decade from model-category representation shares.

    Input maps decade -> {model category: fraction}; output rows carry one
    ``ratio:<census category>`` column per mapped category.
    """
    rows = []
    for decade in sorted(decade_fractions):
        aligned = align_to_census(decade_fractions[decade], model)
        ratios = parity_ratio(aligned, census, decade)
        _, fell_back = census.lookup(decade)
        rows.append(
            {
                "decade": int(decade),
                **{f"ratio:{cat}": r for cat, r in sorted(ratios.items())},
                "census_fallback": fell_back,
            }
        )
    return rows


def parity_ratio(
    representation: Mapping[str, float],
    census: CensusTable,
    decade: int,
) -> dict[str, float | None]:
    """Representation fraction over census fraction per category.

    1.0 means parity. A category with zero census share yields None (with a
    warning) rather than a division blow-up. Categories absent from the
    representation are treated as 0.
    """
    fractions, _ = census.lookup(decade)
    ratios: dict[str, float | None] = {}
    for cat, census_frac in fractions.items():
        rep = representation.get(cat, 0.0)
        if census_frac == 0.0:
            log.warning("census share for %s in %d is zero; parity undefined", cat, decade)
            ratios[cat] = None
        else:
            ratios[cat] = rep / census_frac
    return ratios
