# The representation statistics, from face facts to census parity.
#
# Every statistic is movie-level: compute per movie first, then average
# across movies, so a movie with 40 posters counts the same as one with 2.
# Aggregation runs on exact rationals, so tables are reproducible to the bit.

from posterlens.demographics import align_to_census, bundled_census, map_census_categories, parity_ratio
from posterlens.metrics import (
    FaceFact,
    ENGLISH,
    compute_all,
    ethnic_frequency_by_decade,
)


def fact(movie, poster, idx, actor, eth, bbox, rank, decade, genres=("Drama",)):
    return FaceFact(
        movie_id=movie, poster_id=poster, face_index=idx, actor_id=actor, ethnicity=eth,
        bbox=bbox, cast_rank=rank, decade=decade, genres=frozenset(genres),
        language_class=ENGLISH, poster_width=200, poster_height=300,
    )


# Two movies in one decade. Movie A's actors: two White, one Black.
# Movie B's: two Black. Movie-level averaging gives W=(2/3+0)/2=1/3.
facts = [
    fact("A", "A_p1", 0, "a1", "White", (10, 10, 60, 60), 1, 2010),
    fact("A", "A_p1", 1, "a2", "White", (90, 10, 40, 40), 2, 2010),
    fact("A", "A_p1", 2, "a3", "Black", (140, 10, 30, 30), 3, 2010),
    fact("B", "B_p1", 0, "b1", "Black", (10, 10, 70, 70), 1, 2010),
    fact("B", "B_p1", 1, "b2", "Black", (100, 10, 35, 35), 2, 2010),
]
freq = ethnic_frequency_by_decade(facts, ("Black", "White"))
print("decade 2010:", {c: freq.value(2010, c) for c in ("Black", "White")})

# The full battery on the same five facts.
tables, stats = compute_all(facts, ("Black", "White"))
for name, table in tables.items():
    print(f"\n{name} ({table.note})")
    for label, values in table.rows:
        print(" ", label, {k: (round(v, 4) if isinstance(v, float) else v) for k, v in values.items()})
print("\nposter face stats:", stats)

# Census normalization: representation share over population share.
census = map_census_categories(bundled_census())
rep = {"Asian": 0.0, "Black": freq.value(2010, "Black"), "Indian": 0.0, "White": freq.value(2010, "White")}
aligned = align_to_census(rep, "four")
ratios = parity_ratio(aligned, census, 2010)
print("\nparity vs 2010 census:", {k: (round(v, 3) if v is not None else None) for k, v in ratios.items()})
# 1.0 is proportional representation; the paper's headline 1.14 came from
# White share 0.79 against a 0.693 population share.
print("headline check: 0.79 / 0.693 =", round(0.79 / 0.693, 3))
