# The whole pipeline on the bundled synthetic corpus.
#
# ingest -> dedup -> grayscale filter -> inference (mock) -> match -> vote
# -> facts -> analyze -> report, with stage digests making re-runs free.

import tempfile
from pathlib import Path

from posterlens.pipeline import PipelineConfig, run_pipeline
from posterlens.synthcorpus import generate_corpus

workdir = Path(tempfile.mkdtemp(prefix="posterlens_pipeline_"))
corpus = generate_corpus(workdir / "corpus", n_movies=10, seed=7)
print(f"corpus at {corpus.root}: {len(corpus.movies)} movies, "
      f"{sum(len(m.poster_ids) for m in corpus.movies)} posters before dedup")

config = PipelineConfig.load(overrides={
    "paths": {
        "movie_dump": str(corpus.root / "dump"),
        "cassette": str(corpus.root / "cassette"),
        "out": str(workdir / "out"),
        "plan": str(corpus.root / "plan.json"),
    },
})

outcomes = run_pipeline(config)
for outcome in outcomes:
    print(f"{outcome.name:>14}: {outcome.status}")

# Second run: every stage skips because nothing changed.
outcomes = run_pipeline(config)
print("\nsecond run:", {o.name: o.status for o in outcomes})

out = workdir / "out"
print("\nmetric CSVs:")
for path in sorted((out / "analyze").glob("*.csv")):
    print(" ", path.name)
print("\nfrequency_by_decade.csv:")
print((out / "analyze" / "frequency_by_decade.csv").read_text())
print("plots:", sorted(p.name for p in (out / "report").glob("*.svg")))
