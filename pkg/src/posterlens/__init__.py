"""posterlens: batch analytics for ethnic representation on movie posters.

The package is organized as a library; each stage of the pipeline is a plain
module with pure functions, and the CLI (`posterlens`) is a thin wrapper:

- catalog       domain records and JSONL catalog files
- ingestion     movie dump parsing, API clients, poster/actor fetching
- imageprep     dhash, Hamming distance, per-movie dedup, grayscale filter
- gateway       batch inference protocol (manifests, bundles, backends)
- identity      actor embedding index, face matching, ethnicity voting
- demographics  census tables and parity ratios
- metrics       representation statistics over face facts
- report        SVG charts for metric tables
- pipeline      resumable stage orchestration
- synthcorpus   deterministic synthetic corpora for tests and demos
"""

__version__ = "0.1.0"

FORMAT_VERSION = 1
