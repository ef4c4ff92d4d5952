"""Resumable pipeline: ingest -> dedup -> inference -> match -> vote ->
facts -> analyze -> report.

Each stage declares the files it reads and the config keys it depends on;
their combined digest decides whether the stage re-runs. A stage is skipped
only when its recorded input digest matches and its outputs still hash to
the recorded output digest, so partial writes or hand-edited outputs always
force a re-run. Output is a pure function of (inputs, config): two clean
runs produce byte-identical catalogs and metric CSVs.
"""

from __future__ import annotations

import hashlib
import json
import os
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import yaml

from . import __version__, FORMAT_VERSION
from .catalog import ActorProfileRaw, read_actors, read_jsonl, read_movies, read_posters, write_jsonl
from .demographics import bundled_census, load_census_csv, map_census_categories
from .gateway import (
    ALL_TASKS,
    DETECT,
    EMBED,
    IdentityPlan,
    ManifestEntry,
    SubprocessBackend,
    mock_backend,
    read_bundle,
    run_inference,
)
from .identity import (
    IndexScope,
    collect_actor_embeddings,
    match_catalog,
    vote_catalog,
)
from .imageprep import (
    DEFAULT_DEDUP_THRESHOLD,
    DEFAULT_GRAYSCALE_TOLERANCE,
    dedup_posters,
    dhash_hex,
    hash_posters,
    is_grayscale,
)
from .ingestion import CassetteClient, HttpMetadataClient, MetadataClient, RetryPolicy, ingest_catalog
from .metrics import ENGLISH, NON_ENGLISH, FaceFact, compute_all, filter_language, write_all, write_facts
from . import report as report_mod

ENV_PREFIX = "POSTERLENS_"

STAGES = (
    "ingest",
    "dedup",
    "grayscale",
    "infer_posters",
    "infer_actors",
    "match",
    "vote",
    "facts",
    "analyze",
    "report",
)


class PipelineError(RuntimeError):
    pass


class PipelineLocked(PipelineError):
    pass


DEFAULT_CONFIG: dict[str, dict[str, Any]] = {
    "paths": {
        "movie_dump": None,
        "cassette": None,
        "out": None,
        "plan": None,
        "census": None,
    },
    "ingest": {"min_votes": 1000, "exclude_animated": True},
    "dedup": {"threshold": DEFAULT_DEDUP_THRESHOLD},
    "grayscale": {"tolerance": DEFAULT_GRAYSCALE_TOLERANCE},
    "inference": {
        "backend": "mock",
        "mock_seed": 7,
        "shard_size": 512,
        "ethnicity_model": "four",
        "backend_cmd": None,
    },
    "match": {"scope": "whole", "accept_threshold": 1.0, "confidence_floor": 0.9},
    "analyze": {"language": "all", "max_rank": 12},
}


def _deep_merge(base: dict[str, Any], overlay: Mapping[str, Any]) -> dict[str, Any]:
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base.items()}
    for key, val in overlay.items():
        if isinstance(val, Mapping) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def _apply_env_overrides(config: dict[str, Any], environ: Mapping[str, str] = os.environ) -> dict[str, Any]:
    """POSTERLENS_<SECTION>__<KEY>=value overrides one config leaf."""
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX) or "__" not in name:
            continue
        section, key = name[len(ENV_PREFIX):].lower().split("__", 1)
        if section not in config or key not in config[section]:
            continue
        config[section][key] = yaml.safe_load(raw)
    return config


@dataclass
class PipelineConfig:
    tree: dict[str, dict[str, Any]]

    @classmethod
    def load(cls, path: str | os.PathLike[str] | None = None,
             overrides: Mapping[str, Any] | None = None,
             environ: Mapping[str, str] = os.environ) -> "PipelineConfig":
        tree = {k: dict(v) for k, v in DEFAULT_CONFIG.items()}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh) or {}
            tree = _deep_merge(tree, loaded)
        if overrides:
            tree = _deep_merge(tree, overrides)
        tree = _apply_env_overrides(tree, environ)
        return cls(tree=tree)

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.tree[section]

    def path(self, key: str) -> Path | None:
        val = self.tree["paths"].get(key)
        return Path(val) if val else None

    def validate(self) -> None:
        out = self.path("out")
        if out is None:
            raise PipelineError("paths.out is required")
        dump = self.path("movie_dump")
        if dump is None or not Path(dump).exists():
            raise PipelineError(f"paths.movie_dump missing or nonexistent: {dump}")
        if self.tree["inference"]["backend"] == "mock" and self.path("plan") is None:
            raise PipelineError("mock backend requires paths.plan")
        if not (0 <= self.tree["match"]["confidence_floor"] <= 1):
            raise PipelineError("match.confidence_floor must be in [0,1]")
        if self.tree["dedup"]["threshold"] < 0:
            raise PipelineError("dedup.threshold must be >= 0")
        IndexScope.parse(self.tree["match"]["scope"])

    def snapshot(self) -> dict[str, Any]:
        return json.loads(json.dumps(self.tree))

    def subset(self, *sections: str) -> dict[str, Any]:
        return {s: self.tree[s] for s in sections if s in self.tree}


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _digest_inputs(files: Sequence[Path], config_subset: Mapping[str, Any]) -> str:
    digest = hashlib.sha256()
    digest.update(json.dumps(config_subset, sort_keys=True).encode("utf-8"))
    for path in sorted(files):
        digest.update(str(path.name).encode("utf-8"))
        if path.exists():
            digest.update(_sha256_file(path).encode("ascii"))
        else:
            digest.update(b"missing")
    return digest.hexdigest()


def _digest_tree(root: Path) -> list[Path]:
    if not root.exists():
        return []
    return sorted(p for p in root.rglob("*") if p.is_file())


@dataclass
class RunManifest:
    path: Path
    stages: dict[str, dict[str, Any]] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        if path.exists():
            payload = json.loads(path.read_text("utf-8"))
            return cls(path=path, stages=payload.get("stages", {}), meta=payload.get("meta", {}))
        return cls(path=path)

    def save(self) -> None:
        payload = {"meta": self.meta, "stages": self.stages}
        tmp = self.path.with_name(self.path.name + f".tmp.{os.getpid()}")
        tmp.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, self.path)


class PipelineLock:
    """One pipeline instance per output directory."""

    def __init__(self, out_dir: Path):
        self.lock_path = out_dir / ".posterlens.lock"

    def __enter__(self) -> "PipelineLock":
        self.lock_path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise PipelineLocked(f"{self.lock_path} exists; another run owns this directory") from None
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        return self

    def __exit__(self, *exc_info: object) -> None:
        try:
            self.lock_path.unlink()
        except FileNotFoundError:
            pass


@dataclass
class StageOutcome:
    name: str
    status: str  # ran | skipped | failed
    detail: str = ""


class Pipeline:
    def __init__(self, config: PipelineConfig):
        config.validate()
        self.config = config
        self.out = config.path("out")
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest.load(self.out / "run_manifest.json")
        self.manifest.meta = {
            "tool_version": __version__,
            "format_version": FORMAT_VERSION,
            "config": config.snapshot(),
        }

    # -- stage plumbing ------------------------------------------------

    def _stage_dir(self, name: str) -> Path:
        return self.out / name

    def _outputs_digest(self, name: str) -> str:
        files = _digest_tree(self._stage_dir(name))
        return _digest_inputs(files, {})

    def _run_stage(
        self,
        name: str,
        input_files: Sequence[Path],
        config_subset: Mapping[str, Any],
        action: Callable[[Path], None],
    ) -> StageOutcome:
        input_digest = _digest_inputs(list(input_files), config_subset)
        record = self.manifest.stages.get(name)
        if (
            record
            and record.get("input_digest") == input_digest
            and record.get("status") == "ran"
            and self._outputs_digest(name) == record.get("output_digest")
        ):
            record["status"] = "skipped"
            self.manifest.stages[name] = record
            self.manifest.save()
            return StageOutcome(name, "skipped")

        stage_dir = self._stage_dir(name)
        try:
            stage_dir.mkdir(parents=True, exist_ok=True)
            action(stage_dir)
        except Exception as exc:
            self.manifest.stages[name] = {"status": "failed", "input_digest": input_digest, "error": str(exc)}
            self.manifest.save()
            raise
        self.manifest.stages[name] = {
            "status": "ran",
            "input_digest": input_digest,
            "output_digest": self._outputs_digest(name),
        }
        self.manifest.save()
        return StageOutcome(name, "ran")

    # -- inputs --------------------------------------------------------

    def _client(self) -> MetadataClient:
        cassette = self.config.path("cassette")
        if cassette is not None:
            return CassetteClient(cassette)
        inference = self.config["inference"]
        base_url = inference.get("api_base_url")
        api_key = inference.get("api_key", "")
        if base_url:
            return HttpMetadataClient(base_url, api_key)
        raise PipelineError("no client configured: set paths.cassette or inference.api_base_url")

    def _backend(self):
        inference = self.config["inference"]
        if inference["backend"] == "mock":
            plan = IdentityPlan.load(self.config.path("plan"))
            return mock_backend(int(inference["mock_seed"]), plan)
        cmd = inference.get("backend_cmd")
        if not cmd:
            raise PipelineError("inference.backend_cmd required for sidecar backend")
        return SubprocessBackend(shlex.split(cmd), self.out / "sidecar-work")

    # -- stages ----------------------------------------------------------

    def stage_ingest(self) -> StageOutcome:
        dump = self.config.path("movie_dump")
        cassette = self.config.path("cassette")
        inputs = _digest_tree(dump)
        if cassette:
            inputs += _digest_tree(cassette)

        def action(stage_dir: Path) -> None:
            ingest_catalog(
                dump,
                self._client(),
                stage_dir,
                min_votes=int(self.config["ingest"]["min_votes"]),
                exclude_animated=bool(self.config["ingest"]["exclude_animated"]),
                retry=RetryPolicy(),
            )

        return self._run_stage("ingest", inputs, self.config.subset("ingest"), action)

    def stage_dedup(self) -> StageOutcome:
        ingest_dir = self._stage_dir("ingest")
        posters = read_posters(ingest_dir / "posters.jsonl")
        inputs = [ingest_dir / "posters.jsonl"] + [ingest_dir / p.image_path for p in posters]

        def action(stage_dir: Path) -> None:
            threshold = int(self.config["dedup"]["threshold"])
            hashed = hash_posters(posters, root=ingest_dir)
            by_movie: dict[str, list] = {}
            for ref, bits in hashed:
                by_movie.setdefault(ref.movie_id, []).append((ref, bits))
            kept_all = []
            clusters_all = []
            for movie_id in sorted(by_movie):
                kept, clusters = dedup_posters(by_movie[movie_id], threshold=threshold)
                kept_all.extend(kept)
                clusters_all.extend(clusters)
            hash_by_id = {ref.poster_id: bits for ref, bits in hashed}
            write_jsonl(
                stage_dir / "posters.hashed.jsonl",
                ({**ref.to_json(), "dhash": dhash_hex(bits)} for ref, bits in hashed),
            )
            write_jsonl(stage_dir / "clusters.jsonl", (c.to_json() for c in clusters_all))
            write_jsonl(
                stage_dir / "kept.jsonl",
                ({**ref.to_json(), "dhash": dhash_hex(hash_by_id[ref.poster_id])} for ref in kept_all),
            )

        return self._run_stage("dedup", inputs, self.config.subset("dedup"), action)

    def stage_grayscale(self) -> StageOutcome:
        ingest_dir = self._stage_dir("ingest")
        actors = read_actors(ingest_dir / "actors.jsonl")
        inputs = [ingest_dir / "actors.jsonl"] + [
            ingest_dir / path for actor in actors for path in actor.image_paths
        ]

        def action(stage_dir: Path) -> None:
            tolerance = float(self.config["grayscale"]["tolerance"])
            filtered = []
            dropped = 0
            for actor in actors:
                keep = tuple(
                    path for path in actor.image_paths if not is_grayscale(ingest_dir / path, tolerance)
                )
                dropped += len(actor.image_paths) - len(keep)
                filtered.append(ActorProfileRaw(actor_id=actor.actor_id, name=actor.name, image_paths=keep))
            write_jsonl(stage_dir / "actors.filtered.jsonl", (a.to_json() for a in filtered))
            stats = {
                "actors": len(filtered),
                "images_before": sum(len(a.image_paths) for a in actors),
                "images_after": sum(len(a.image_paths) for a in filtered),
                "grayscale_dropped": dropped,
            }
            (stage_dir / "stats.json").write_text(json.dumps(stats, indent=1, sort_keys=True) + "\n", "utf-8")

        return self._run_stage("grayscale", inputs, self.config.subset("grayscale"), action)

    def _poster_manifest(self) -> list[ManifestEntry]:
        ingest_dir = self._stage_dir("ingest")
        entries = []
        for rec in read_jsonl(self._stage_dir("dedup") / "kept.jsonl"):
            entries.append(
                ManifestEntry(
                    image_ref=rec["poster_id"],
                    path=str(ingest_dir / rec["image_path"]),
                    width=int(rec["width"]),
                    height=int(rec["height"]),
                )
            )
        return entries

    def _actor_manifest(self) -> list[ManifestEntry]:
        ingest_dir = self._stage_dir("ingest")
        entries = []
        for rec in read_jsonl(self._stage_dir("grayscale") / "actors.filtered.jsonl"):
            for path in rec["image_paths"]:
                ordinal = Path(path).stem
                entries.append(
                    ManifestEntry(
                        image_ref=f"actor:{rec['actor_id']}:{ordinal}",
                        path=str(ingest_dir / path),
                    )
                )
        return entries

    def stage_infer_posters(self) -> StageOutcome:
        inputs = [self._stage_dir("dedup") / "kept.jsonl"]
        plan = self.config.path("plan")
        if plan:
            inputs.append(plan)

        def action(stage_dir: Path) -> None:
            manifest = self._poster_manifest()
            run_inference(
                manifest,
                self._backend(),
                (DETECT, EMBED),
                stage_dir / "bundle",
                shard_size=int(self.config["inference"]["shard_size"]),
            )

        return self._run_stage("infer_posters", inputs, self.config.subset("inference"), action)

    def stage_infer_actors(self) -> StageOutcome:
        inputs = [self._stage_dir("grayscale") / "actors.filtered.jsonl"]
        plan = self.config.path("plan")
        if plan:
            inputs.append(plan)

        def action(stage_dir: Path) -> None:
            manifest = self._actor_manifest()
            run_inference(
                manifest,
                self._backend(),
                ALL_TASKS,
                stage_dir / "bundle",
                shard_size=int(self.config["inference"]["shard_size"]),
            )

        return self._run_stage("infer_actors", inputs, self.config.subset("inference"), action)

    def stage_match(self) -> StageOutcome:
        inputs = [
            self._stage_dir("ingest") / "movies.jsonl",
            self._stage_dir("dedup") / "kept.jsonl",
            self._stage_dir("grayscale") / "actors.filtered.jsonl",
            self._stage_dir("infer_posters") / "bundle" / "embeddings.bin",
            self._stage_dir("infer_actors") / "bundle" / "embeddings.bin",
        ]

        def action(stage_dir: Path) -> None:
            floor = float(self.config["match"]["confidence_floor"])
            accept = float(self.config["match"]["accept_threshold"])
            scope = IndexScope.parse(self.config["match"]["scope"])

            movies = read_movies(self._stage_dir("ingest") / "movies.jsonl")
            poster_bundle = read_bundle(self._stage_dir("infer_posters") / "bundle")
            actor_bundle = read_bundle(self._stage_dir("infer_actors") / "bundle")
            actor_embs = collect_actor_embeddings(actor_bundle, floor)

            posters_by_movie: dict[str, list[str]] = {}
            for rec in read_jsonl(self._stage_dir("dedup") / "kept.jsonl"):
                posters_by_movie.setdefault(rec["movie_id"], []).append(rec["poster_id"])

            matches, omitted, coverage = match_catalog(
                movies, posters_by_movie, poster_bundle, actor_embs, scope, accept, floor
            )
            write_jsonl(stage_dir / "matches.jsonl", matches)
            write_jsonl(stage_dir / "omitted_actors.jsonl", omitted)
            (stage_dir / "coverage.json").write_text(json.dumps(coverage, indent=1, sort_keys=True) + "\n", "utf-8")

        return self._run_stage("match", inputs, self.config.subset("match"), action)

    def stage_vote(self) -> StageOutcome:
        inputs = [
            self._stage_dir("grayscale") / "actors.filtered.jsonl",
            self._stage_dir("infer_actors") / "bundle" / "scores.jsonl",
        ]

        def action(stage_dir: Path) -> None:
            floor = float(self.config["match"]["confidence_floor"])
            actor_bundle = read_bundle(self._stage_dir("infer_actors") / "bundle")
            records, coverage = vote_catalog(actor_bundle, floor)
            write_jsonl(stage_dir / "ethnicity.jsonl", records)
            (stage_dir / "coverage.json").write_text(json.dumps(coverage, indent=1, sort_keys=True) + "\n", "utf-8")

        return self._run_stage("vote", inputs, self.config.subset("match"), action)

    def stage_facts(self) -> StageOutcome:
        inputs = [
            self._stage_dir("ingest") / "movies.jsonl",
            self._stage_dir("dedup") / "kept.jsonl",
            self._stage_dir("match") / "matches.jsonl",
            self._stage_dir("vote") / "ethnicity.jsonl",
            self._stage_dir("infer_posters") / "bundle" / "detections.jsonl",
        ]

        def action(stage_dir: Path) -> None:
            movies = {m.movie_id: m for m in read_movies(self._stage_dir("ingest") / "movies.jsonl")}
            kept = {rec["poster_id"]: rec for rec in read_jsonl(self._stage_dir("dedup") / "kept.jsonl")}
            votes = {
                rec["actor_id"]: rec["voted"]
                for rec in read_jsonl(self._stage_dir("vote") / "ethnicity.jsonl")
            }
            poster_bundle = read_bundle(self._stage_dir("infer_posters") / "bundle")

            facts: list[FaceFact] = []
            matched_no_ethnicity = 0
            for rec in read_jsonl(self._stage_dir("match") / "matches.jsonl"):
                if rec["actor_id"] is None:
                    continue
                ethnicity = votes.get(rec["actor_id"])
                if not ethnicity:
                    matched_no_ethnicity += 1
                    continue
                movie = movies[rec["movie_id"]]
                poster = kept[rec["poster_id"]]
                face = poster_bundle.faces(rec["poster_id"])[rec["face_index"]]
                ranks = {actor_id: rank for actor_id, rank in movie.cast}
                facts.append(
                    FaceFact(
                        movie_id=movie.movie_id,
                        poster_id=rec["poster_id"],
                        face_index=int(rec["face_index"]),
                        actor_id=rec["actor_id"],
                        ethnicity=ethnicity,
                        bbox=tuple(face.bbox),
                        cast_rank=int(ranks.get(rec["actor_id"], 0)),
                        decade=movie.year // 10 * 10,
                        genres=movie.genres,
                        language_class=ENGLISH if movie.original_language == "en" else NON_ENGLISH,
                        poster_width=int(poster["width"]),
                        poster_height=int(poster["height"]),
                    )
                )
            write_facts(stage_dir / "facts.jsonl", facts)
            movies_with_facts = {f.movie_id for f in facts}
            coverage = {
                "facts": len(facts),
                "matched_without_ethnicity": matched_no_ethnicity,
                "movies_total": len(movies),
                "movies_with_zero_matched_actors": len(set(movies) - movies_with_facts),
            }
            (stage_dir / "coverage.json").write_text(json.dumps(coverage, indent=1, sort_keys=True) + "\n", "utf-8")

        return self._run_stage("facts", inputs, self.config.subset("match"), action)

    def stage_analyze(self) -> StageOutcome:
        inputs = [self._stage_dir("facts") / "facts.jsonl"]
        census_path = self.config.path("census")
        if census_path:
            inputs.append(census_path)

        def action(stage_dir: Path) -> None:
            from .metrics import read_facts

            facts = read_facts(self._stage_dir("facts") / "facts.jsonl")
            language = self.config["analyze"]["language"]
            selected = filter_language(facts, language)
            tables, stats = compute_all(selected, max_rank=int(self.config["analyze"]["max_rank"]))

            coverage: dict[str, Any] = {"language": language, "facts_used": len(selected)}
            for stage, name in (("match", "coverage.json"), ("vote", "coverage.json"), ("facts", "coverage.json")):
                path = self._stage_dir(stage) / name
                if path.exists():
                    coverage[stage] = json.loads(path.read_text("utf-8"))
            poster_meta = self._stage_dir("infer_posters") / "bundle" / "bundle.json"
            if poster_meta.exists():
                meta = json.loads(poster_meta.read_text("utf-8"))
                coverage["poster_face_coverage"] = meta.get("face_coverage")
            write_all(tables, stats, stage_dir, coverage)

            census_rows = load_census_csv(census_path) if census_path else bundled_census()
            census = map_census_categories(census_rows)
            from .demographics import parity_by_decade

            freq = tables["frequency_by_decade"]
            decade_fractions = {
                int(decade): {cat: values[cat] for cat in freq.columns if cat != "n_movies"}
                for decade, values in freq.rows
            }
            records = parity_by_decade(decade_fractions, census, self.config["inference"]["ethnicity_model"])
            write_jsonl(stage_dir / "parity_by_decade.jsonl", records)

        return self._run_stage("analyze", inputs, self.config.subset("analyze", "inference"), action)

    def stage_report(self) -> StageOutcome:
        metrics_dir = self._stage_dir("analyze")
        inputs = _digest_tree(metrics_dir)

        def action(stage_dir: Path) -> None:
            report_mod.render_all(metrics_dir, stage_dir)

        return self._run_stage("report", inputs, {}, action)

    # -- driver ----------------------------------------------------------

    def run(self) -> list[StageOutcome]:
        with PipelineLock(self.out):
            outcomes = [
                self.stage_ingest(),
                self.stage_dedup(),
                self.stage_grayscale(),
                self.stage_infer_posters(),
                self.stage_infer_actors(),
                self.stage_match(),
                self.stage_vote(),
                self.stage_facts(),
                self.stage_analyze(),
                self.stage_report(),
            ]
        return outcomes


def run_pipeline(config: PipelineConfig) -> list[StageOutcome]:
    return Pipeline(config).run()
