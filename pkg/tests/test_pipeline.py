import json
import os

import pytest
import yaml

from posterlens.catalog import read_jsonl
from posterlens.identity import MatchResult, evaluate_matching
from posterlens.metrics import METRIC_FILES
from posterlens.pipeline import (
    PipelineConfig,
    PipelineError,
    PipelineLocked,
    Pipeline,
    run_pipeline,
)
from posterlens.synthcorpus import generate_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    info = generate_corpus(root, n_movies=4, seed=13)
    return info


def config_for(corpus, out_dir, **overrides):
    tree = {
        "paths": {
            "movie_dump": str(corpus.root / "dump"),
            "cassette": str(corpus.root / "cassette"),
            "out": str(out_dir),
            "plan": str(corpus.root / "plan.json"),
        }
    }
    for section, values in overrides.items():
        tree.setdefault(section, {}).update(values)
    return PipelineConfig.load(overrides=tree, environ={})


def read_truth(corpus):
    truth = {}
    for rec in read_jsonl(corpus.root / "truth.jsonl"):
        truth[(rec["poster_id"], int(rec["face_index"]))] = rec.get("actor_id")
    return truth


class TestConfig:
    def test_defaults_have_spec_values(self):
        cfg = PipelineConfig.load(environ={})
        assert cfg["dedup"]["threshold"] == 16
        assert cfg["grayscale"]["tolerance"] == 10.0
        assert cfg["match"]["accept_threshold"] == 1.0
        assert cfg["match"]["confidence_floor"] == 0.9
        assert cfg["match"]["scope"] == "whole"
        assert cfg["ingest"]["min_votes"] == 1000
        assert cfg["inference"]["shard_size"] == 512

    def test_yaml_file_and_env_override(self, tmp_path):
        cfg_file = tmp_path / "run.yaml"
        cfg_file.write_text(yaml.safe_dump({"dedup": {"threshold": 8}}))
        cfg = PipelineConfig.load(cfg_file, environ={"POSTERLENS_DEDUP__THRESHOLD": "4"})
        assert cfg["dedup"]["threshold"] == 4

    def test_validation_requires_paths(self):
        with pytest.raises(PipelineError):
            PipelineConfig.load(environ={}).validate()


class TestPipelineRun:
    def test_full_run_emits_all_metric_csvs(self, corpus, tmp_path):
        out = tmp_path / "out"
        outcomes = run_pipeline(config_for(corpus, out))
        assert all(o.status == "ran" for o in outcomes)
        for name in METRIC_FILES:
            assert (out / "analyze" / name).exists(), name
        assert (out / "analyze" / "coverage.json").exists()
        assert (out / "run_manifest.json").exists()
        plots = list((out / "report").glob("*.svg"))
        assert len(plots) >= 7

    def test_matches_agree_with_planted_truth(self, corpus, tmp_path):
        out = tmp_path / "out"
        run_pipeline(config_for(corpus, out))
        truth = read_truth(corpus)
        matches = [
            MatchResult(
                poster_id=rec["poster_id"],
                face_index=rec["face_index"],
                actor_id=rec["actor_id"],
                distance=rec["distance"] if rec["distance"] is not None else float("inf"),
            )
            for rec in read_jsonl(out / "match" / "matches.jsonl")
        ]
        report = evaluate_matching(matches, truth)
        assert report.verification == 1.0
        assert report.identification == pytest.approx(corpus.planted_identification, abs=0.02)

    def test_second_run_skips_everything(self, corpus, tmp_path):
        out = tmp_path / "out"
        cfg = config_for(corpus, out)
        run_pipeline(cfg)
        before = {p: p.read_bytes() for p in (out / "analyze").iterdir()}
        outcomes = run_pipeline(config_for(corpus, out))
        assert all(o.status == "skipped" for o in outcomes), [(o.name, o.status) for o in outcomes]
        after = {p: p.read_bytes() for p in (out / "analyze").iterdir()}
        assert before == after

    def test_threshold_change_reruns_dedup_not_ingest(self, corpus, tmp_path):
        out = tmp_path / "out"
        run_pipeline(config_for(corpus, out))
        outcomes = run_pipeline(config_for(corpus, out, dedup={"threshold": 2}))
        status = {o.name: o.status for o in outcomes}
        assert status["ingest"] == "skipped"
        assert status["dedup"] == "ran"
        assert status["infer_posters"] == "ran"
        assert status["match"] == "ran"
        assert status["analyze"] == "ran"
        # threshold 2 keeps every variant poster (variants sit 3+ bits apart)
        kept = list(read_jsonl(out / "dedup" / "kept.jsonl"))
        movies = {m.movie_id for m in corpus.movies}
        per_movie = sum(1 for rec in kept if rec["movie_id"] in movies)
        assert per_movie == sum(len(m.poster_ids) for m in corpus.movies)

    def test_two_clean_runs_byte_identical_csvs(self, corpus, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        run_pipeline(config_for(corpus, out_a))
        run_pipeline(config_for(corpus, out_b))
        for name in [*METRIC_FILES, "coverage.json", "parity_by_decade.jsonl"]:
            assert (out_a / "analyze" / name).read_bytes() == (out_b / "analyze" / name).read_bytes(), name
        for name in ["movies.jsonl", "posters.jsonl", "actors.jsonl"]:
            assert (out_a / "ingest" / name).read_bytes() == (out_b / "ingest" / name).read_bytes(), name

    def test_lock_blocks_concurrent_runs(self, corpus, tmp_path):
        out = tmp_path / "out"
        out.mkdir()
        (out / ".posterlens.lock").write_text("12345")
        with pytest.raises(PipelineLocked):
            run_pipeline(config_for(corpus, out))

    def test_reject_movies_filtered_during_ingest(self, corpus, tmp_path):
        out = tmp_path / "out"
        run_pipeline(config_for(corpus, out))
        movie_ids = {rec["movie_id"] for rec in read_jsonl(out / "ingest" / "movies.jsonl")}
        assert "tt9901" not in movie_ids  # animated
        assert "tt9902" not in movie_ids  # below vote floor
        assert len(movie_ids) == len(corpus.movies)

    def test_grayscale_images_dropped(self, corpus, tmp_path):
        out = tmp_path / "out"
        run_pipeline(config_for(corpus, out))
        stats = json.loads((out / "grayscale" / "stats.json").read_text())
        assert stats["images_before"] >= stats["images_after"]
        filtered = {rec["actor_id"]: rec["image_paths"] for rec in read_jsonl(out / "grayscale" / "actors.filtered.jsonl")}
        expect_color = {a: n for a, n in corpus.actor_images.items() if a in filtered}
        got_color = {a: len(paths) for a, paths in filtered.items()}
        assert got_color == expect_color
