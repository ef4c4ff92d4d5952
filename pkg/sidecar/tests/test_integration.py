"""The pipeline's subprocess adapter driving this sidecar end to end."""

import shutil
import sys

import pytest

from postersidecar.protocol import read_jsonl


def sidecar_command():
    exe = shutil.which("postersidecar")
    if exe:
        return [exe]
    return [sys.executable, "-m", "postersidecar.cli"]


def test_gateway_subprocess_backend_runs_sidecar(conformance_fixture, tmp_path):
    posterlens = pytest.importorskip("posterlens.gateway")

    manifest = [
        posterlens.ManifestEntry(image_ref=rec["image_ref"], path=rec["path"])
        for rec in read_jsonl(conformance_fixture / "manifest.jsonl")
    ]
    backend = posterlens.SubprocessBackend(sidecar_command(), tmp_path / "work")
    out = posterlens.run_inference(
        manifest,
        backend,
        ("detect", "embed", "ethnicity"),
        tmp_path / "bundle",
        shard_size=2,  # force multiple sidecar invocations
    )
    assert posterlens.validate_bundle(out, manifest) == []
    bundle = posterlens.read_bundle(out)
    assert len(bundle.detections) == 5
    assert bundle.faces("img_3.png") == []
    assert bundle.meta["faces"] == 4
    assert bundle.meta["failed_shards"] == 0
