"""Batch serving: manifest in, protocol-conformant bundle out."""

from __future__ import annotations

import os

from . import SidecarError
from .models import BuiltinProvider, load_image
from .protocol import BundleWriter, read_manifest

VALID_TASKS = ("detect", "embed", "ethnicity")


def serve_batch(
    manifest_path: str | os.PathLike[str],
    tasks: tuple[str, ...],
    out_dir: str | os.PathLike[str],
    provider: BuiltinProvider,
) -> None:
    """Process every manifest image and write the bundle atomically.

    Any failure raises before the output directory exists, so a nonzero
    exit never leaves partial files behind.
    """
    for task in tasks:
        if task not in VALID_TASKS:
            raise SidecarError(f"unknown task {task!r}; expected subset of {','.join(VALID_TASKS)}")
    if not tasks:
        raise SidecarError("no tasks requested")

    entries = read_manifest(manifest_path)
    writer = BundleWriter(backend=f"postersidecar/{provider.name}", tasks=tasks)
    for entry in entries:
        rgb = load_image(entry.path)
        height, width = rgb.shape[:2]
        faces = provider.detect(rgb) if "detect" in tasks else []
        writer.add_image(entry.image_ref, width, height, faces)
        for face_index, (bbox, _confidence) in enumerate(faces):
            if "embed" in tasks:
                writer.add_embedding(entry.image_ref, face_index, provider.embed(rgb, bbox))
            if "ethnicity" in tasks:
                writer.add_scores(
                    entry.image_ref,
                    face_index,
                    provider.ethnicity_model,
                    provider.ethnicity_scores(rgb, bbox),
                )
    writer.write(out_dir)
