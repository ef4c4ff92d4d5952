# Face matching and ethnicity voting on a planted corpus.
#
# The deterministic mock backend plants one identity per face: embeddings of
# the same identity sit within ~0.2 of each other, different identities sit
# ~1.4 apart. With the accept threshold at 1.0, cast faces always match and
# extras are always rejected, which reproduces the 100%-verification /
# 70%-identification structure end to end.

import tempfile
from pathlib import Path

from posterlens.gateway import ALL_TASKS, DETECT, EMBED, IdentityPlan, ManifestEntry, mock_backend, read_bundle, run_inference
from posterlens.identity import (
    IndexScope,
    MatchResult,
    collect_actor_embeddings,
    evaluate_matching,
    match_catalog,
    vote_ethnicity,
)
from posterlens.synthcorpus import generate_corpus

workdir = Path(tempfile.mkdtemp(prefix="posterlens_demo_"))
corpus = generate_corpus(workdir, n_movies=12, seed=3, n_variants=1, render_images=False, with_reject_movies=False)
plan = IdentityPlan.load(workdir / "plan.json")
print(f"{len(corpus.movies)} movies, {corpus.cast_faces} cast faces, {corpus.extra_faces} extras")

# Run the mock backend over actor headshots and posters.
backend = mock_backend(seed=99, identity_plan=plan)
actor_manifest = [ManifestEntry(image_ref=r, path="") for r in sorted(plan.faces) if r.startswith("actor:")]
poster_ids = {pid for m in corpus.movies for pid in m.poster_ids}
poster_manifest = [ManifestEntry(image_ref=r, path="", width=180, height=240) for r in sorted(plan.faces) if r in poster_ids]
actor_bundle = read_bundle(run_inference(actor_manifest, backend, ALL_TASKS, workdir / "b_actors"))
poster_bundle = read_bundle(run_inference(poster_manifest, backend, (DETECT, EMBED), workdir / "b_posters"))

# Per-movie exact nearest-neighbor matching against the whole cast list.
class MovieView:
    def __init__(self, cm):
        self.movie_id = cm.movie_id
        self.cast = cm.cast

matches, omitted, coverage = match_catalog(
    [MovieView(cm) for cm in corpus.movies],
    {cm.movie_id: list(cm.poster_ids) for cm in corpus.movies},
    poster_bundle,
    collect_actor_embeddings(actor_bundle),
    IndexScope.whole_cast(),
)
print("match coverage:", coverage)

results = [
    MatchResult(m["poster_id"], m["face_index"], m["actor_id"], m["distance"] or float("inf"))
    for m in matches
]
report = evaluate_matching(results, corpus.truth)
print(f"verification={report.verification:.3f} identification={report.identification:.3f}")

# Voting: average an actor's per-image score vectors, argmax wins.
sample_actor = corpus.movies[0].cast[0][0]
scores = [
    actor_bundle.scores_for(ref, 0)
    for ref in sorted(actor_bundle.detections)
    if ref.startswith(f"actor:{sample_actor}:")
]
voted = vote_ethnicity([s for s in scores if s], actor_id=sample_actor)
print(f"\nactor {sample_actor}: planted={corpus.actor_category[sample_actor]} voted={voted.voted}")
print("averaged scores:", {k: round(v, 4) for k, v in voted.averaged_scores.items()})
