import math
import random

import numpy as np
import pytest

from posterlens.catalog import ActorProfileRaw
from posterlens.gateway import EMBED_DIM, EthnicityScores
from posterlens.identity import (
    ActorIndex,
    IndexScope,
    MatchResult,
    build_index,
    evaluate_matching,
    match_face,
    vote_ethnicity,
)

from oracles import vote_oracle


def unit(axis, dim=EMBED_DIM, sign=1.0):
    v = np.zeros(dim)
    v[axis] = sign
    return v


def profile(actor_id, n_images):
    return ActorProfileRaw(actor_id=actor_id, name=actor_id, image_paths=tuple(f"{actor_id}_{i}.png" for i in range(n_images)))


def four(asian, black, indian, white):
    return EthnicityScores("four", {"Asian": asian, "Black": black, "Indian": indian, "White": white})


class TestBuildIndex:
    def make_actors(self, n, images_each=2):
        actors = []
        for i in range(n):
            embs = [unit((i * 3 + j) % EMBED_DIM) for j in range(images_each)]
            actors.append((profile(f"a{i:02d}", images_each), embs))
        return actors

    def test_whole_cast_indexes_everyone(self):
        actors = self.make_actors(25)
        index = build_index(actors, IndexScope.whole_cast())
        assert len(index.distinct_actors) == 25
        assert len(index) == 50

    def test_top_k_restricts_to_rank(self):
        actors = self.make_actors(25)
        ranks = {f"a{i:02d}": i + 1 for i in range(25)}
        index = build_index(actors, IndexScope.top_k(10), ranks=ranks)
        assert len(index.distinct_actors) == 10
        assert index.distinct_actors == {f"a{i:02d}" for i in range(10)}

    def test_zero_image_actors_omitted_but_reported(self):
        actors = self.make_actors(4)
        actors[1] = (profile("a01", 0), [])
        actors[3] = (profile("a03", 0), [])
        index = build_index(actors, IndexScope.whole_cast())
        assert len(index.distinct_actors) == 2
        assert set(index.omitted) == {"a01", "a03"}

    def test_unnormalized_embedding_rejected(self):
        actors = [(profile("a0", 1), [unit(0) * 2.0])]
        with pytest.raises(ValueError):
            build_index(actors, IndexScope.whole_cast())

    def test_top_k_requires_ranks(self):
        with pytest.raises(ValueError):
            build_index([], IndexScope.top_k(10))

    def test_scope_parse(self):
        assert IndexScope.parse("whole").kind == "whole"
        assert IndexScope.parse("top:10") == IndexScope.top_k(10)
        with pytest.raises(ValueError):
            IndexScope.parse("nearest")


class TestMatchFace:
    def test_exact_match_distance_zero(self):
        actors = [(profile("a0", 1), [unit(0)]), (profile("a1", 1), [unit(1)])]
        index = build_index(actors, IndexScope.whole_cast())
        res = match_face(unit(0), index, poster_id="p", face_index=0)
        assert res.actor_id == "a0"
        assert res.distance == 0.0

    def test_above_threshold_rejected(self):
        index = build_index([(profile("a0", 1), [unit(0)])], IndexScope.whole_cast())
        res = match_face(unit(5), index, accept_threshold=1.0)
        assert res.actor_id is None
        assert res.distance == pytest.approx(math.sqrt(2))

    def test_empty_index_returns_infinite_sentinel(self):
        index = ActorIndex(scope=IndexScope.whole_cast())
        res = match_face(unit(0), index)
        assert res.actor_id is None
        assert math.isinf(res.distance)

    def test_tie_breaks_by_actor_then_ordinal(self):
        shared = unit(3)
        actors = [(profile("zz", 1), [shared]), (profile("aa", 2), [unit(9), shared])]
        index = build_index(actors, IndexScope.whole_cast())
        res = match_face(shared, index)
        assert res.actor_id == "aa"

    def test_permutation_of_entries_does_not_change_result(self):
        rng = np.random.default_rng(0)
        actors = []
        for i in range(12):
            v = rng.standard_normal(EMBED_DIM)
            actors.append((profile(f"a{i:02d}", 1), [v / np.linalg.norm(v)]))
        probe = rng.standard_normal(EMBED_DIM)
        probe /= np.linalg.norm(probe)
        base = match_face(probe, build_index(actors, IndexScope.whole_cast()), accept_threshold=2.0)
        shuffler = random.Random(7)
        for _ in range(5):
            shuffled = actors[:]
            shuffler.shuffle(shuffled)
            res = match_face(probe, build_index(shuffled, IndexScope.whole_cast()), accept_threshold=2.0)
            assert res.actor_id == base.actor_id
            assert res.distance == base.distance

    def test_concurrent_queries_match_serial(self):
        from concurrent.futures import ThreadPoolExecutor

        rng = np.random.default_rng(7)
        actors = []
        for i in range(20):
            v = rng.standard_normal(EMBED_DIM)
            actors.append((profile(f"a{i:02d}", 1), [v / np.linalg.norm(v)]))
        index = build_index(actors, IndexScope.whole_cast())
        probes = []
        for _ in range(40):
            v = rng.standard_normal(EMBED_DIM)
            probes.append(v / np.linalg.norm(v))
        serial = [match_face(p, index, accept_threshold=2.0) for p in probes]
        with ThreadPoolExecutor(max_workers=8) as pool:
            parallel = list(pool.map(lambda p: match_face(p, index, accept_threshold=2.0), probes))
        assert [(m.actor_id, m.distance) for m in serial] == [(m.actor_id, m.distance) for m in parallel]

    def test_euclidean_rank_equals_cosine_rank(self):
        # d^2 = 2 - 2 cos holds to 1e-6 on random unit vectors
        rng = np.random.default_rng(13)
        for _ in range(50):
            a = rng.standard_normal(EMBED_DIM)
            b = rng.standard_normal(EMBED_DIM)
            a /= np.linalg.norm(a)
            b /= np.linalg.norm(b)
            d2 = float(np.sum((a - b) ** 2))
            cos = float(np.dot(a, b))
            assert abs(d2 - (2 - 2 * cos)) < 1e-6


class TestVoteEthnicity:
    def test_single_vector_is_its_own_vote(self):
        sc = four(0.1, 0.2, 0.3, 0.4)
        voted = vote_ethnicity([sc], actor_id="x")
        assert voted.voted == "White"
        assert voted.averaged_scores == dict(sc.scores)

    def test_two_vector_mean_by_hand(self):
        # (W .6, B .4) and (W .2, B .8) -> mean (W .4, B .6) -> Black
        a = four(0.0, 0.4, 0.0, 0.6)
        b = four(0.0, 0.8, 0.0, 0.2)
        voted = vote_ethnicity([a, b])
        assert voted.voted == "Black"
        assert voted.averaged_scores["Black"] == pytest.approx(0.6)
        assert voted.averaged_scores["White"] == pytest.approx(0.4)

    def test_three_identical_vectors_match_single(self):
        sc = four(0.25, 0.3, 0.05, 0.4)
        assert vote_ethnicity([sc, sc, sc]).voted == vote_ethnicity([sc]).voted

    def test_empty_list_is_unknown(self):
        assert vote_ethnicity([]) is None

    def test_mixed_models_rejected(self):
        sc7 = EthnicityScores(
            "seven",
            {
                "Black": 0.2,
                "East Asian": 0.1,
                "Indian": 0.1,
                "Latino-Hispanic": 0.1,
                "Middle Eastern": 0.1,
                "Southeast Asian": 0.1,
                "White": 0.3,
            },
        )
        with pytest.raises(ValueError):
            vote_ethnicity([four(0.25, 0.25, 0.25, 0.25), sc7])

    def test_tie_breaks_alphabetically(self):
        voted = vote_ethnicity([four(0.4, 0.4, 0.1, 0.1)])
        assert voted.voted == "Asian"

    def test_matches_exact_rational_oracle(self):
        rng = random.Random(123)
        cats = ["Asian", "Black", "Indian", "White"]
        for _ in range(300):
            triple = []
            for _ in range(rng.randint(1, 3)):
                raw = [rng.random() for _ in cats]
                total = sum(raw)
                triple.append(four(*(v / total for v in raw)))
            voted = vote_ethnicity(triple)
            oracle_avg, oracle_vote = vote_oracle([dict(sc.scores) for sc in triple])
            assert voted.voted == oracle_vote
            for cat in cats:
                assert voted.averaged_scores[cat] == float(oracle_avg[cat])

    def test_argmax_invariant_under_power_of_two_rescale(self):
        rng = random.Random(5)
        cats = ["Asian", "Black", "Indian", "White"]
        for _ in range(100):
            raw = [[rng.random() for _ in cats] for _ in range(3)]
            base = [four(*(v / sum(vec) for v in vec)) for vec in raw]
            scale = 2.0 ** rng.randint(-6, 6)
            scaled = [
                EthnicityScores("four", {c: v * scale for c, v in sc.scores.items()})
                for sc in base
            ]
            assert vote_ethnicity(base).voted == vote_ethnicity(scaled).voted


class TestEvaluateMatching:
    def test_counts_and_rates(self):
        truth = {("p", 0): "a", ("p", 1): "b", ("p", 2): None, ("p", 3): "c"}
        matches = [
            MatchResult("p", 0, "a", 0.1),   # accepted, correct
            MatchResult("p", 1, "x", 0.2),   # accepted, wrong
            MatchResult("p", 2, None, 1.4),  # rejected extra
            MatchResult("p", 3, None, 1.2),  # rejected cast face (miss)
        ]
        report = evaluate_matching(matches, truth)
        assert report.detected == 4
        assert report.accepted == 2
        assert report.correct == 1
        assert report.verification == 0.5
        assert report.identification == 0.5

    def test_zero_accepted_verification_undefined(self):
        report = evaluate_matching([MatchResult("p", 0, None, math.inf)], {("p", 0): "a"})
        assert report.verification is None
        assert report.to_json()["verification"] is None

    def test_closed_world_identification_100(self):
        truth = {(f"p{i}", 0): f"a{i}" for i in range(10)}
        matches = [MatchResult(f"p{i}", 0, f"a{i}", 0.05) for i in range(10)]
        report = evaluate_matching(matches, truth)
        assert report.identification == 1.0
        assert report.verification == 1.0
