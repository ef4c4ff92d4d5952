import gzip
import io

import pytest
from PIL import Image

from posterlens.catalog import IMDB_MAIN, TMDB, MovieRecord, RejectsLedger
from posterlens.ingestion import (
    ActorAsset,
    CassetteClient,
    ClientError,
    CountingClient,
    FetchCache,
    FetchLedger,
    MetadataClient,
    MovieDetails,
    PosterAsset,
    RateLimiter,
    RecordingClient,
    RetryPolicy,
    enrich_movies,
    fetch_actor_profiles,
    fetch_posters,
    filter_movies,
    ingest_catalog,
    load_movie_dump,
)


def png_bytes(color=(200, 30, 40), size=(20, 30)):
    img = Image.new("RGB", size, color)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def movie(movie_id="m1", votes=5000, animated=False, year=1999, cast=()):
    genres = {"Animation", "Action"} if animated else {"Action"}
    return MovieRecord(
        movie_id=movie_id,
        title=f"title {movie_id}",
        year=year,
        genres=frozenset(genres),
        is_animated=animated,
        num_votes=votes,
        avg_rating=6.5,
        original_language="en",
        cast=tuple(cast),
    )


class FakeClient(MetadataClient):
    """In-memory source of truth for tests."""

    def __init__(self):
        self.movies = {}   # movie_id -> {"imdb": PosterAsset|None, "tmdb": [...], "details": MovieDetails}
        self.actors = {}   # actor_id -> ActorAsset

    def add_movie(self, movie_id, n_tmdb=2, with_imdb=True, cast=(), language="en"):
        imdb = (
            PosterAsset(f"{movie_id}_main", IMDB_MAIN, 20, 30, png_bytes((10, 90, 30)))
            if with_imdb
            else None
        )
        tmdb = [
            PosterAsset(f"{movie_id}_t{i}", TMDB, 20, 30, png_bytes((10 + i, 20, 200)))
            for i in range(n_tmdb)
        ]
        self.movies[movie_id] = {
            "imdb": imdb,
            "tmdb": tmdb,
            "details": MovieDetails(original_language=language, cast=tuple(cast)),
        }

    def add_actor(self, actor_id, n_images):
        self.actors[actor_id] = ActorAsset(
            actor_id=actor_id,
            name=f"Actor {actor_id}",
            images=tuple(png_bytes((i * 9 % 255, 120, 80)) for i in range(n_images)),
        )

    def imdb_main_poster(self, movie_id):
        entry = self.movies.get(movie_id)
        return entry["imdb"] if entry else None

    def tmdb_posters(self, movie_id):
        entry = self.movies.get(movie_id)
        return list(entry["tmdb"]) if entry else []

    def movie_details(self, movie_id):
        entry = self.movies.get(movie_id)
        return entry["details"] if entry else None

    def actor_profile(self, actor_id):
        return self.actors.get(actor_id)


class OfflineClient(MetadataClient):
    """Raises on any call: proves warm paths never touch the client."""

    def imdb_main_poster(self, movie_id):
        raise AssertionError("network disabled")

    def tmdb_posters(self, movie_id):
        raise AssertionError("network disabled")

    def movie_details(self, movie_id):
        raise AssertionError("network disabled")

    def actor_profile(self, actor_id):
        raise AssertionError("network disabled")


def quick_retry():
    return RetryPolicy(attempts=3, base_delay=0.0, max_delay=0.0, sleeper=lambda _t: None)


class TestFilterMovies:
    def test_fixture_of_five(self):
        movies = [
            movie("m1", votes=10),
            movie("m2", votes=999),
            movie("m3", votes=1000),
            movie("m4", votes=5000, animated=True),
            movie("m5", votes=5000),
        ]
        kept = list(filter_movies(movies, min_votes=1000, exclude_animated=True))
        assert [m.movie_id for m in kept] == ["m3", "m5"]

    def test_noop_filter_is_identity(self):
        movies = [movie("m1", votes=0), movie("m2", votes=10, animated=True)]
        kept = list(filter_movies(movies, min_votes=0, exclude_animated=False))
        assert kept == movies

    def test_idempotent(self):
        movies = [movie(f"m{i}", votes=100 * i) for i in range(10)]
        once = list(filter_movies(movies, min_votes=300, exclude_animated=True))
        twice = list(filter_movies(once, min_votes=300, exclude_animated=True))
        assert once == twice

    def test_malformed_record_skipped_into_rejects(self):
        bad = movie("bad", year=1200)  # out of range
        rejects = RejectsLedger()
        kept = list(filter_movies([movie("ok"), bad, movie("ok2")], 0, False, rejects))
        assert [m.movie_id for m in kept] == ["ok", "ok2"]
        assert len(rejects) == 1
        assert rejects.entries[0]["key"] == "bad"

    def test_negative_min_votes_rejected(self):
        with pytest.raises(ValueError):
            list(filter_movies([], min_votes=-1))


class TestMovieDump:
    BASICS = (
        "tconst\ttitleType\tprimaryTitle\toriginalTitle\tisAdult\tstartYear\tendYear\truntimeMinutes\tgenres\n"
        "tt001\tmovie\tAlpha\tAlpha\t0\t1994\t\\N\t100\tAction,Crime\n"
        "tt002\tmovie\tBeta\tBeta\t0\t\\N\t\\N\t90\tDrama\n"          # missing year -> reject
        "tt003\tshort\tGamma\tGamma\t0\t2000\t\\N\t10\tDrama\n"       # not a movie -> skip
        "tt004\tmovie\tDelta\tDelta\t0\t2010\t\\N\t95\tAnimation\n"
        "tt005\tmovie\tEpsilon\tEpsilon\t0\t2015\t\\N\t95\t\\N\n"
    )
    RATINGS = "tconst\taverageRating\tnumVotes\ntt001\t7.4\t1500\ntt004\t6.0\t2500\n"

    def write_dump(self, root, gz=False):
        if gz:
            (root / "title.basics.tsv.gz").write_bytes(gzip.compress(self.BASICS.encode()))
            (root / "title.ratings.tsv.gz").write_bytes(gzip.compress(self.RATINGS.encode()))
        else:
            (root / "title.basics.tsv").write_text(self.BASICS)
            (root / "title.ratings.tsv").write_text(self.RATINGS)

    def test_join_and_rejects(self, tmp_path):
        self.write_dump(tmp_path)
        rejects = RejectsLedger()
        movies = {m.movie_id: m for m in load_movie_dump(tmp_path, rejects)}
        assert set(movies) == {"tt001", "tt004", "tt005"}
        assert movies["tt001"].num_votes == 1500
        assert movies["tt001"].avg_rating == 7.4
        assert movies["tt004"].is_animated
        assert movies["tt005"].genres == frozenset()
        assert movies["tt005"].num_votes == 0  # no ratings row
        assert any(e["key"] == "tt002" for e in rejects.entries)

    def test_gzip_accepted(self, tmp_path):
        self.write_dump(tmp_path, gz=True)
        movies = list(load_movie_dump(tmp_path))
        assert {m.movie_id for m in movies} == {"tt001", "tt004", "tt005"}


class TestFetchPosters:
    def test_union_imdb_first(self, tmp_path):
        client = FakeClient()
        client.add_movie("m1", n_tmdb=3, with_imdb=True)
        refs = fetch_posters(movie("m1"), client, FetchCache(tmp_path), quick_retry())
        assert len(refs) == 4
        assert refs[0].source == IMDB_MAIN
        assert all(r.source == TMDB for r in refs[1:])
        for ref in refs:
            assert (tmp_path / ref.image_path).exists()

    def test_absent_movie_empty_plus_ledger(self, tmp_path):
        client = FakeClient()
        failures = FetchLedger()
        refs = fetch_posters(movie("ghost"), client, FetchCache(tmp_path), quick_retry(), failures)
        assert refs == []
        assert len(failures) == 1

    def test_cached_replay_zero_network_calls(self, tmp_path):
        client = FakeClient()
        client.add_movie("m1", n_tmdb=2)
        cache = FetchCache(tmp_path)
        counting = CountingClient(client)
        first = fetch_posters(movie("m1"), counting, cache, quick_retry())
        calls_cold = counting.calls
        assert calls_cold > 0
        second = fetch_posters(movie("m1"), OfflineClient(), cache, quick_retry())
        assert second == first

    def test_flaky_client_retried(self, tmp_path):
        client = FakeClient()
        client.add_movie("m1", n_tmdb=1)

        class Flaky(CountingClient):
            def tmdb_posters(self, movie_id):
                self.calls += 1
                if self.calls < 3:
                    raise ClientError("flap")
                return self.inner.tmdb_posters(movie_id)

        flaky = Flaky(client)
        refs = fetch_posters(movie("m1"), flaky, FetchCache(tmp_path), quick_retry())
        assert len(refs) == 2  # imdb main + 1 tmdb

    def test_persistent_failure_lands_in_ledger(self, tmp_path):
        class Dead(FakeClient):
            def tmdb_posters(self, movie_id):
                raise ClientError("down")

        client = Dead()
        client.add_movie("m1", n_tmdb=2)
        failures = FetchLedger()
        refs = fetch_posters(movie("m1"), client, FetchCache(tmp_path), quick_retry(), failures)
        assert [r.source for r in refs] == [IMDB_MAIN]
        assert len(failures) == 1
        assert "TMDB" in failures.entries[0]["reason"]


class TestFetchActors:
    def test_profile_sizes_capped_at_three(self, tmp_path):
        client = FakeClient()
        for actor_id, n in [("a0", 0), ("a1", 1), ("a3", 3), ("a5", 5)]:
            client.add_actor(actor_id, n)
        profiles = fetch_actor_profiles(["a0", "a1", "a3", "a5"], client, FetchCache(tmp_path), quick_retry())
        sizes = {p.actor_id: len(p.image_paths) for p in profiles}
        assert sizes == {"a0": 0, "a1": 1, "a3": 3, "a5": 3}

    def test_unknown_actor_kept_with_empty_images(self, tmp_path):
        profiles = fetch_actor_profiles(["nobody"], FakeClient(), FetchCache(tmp_path), quick_retry())
        assert profiles[0].actor_id == "nobody"
        assert profiles[0].image_paths == ()

    def test_warm_fetch_offline(self, tmp_path):
        client = FakeClient()
        client.add_actor("a1", 2)
        cache = FetchCache(tmp_path)
        first = fetch_actor_profiles(["a1"], client, cache, quick_retry())
        second = fetch_actor_profiles(["a1"], OfflineClient(), cache, quick_retry())
        assert first == second


class TestEnrich:
    def test_cast_and_language_filled(self, tmp_path):
        client = FakeClient()
        client.add_movie("m1", cast=[("a2", 2), ("a1", 1)], language="fr")
        out = list(enrich_movies([movie("m1")], client, FetchCache(tmp_path), quick_retry()))
        assert out[0].original_language == "fr"
        assert out[0].cast == (("a1", 1), ("a2", 2))

    def test_bad_ranks_reset_and_ledgered(self, tmp_path):
        client = FakeClient()
        client.add_movie("m1", cast=[("a1", 1), ("a2", 3)])  # gap -> invalid
        failures = FetchLedger()
        out = list(enrich_movies([movie("m1")], client, FetchCache(tmp_path), quick_retry(), failures))
        assert out[0].cast == ()
        assert len(failures) == 1


class TestCassette:
    def test_record_then_replay_matches_live(self, tmp_path):
        live = FakeClient()
        live.add_movie("m1", n_tmdb=2, cast=[("a1", 1)], language="en")
        live.add_actor("a1", 2)
        recorder = RecordingClient(live, tmp_path / "cassette")
        # drive every call once through the recorder
        recorder.movie_details("m1")
        recorder.imdb_main_poster("m1")
        recorder.tmdb_posters("m1")
        recorder.actor_profile("a1")

        replay = CassetteClient(tmp_path / "cassette")
        assert replay.movie_details("m1") == live.movie_details("m1")
        assert replay.imdb_main_poster("m1") == live.imdb_main_poster("m1")
        assert replay.tmdb_posters("m1") == live.tmdb_posters("m1")
        assert replay.actor_profile("a1") == live.actor_profile("a1")
        assert replay.movie_details("missing") is None
        assert replay.tmdb_posters("missing") == []


class TestRateLimiter:
    def test_spacing_enforced(self):
        clock = {"t": 0.0}
        sleeps = []

        def fake_clock():
            return clock["t"]

        def fake_sleep(d):
            sleeps.append(d)
            clock["t"] += d

        limiter = RateLimiter(2.0, clock=fake_clock, sleeper=fake_sleep)
        for _ in range(3):
            limiter.wait()
        # 2 rps: back-to-back calls each wait 0.5s, landing at t=0, 0.5, 1.0
        assert sleeps == [0.5, 0.5]


class TestIngestCatalog:
    def make_dump(self, root):
        (root / "title.basics.tsv").write_text(
            "tconst\ttitleType\tprimaryTitle\toriginalTitle\tisAdult\tstartYear\tendYear\truntimeMinutes\tgenres\n"
            "tt1\tmovie\tOne\tOne\t0\t1994\t\\N\t100\tAction\n"
            "tt2\tmovie\tTwo\tTwo\t0\t2004\t\\N\t100\tDrama\n"
            "tt3\tmovie\tToon\tToon\t0\t2004\t\\N\t100\tAnimation\n"
        )
        (root / "title.ratings.tsv").write_text(
            "tconst\taverageRating\tnumVotes\ntt1\t7.0\t2000\ntt2\t6.0\t3000\ntt3\t8.0\t9000\n"
        )

    def test_end_to_end_and_warm_identical(self, tmp_path):
        dump = tmp_path / "dump"
        dump.mkdir()
        self.make_dump(dump)
        client = FakeClient()
        client.add_movie("tt1", n_tmdb=2, cast=[("a1", 1), ("a2", 2)])
        client.add_movie("tt2", n_tmdb=1, with_imdb=False, cast=[("a1", 1)], language="fr")
        client.add_actor("a1", 3)
        client.add_actor("a2", 0)

        out = tmp_path / "out"
        result = ingest_catalog(dump, client, out, min_votes=1000, exclude_animated=True, retry=quick_retry())
        assert [m.movie_id for m in result.movies] == ["tt1", "tt2"]
        assert result.per_source_posters == {IMDB_MAIN: 1, TMDB: 3}
        cold = {p.name: p.read_bytes() for p in out.glob("*.jsonl")}

        result2 = ingest_catalog(dump, OfflineClient(), out, min_votes=1000, exclude_animated=True,
                                 retry=quick_retry())
        warm = {p.name: p.read_bytes() for p in out.glob("*.jsonl")}
        assert cold == warm
        assert [m.movie_id for m in result2.movies] == ["tt1", "tt2"]
