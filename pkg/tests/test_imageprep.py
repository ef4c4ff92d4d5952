import random

import numpy as np
import pytest
from PIL import Image

from posterlens.catalog import IMDB_MAIN, TMDB, PosterRef
from posterlens.imageprep import (
    DecodeError,
    channel_mse,
    compute_dhash,
    dedup_posters,
    dhash_from_hex,
    dhash_hex,
    hamming,
    is_grayscale,
)

from oracles import dhash_oracle, hamming_oracle


def ramp_9x8():
    """9x8 image whose every pixel strictly increases left to right."""
    arr = np.zeros((8, 9, 3), dtype=np.uint8)
    for r in range(8):
        for c in range(9):
            arr[r, c] = 10 + 20 * c
    return arr


def poster(pid, source=TMDB, movie="m1"):
    return PosterRef(poster_id=pid, movie_id=movie, source=source, image_path=f"{pid}.png", width=100, height=150)


class TestDhash:
    def test_identical_images_hash_identically(self):
        rng = np.random.default_rng(0)
        arr = rng.integers(0, 256, size=(40, 30, 3), dtype=np.uint8)
        assert compute_dhash(arr) == compute_dhash(arr.copy())
        assert hamming(compute_dhash(arr), compute_dhash(arr)) == 0

    def test_solid_color_hashes_to_zero(self):
        for color in [(0, 0, 0), (255, 255, 255), (10, 200, 37)]:
            arr = np.zeros((32, 24, 3), dtype=np.uint8)
            arr[:, :] = color
            assert compute_dhash(arr) == 0

    def test_increasing_ramp_sets_all_bits(self):
        assert compute_dhash(ramp_9x8()) == 0xFFFFFFFFFFFFFFFF

    def test_matches_pixel_level_oracle_on_random_images(self):
        rng = np.random.default_rng(1234)
        for _ in range(20):
            h = int(rng.integers(1, 40))
            w = int(rng.integers(1, 40))
            arr = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
            rows = [[tuple(int(v) for v in arr[r, c]) for c in range(w)] for r in range(h)]
            assert compute_dhash(arr) == dhash_oracle(rows)

    def test_lossless_reencode_preserves_hash(self, tmp_path):
        rng = np.random.default_rng(7)
        arr = rng.integers(0, 256, size=(33, 21, 3), dtype=np.uint8)
        png = tmp_path / "a.png"
        bmp = tmp_path / "a.bmp"
        Image.fromarray(arr).save(png)
        Image.fromarray(arr).save(bmp)
        assert compute_dhash(png) == compute_dhash(bmp) == compute_dhash(arr)

    def test_single_pixel_image(self):
        arr = np.full((1, 1, 3), 99, dtype=np.uint8)
        assert compute_dhash(arr) == 0

    def test_undecodable_file_raises_with_path(self, tmp_path):
        bogus = tmp_path / "not_an_image.png"
        bogus.write_bytes(b"definitely not a png")
        with pytest.raises(DecodeError) as err:
            compute_dhash(bogus)
        assert str(bogus) in str(err.value)

    def test_hex_roundtrip(self):
        for bits in [0, 1, 0xFFFFFFFFFFFFFFFF, 0x0123456789ABCDEF]:
            assert dhash_from_hex(dhash_hex(bits)) == bits
            assert len(dhash_hex(bits)) == 16


class TestHamming:
    def test_identity(self):
        assert hamming(0xDEADBEEF, 0xDEADBEEF) == 0

    def test_complement(self):
        h = 0x0123456789ABCDEF
        assert hamming(h, ~h & 0xFFFFFFFFFFFFFFFF) == 64

    def test_two_differing_bits(self):
        assert hamming(0b1010, 0b0110) == 2

    def test_symmetric_and_matches_oracle(self):
        rng = random.Random(42)
        for _ in range(200):
            a = rng.getrandbits(64)
            b = rng.getrandbits(64)
            assert hamming(a, b) == hamming(b, a) == hamming_oracle(a, b)


class TestDedup:
    def test_single_linkage_chain_merges(self):
        # pairwise distances {0, 3, 3}: all in one cluster
        refs = [poster("p1"), poster("p2"), poster("p3")]
        hashes = [0b0, 0b0, 0b111]
        kept, clusters = dedup_posters(list(zip(refs, hashes)), threshold=16)
        assert len(clusters) == 1
        assert len(kept) == 1
        assert kept[0].poster_id == "p1"

    def test_boundary_distance_is_excluded(self):
        # distance exactly 16 with threshold 16 stays separate (strict <)
        a = 0
        b = (1 << 16) - 1
        assert hamming(a, b) == 16
        kept, clusters = dedup_posters([(poster("p1"), a), (poster("p2"), b)], threshold=16)
        assert len(clusters) == 2
        assert {k.poster_id for k in kept} == {"p1", "p2"}

    def test_singleton(self):
        kept, clusters = dedup_posters([(poster("p9"), 123)], threshold=16)
        assert [k.poster_id for k in kept] == ["p9"]
        assert clusters[0].representative == "p9"
        assert clusters[0].members == ("p9",)

    def test_empty_input(self):
        kept, clusters = dedup_posters([], threshold=16)
        assert kept == [] and clusters == []

    def test_imdb_main_wins_representative(self):
        refs = [poster("zz", source=IMDB_MAIN), poster("aa", source=TMDB)]
        kept, clusters = dedup_posters([(refs[0], 0), (refs[1], 1)], threshold=16)
        assert kept[0].poster_id == "zz"
        assert clusters[0].representative == "zz"

    def test_permutation_stability(self):
        rng = random.Random(99)
        refs = [poster(f"p{i:02d}") for i in range(12)]
        hashes = [rng.getrandbits(64) for _ in range(12)]
        pairs = list(zip(refs, hashes))
        base_kept, base_clusters = dedup_posters(pairs, threshold=20)
        for _ in range(10):
            shuffled = pairs[:]
            rng.shuffle(shuffled)
            kept, clusters = dedup_posters(shuffled, threshold=20)
            assert [k.poster_id for k in kept] == [k.poster_id for k in base_kept]
            assert clusters == base_clusters

    def test_threshold_zero_keeps_all_but_identical_hashes(self):
        pairs = [(poster("p1"), 5), (poster("p2"), 5), (poster("p3"), 4)]
        kept, clusters = dedup_posters(pairs, threshold=0)
        assert len(clusters) == 2
        assert {k.poster_id for k in kept} == {"p1", "p3"}

    def test_threshold_65_collapses_movie(self):
        rng = random.Random(1)
        pairs = [(poster(f"p{i}"), rng.getrandbits(64)) for i in range(8)]
        kept, clusters = dedup_posters(pairs, threshold=65)
        assert len(clusters) == 1 and len(kept) == 1

    def test_mixed_movies_rejected(self):
        with pytest.raises(ValueError):
            dedup_posters([(poster("p1", movie="m1"), 0), (poster("p2", movie="m2"), 0)])

    def test_remove_representative_preserves_clique_partition(self):
        # clique-structured fixture: every pair inside a group is close
        rng = random.Random(5)
        groups = []
        for g in range(3):
            base = rng.getrandbits(64)
            groups.append([base ^ (1 << (8 * g)), base ^ (1 << (8 * g + 1)), base])
        pairs = []
        for g, hashes in enumerate(groups):
            for i, bits in enumerate(hashes):
                pairs.append((poster(f"g{g}p{i}"), bits))
        # far-apart groups: verify the fixture actually separates
        kept, clusters = dedup_posters(pairs, threshold=8)
        assert len(clusters) == 3
        removed = {k.poster_id for k in kept}
        remainder = [(ref, h) for ref, h in pairs if ref.poster_id not in removed]
        kept2, clusters2 = dedup_posters(remainder, threshold=8)
        assert len(clusters2) == 3
        for c2 in clusters2:
            parent = next(c for c in clusters if set(c2.members) <= set(c.members))
            assert set(parent.members) - {parent.representative} == set(c2.members)


class TestGrayscale:
    def test_equal_channels_always_grayscale(self):
        rng = np.random.default_rng(3)
        gray = rng.integers(0, 256, size=(20, 20), dtype=np.uint8)
        arr = np.stack([gray, gray, gray], axis=2)
        assert is_grayscale(arr, tolerance=0.0)

    def test_pure_red_mse_by_hand(self):
        arr = np.zeros((4, 4, 3), dtype=np.uint8)
        arr[:, :, 0] = 255
        # per-pixel mean 85; deviations (170, -85, -85)
        assert channel_mse(arr) == (28900.0, 7225.0, 7225.0)
        assert not is_grayscale(arr)

    def test_single_channel_file_is_grayscale(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(np.full((10, 10), 80, dtype=np.uint8), mode="L").save(path)
        assert is_grayscale(path)

    def test_tolerance_boundary(self):
        # slight tint: R = G = B + 3 -> deviations (1, 1, -2) -> MSE (1, 1, 4)
        arr = np.zeros((8, 8, 3), dtype=np.uint8)
        arr[:, :, 0] = 103
        arr[:, :, 1] = 103
        arr[:, :, 2] = 100
        assert channel_mse(arr) == (1.0, 1.0, 4.0)
        assert is_grayscale(arr, tolerance=4.0)
        assert not is_grayscale(arr, tolerance=3.9)
