import math

import pytest

from posterlens.demographics import (
    CensusTable,
    RawCensusRow,
    align_to_census,
    bundled_census,
    load_census_csv,
    map_census_categories,
    parity_by_decade,
    parity_ratio,
)


def synthetic_raw(decade=1990, white=0.6, black=0.2, asian=0.15, other=0.05):
    return [
        RawCensusRow(decade, "White", white),
        RawCensusRow(decade, "Black", black),
        RawCensusRow(decade, "Asian", asian),
        RawCensusRow(decade, "American Indian", other / 2),
        RawCensusRow(decade, "Pacific Islander", other / 2),
    ]


class TestMapCensus:
    def test_clean_input_passes_through(self):
        table = map_census_categories(synthetic_raw())
        fractions, fell_back = table.lookup(1990)
        assert not fell_back
        assert fractions["White"] == pytest.approx(0.6)
        assert fractions["Black"] == pytest.approx(0.2)
        assert fractions["Asian"] == pytest.approx(0.15)
        assert fractions["Other"] == pytest.approx(0.05)
        assert math.fsum(fractions.values()) == pytest.approx(1.0, abs=1e-12)

    def test_renormalizes_rounded_input(self):
        raw = synthetic_raw(white=0.61, black=0.2, asian=0.15, other=0.05)  # sums to 1.01
        table = map_census_categories(raw)
        fractions, _ = table.lookup(1990)
        assert math.fsum(fractions.values()) == pytest.approx(1.0, abs=1e-12)
        assert fractions["White"] == pytest.approx(0.61 / 1.01)

    def test_missing_decade_falls_back_earlier(self):
        table = map_census_categories(synthetic_raw(decade=1980) + synthetic_raw(decade=2000))
        fractions, fell_back = table.lookup(1994)
        assert fell_back
        assert fractions == table.rows[1980]

    def test_decade_before_table_uses_earliest(self):
        table = map_census_categories(synthetic_raw(decade=1980))
        fractions, fell_back = table.lookup(1950)
        assert fell_back
        assert fractions == table.rows[1980]

    def test_unknown_category_rejected(self):
        with pytest.raises(ValueError):
            map_census_categories([RawCensusRow(1990, "Martian", 1.0)])

    def test_bundled_asset_loads_and_is_simplex(self):
        table = map_census_categories(bundled_census())
        assert table.decades()[0] == 1920
        assert table.decades()[-1] == 2020
        for decade in table.decades():
            fractions, _ = table.lookup(decade)
            assert math.fsum(fractions.values()) == pytest.approx(1.0, abs=1e-9)
            assert fractions["White"] > 0.5

    def test_csv_loader_skips_comments(self, tmp_path):
        path = tmp_path / "census.csv"
        path.write_text("# comment\ndecade,category,fraction\n1990,White,0.8\n1990,Black,0.2\n")
        rows = load_census_csv(path)
        assert len(rows) == 2


class TestAlign:
    def test_four_class_merges_indian_into_asian(self):
        rep = {"Asian": 0.05, "Black": 0.1, "Indian": 0.03, "White": 0.82}
        aligned = align_to_census(rep, "four")
        assert aligned["Asian"] == pytest.approx(0.08)
        assert aligned["White"] == pytest.approx(0.82)
        assert aligned["Other"] == 0.0

    def test_seven_class_mapping(self):
        rep = {
            "White": 0.5,
            "Black": 0.1,
            "East Asian": 0.1,
            "Southeast Asian": 0.05,
            "Indian": 0.05,
            "Latino-Hispanic": 0.15,
            "Middle Eastern": 0.05,
        }
        aligned = align_to_census(rep, "seven")
        assert aligned["Asian"] == pytest.approx(0.2)
        assert aligned["Other"] == pytest.approx(0.2)

    def test_unknown_category_rejected(self):
        with pytest.raises(ValueError):
            align_to_census({"Klingon": 1.0}, "four")


class TestParity:
    def make_table(self, white=0.693, black=0.15, asian=0.1, other=0.057):
        return CensusTable(rows={2020: {"Asian": asian, "Black": black, "Other": other, "White": white}})

    def test_parity_inputs_give_all_ones(self):
        table = self.make_table()
        rep = dict(table.rows[2020])
        ratios = parity_ratio(rep, table, 2020)
        for cat, ratio in ratios.items():
            assert ratio == pytest.approx(1.0), cat

    def test_white_overrepresentation_ratio(self):
        # representation 0.79 vs census share 0.693 -> 1.14
        table = self.make_table(white=0.693)
        ratios = parity_ratio({"White": 0.79}, table, 2020)
        assert ratios["White"] == pytest.approx(1.14, abs=0.005)

    def test_simple_doubling(self):
        table = CensusTable(rows={1990: {"Asian": 0.25, "Black": 0.25, "Other": 0.25, "White": 0.25}})
        ratios = parity_ratio({"Asian": 0.5}, table, 1990)
        assert ratios["Asian"] == pytest.approx(2.0)

    def test_zero_census_share_yields_none(self):
        table = CensusTable(rows={1990: {"Asian": 0.0, "Black": 0.3, "Other": 0.2, "White": 0.5}})
        ratios = parity_ratio({"Asian": 0.1}, table, 1990)
        assert ratios["Asian"] is None

    def test_parity_by_decade_merges_model_categories_and_flags_fallback(self):
        census = CensusTable(rows={1990: {"Asian": 0.1, "Black": 0.2, "Other": 0.1, "White": 0.6}})
        rep = {"White": 0.6, "Black": 0.2, "Asian": 0.1, "Indian": 0.1}
        rows = parity_by_decade({1990: rep, 2000: rep}, census, "four")
        assert rows[0]["ratio:Asian"] == pytest.approx(2.0)  # Indian + Asian vs census Asian
        assert rows[0]["census_fallback"] is False
        assert rows[1]["census_fallback"] is True

    def test_homogeneous_scaling(self):
        table = self.make_table()
        rep = {"Asian": 0.12, "Black": 0.2, "Other": 0.05, "White": 0.63}
        base = parity_ratio(rep, table, 2020)
        scaled = parity_ratio({k: 3.0 * v for k, v in rep.items()}, table, 2020)
        for cat in base:
            assert scaled[cat] == pytest.approx(3.0 * base[cat])
