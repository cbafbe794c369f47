import json
import pathlib

import pytest

from ebpoisson import (
    DataError,
    PriorDocument,
    read_counts_csv,
    read_paired_seasons_csv,
    read_prior_document,
    write_predictions_csv,
    write_prior_document,
)

FIXTURE = pathlib.Path(__file__).parent / "data" / "paired_seasons_fixture.csv"


class TestCountsCsv:
    def test_plain_rows(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("0\n3\n1\n")
        assert read_counts_csv(p) == [0, 3, 1]

    def test_optional_header(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("count\n2\n2\n")
        assert read_counts_csv(p) == [2, 2]

    def test_negative_count_reports_row(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("1\n-2\n3\n")
        with pytest.raises(DataError, match="2"):
            read_counts_csv(p)

    def test_non_integer_reports_row(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("1\n2\n2.5\n")
        with pytest.raises(DataError, match="3"):
            read_counts_csv(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("")
        with pytest.raises(DataError):
            read_counts_csv(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_counts_csv(tmp_path / "nope.csv")


class TestPairedSeasonsCsv:
    def test_fixture_loads(self):
        ds = read_paired_seasons_csv(FIXTURE)
        assert len(ds.rows) == 12
        for row in ds.rows:
            assert row.past >= 0 and row.future >= 0
            assert row.player
        assert {r.position for r in ds.rows} <= {"defender", "center", "winger"}

    def test_position_is_optional(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("player,past,future\na,1,2\nb,0,0\n")
        ds = read_paired_seasons_csv(p)
        assert [r.position for r in ds.rows] == [None, None]

    def test_header_required(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("a,1,2\nb,0,0\n")
        with pytest.raises(DataError):
            read_paired_seasons_csv(p)

    def test_negative_count_reports_row(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("player,past,future\na,1,2\nb,-1,0\n")
        with pytest.raises(DataError, match="3"):
            read_paired_seasons_csv(p)


class TestPriorDocument:
    def doc(self):
        return PriorDocument(
            atoms=(0.5, 2.25), weights=(0.3, 0.7), dist="kl", objective=0.123456789,
            certificate={"min_d": -1e-9, "max_abs_d_atoms": 5e-10, "scale": 1.25},
            config={"merge_tol": 0.01, "prune_tol": 0.001}, seed=7,
            data_sha256="ab" * 32)

    def test_round_trip_is_byte_identical(self, tmp_path):
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        write_prior_document(p1, self.doc())
        write_prior_document(p2, read_prior_document(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_json_shape(self, tmp_path):
        p = tmp_path / "a.json"
        write_prior_document(p, self.doc())
        raw = json.loads(p.read_text())
        assert set(raw) >= {"atoms", "weights", "dist", "objective",
                            "certificate", "config", "seed", "data_sha256"}
        assert raw["dist"] == "kl"
        assert raw["atoms"] == [0.5, 2.25]

    def test_trailing_newline(self, tmp_path):
        p = tmp_path / "a.json"
        write_prior_document(p, self.doc())
        assert p.read_bytes().endswith(b"\n")

    def test_invalid_document_rejected(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text(json.dumps({"atoms": [1.0]}))
        with pytest.raises(DataError):
            read_prior_document(p)

    def test_garbage_rejected(self, tmp_path):
        p = tmp_path / "a.json"
        p.write_text("{not json")
        with pytest.raises(DataError):
            read_prior_document(p)


class TestPredictionsCsv:
    def test_fixed_decimal_output(self, tmp_path):
        p = tmp_path / "p.csv"
        write_predictions_csv(p, [0, 2, 5], [0.5, 1.0 / 3.0, 2.0])
        lines = p.read_text().splitlines()
        assert lines[0] == "count,prediction"
        assert lines[1] == "0,0.500000"
        assert lines[2] == "2,0.333333"
        assert lines[3] == "5,2.000000"

    def test_round_half_even(self, tmp_path):
        p = tmp_path / "p.csv"
        write_predictions_csv(p, [1, 2], [0.0000005, 0.0000015])
        lines = p.read_text().splitlines()
        assert lines[1] == "1,0.000000"
        assert lines[2] == "2,0.000002"

    def test_length_mismatch(self, tmp_path):
        with pytest.raises(DataError):
            write_predictions_csv(tmp_path / "p.csv", [1, 2], [1.0])
