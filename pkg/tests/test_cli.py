import json
import subprocess
import sys

import pytest

from ebpoisson import SolverError, cli


def run_cli(args):
    return cli.main(list(args))


@pytest.fixture
def counts_file(tmp_path):
    p = tmp_path / "counts.csv"
    p.write_text("count\n" + "\n".join("0 0 1 1 2 2 3 5".split()) + "\n")
    return p


class TestFit:
    def test_constant_counts_document(self, tmp_path, capsys):
        counts = tmp_path / "c.csv"
        counts.write_text("2\n2\n2\n")
        out = tmp_path / "prior.json"
        assert run_cli(["fit", str(counts), "--dist", "kl", "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert doc["atoms"] == [2.0]
        assert doc["weights"] == [1.0]
        assert doc["dist"] == "kl"
        assert "solver" not in capsys.readouterr().err.lower()

    def test_summary_goes_to_stderr_document_to_stdout(self, counts_file, capsys):
        assert run_cli(["fit", str(counts_file)]) == 0
        captured = capsys.readouterr()
        json.loads(captured.out)
        assert "objective=" in captured.err

    def test_byte_deterministic(self, counts_file, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        for path in (a, b):
            assert run_cli(["fit", str(counts_file), "--dist", "h2",
                            "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_distances_give_distinct_documents(self, counts_file, tmp_path):
        a = tmp_path / "kl.json"
        b = tmp_path / "chi2.json"
        assert run_cli(["fit", str(counts_file), "--dist", "kl", "--out", str(a)]) == 0
        assert run_cli(["fit", str(counts_file), "--dist", "chi2", "--out", str(b)]) == 0
        da, db = json.loads(a.read_text()), json.loads(b.read_text())
        assert da != db
        for doc in (da, db):
            tol = 1e-6 * doc["certificate"]["scale"]
            assert doc["certificate"]["min_D"] >= -tol
            assert doc["certificate"]["max_abs_D_atoms"] <= tol

    def test_missing_file_is_data_error(self, tmp_path):
        assert run_cli(["fit", str(tmp_path / "nope.csv")]) == 3

    def test_negative_count_is_data_error(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("1\n-1\n")
        assert run_cli(["fit", str(p)]) == 3

    def test_solver_failure_exit_code(self, counts_file, tmp_path, monkeypatch, capsys):
        def boom(spec, emp, config):
            raise SolverError("objective became non-finite", (1.0, 0.5))
        monkeypatch.setattr(cli, "fit", boom)
        out = tmp_path / "prior.json"
        assert run_cli(["fit", str(counts_file), "--out", str(out)]) == 4
        trace = json.loads((tmp_path / "prior.json.trace.json").read_text())
        assert trace["objective_trace"] == [1.0, 0.5]
        assert "solver failed" in capsys.readouterr().err


class TestPredict:
    def test_robbins_hand_case(self, tmp_path, capsys):
        counts = tmp_path / "c.csv"
        counts.write_text("0\n0\n1\n2\n")
        assert run_cli(["predict", str(counts), "--robbins"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines == [
            "count,prediction",
            "0,0.500000",
            "0,0.500000",
            "1,2.000000",
            "2,0.000000",
        ]

    def test_point_mass_document_gives_constant_column(self, tmp_path, capsys):
        counts = tmp_path / "c.csv"
        counts.write_text("2\n2\n2\n")
        doc_path = tmp_path / "prior.json"
        assert run_cli(["fit", str(counts), "--out", str(doc_path)]) == 0
        capsys.readouterr()
        assert run_cli(["predict", str(counts), "--prior", str(doc_path)]) == 0
        lines = capsys.readouterr().out.splitlines()[1:]
        assert all(line.endswith(",2.000000") for line in lines)

    def test_minimax_mode_runs(self, tmp_path, capsys):
        counts = tmp_path / "c.csv"
        counts.write_text("0\n3\n7\n")
        assert run_cli(["predict", str(counts), "--minimax",
                        "--support-max", "5", "--grid", "101"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 4
        for line in lines[1:]:
            count, pred = line.split(",")
            assert 0.0 <= float(pred) <= 5.0
            assert len(pred.split(".")[1]) == 6

    def test_mode_is_required(self, tmp_path, capsys):
        counts = tmp_path / "c.csv"
        counts.write_text("1\n")
        with pytest.raises(SystemExit) as exc:
            run_cli(["predict", str(counts)])
        assert exc.value.code == 2


class TestEvaluate:
    def test_hand_pair(self, tmp_path, capsys):
        pred = tmp_path / "p.csv"
        truth = tmp_path / "t.csv"
        pred.write_text("0\n2\n")
        truth.write_text("1\n1\n")
        assert run_cli(["evaluate", str(pred), str(truth)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["rmse"] == pytest.approx(1.0)
        assert payload["mad"] == pytest.approx(1.0)
        assert payload["n"] == 2

    def test_identical_files_score_zero(self, tmp_path, capsys):
        pred = tmp_path / "p.csv"
        pred.write_text("1\n4\n2\n")
        assert run_cli(["evaluate", str(pred), str(pred)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["rmse"] == 0.0
        assert payload["mad"] == 0.0

    def test_reads_last_column_of_prediction_files(self, tmp_path, capsys):
        pred = tmp_path / "p.csv"
        truth = tmp_path / "t.csv"
        pred.write_text("count,prediction\n0,1.000000\n2,1.000000\n")
        truth.write_text("1\n1\n")
        assert run_cli(["evaluate", str(pred), str(truth)]) == 0
        assert json.loads(capsys.readouterr().out)["rmse"] == 0.0

    def test_length_mismatch_is_data_error(self, tmp_path):
        pred = tmp_path / "p.csv"
        truth = tmp_path / "t.csv"
        pred.write_text("1\n2\n")
        truth.write_text("1\n")
        assert run_cli(["evaluate", str(pred), str(truth)]) == 3


class TestSimulate:
    def test_regret_json_and_plot(self, tmp_path):
        out = tmp_path / "res.json"
        plot = tmp_path / "plot.csv"
        code = run_cli(["simulate", "regret", "--prior", "point:2", "--n", "60",
                        "--reps", "2", "--methods", "robbins,kl", "--seed", "1",
                        "--out", str(out), "--plot-out", str(plot)])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["statistic"] == "training_regret"
        assert set(payload["methods"]) == {"robbins", "kl"}
        assert payload["config"]["rng"] == "philox4x64"
        lines = plot.read_text().splitlines()
        assert lines[0] == "x,method,mean,ci_low,ci_high"
        assert len(lines) == 3

    def test_deterministic_output_bytes(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        args = ["simulate", "regret", "--prior", "exp:0.3", "--n", "40",
                "--reps", "2", "--methods", "robbins", "--seed", "5"]
        assert run_cli(args + ["--out", str(a)]) == 0
        assert run_cli(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_bad_prior_spec_is_usage_error(self, tmp_path):
        assert run_cli(["simulate", "regret", "--prior", "zeta:1",
                        "--reps", "2"]) == 2


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        counts = tmp_path / "c.csv"
        counts.write_text("2\n2\n")
        proc = subprocess.run(
            [sys.executable, "-m", "ebpoisson", "fit", str(counts)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        doc = json.loads(proc.stdout)
        assert doc["atoms"] == [2.0]

    def test_usage_error_exit_code(self):
        proc = subprocess.run(
            [sys.executable, "-m", "ebpoisson", "fit", "x.csv", "--dist", "tv"],
            capture_output=True, text=True)
        assert proc.returncode == 2
