"""Tests for the command-line harness: contracts, exit codes, golden outputs."""
import json
import os

import numpy as np
import pytest

from bpfolio.cli import SWEEP_CSV_HEADER, main, run_sweep
from bpfolio.model import ABSOLUTE_DEVIATION, MEAN_VARIANCE


def run_json(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, json.loads(captured.out)


class TestSolveCommand:
    def test_well_sampled_instance_converges(self, capsys):
        code, record = run_json(capsys, [
            "solve", "--model", "mv", "--random", "--n", "100", "--p", "200",
            "--seed", "7"])
        assert code == 0
        assert record["converged"] is True
        assert record["diverged"] is False
        assert record["seed"] == 7
        assert record["n_assets"] == 100
        assert record["n_periods"] == 200
        assert abs(record["q_hat"] - 2.0) < 0.5
        assert len(record["positions"]) == 100
        assert sum(record["positions"]) == pytest.approx(100.0, abs=1e-6)

    def test_undersampled_instance_exits_two(self, capsys):
        code, record = run_json(capsys, [
            "solve", "--model", "mv", "--random", "--n", "100", "--p", "50",
            "--seed", "7"])
        assert code == 2
        assert record["diverged"] is True

    def test_input_without_n_is_usage_error(self, capsys, tmp_path):
        path = tmp_path / "returns.csv"
        path.write_text("1,2\n3,4\n")
        code = main(["solve", "--model", "mv", "--input", str(path)])
        assert code == 1
        assert "requires --n" in capsys.readouterr().err

    def test_no_input_source_is_usage_error(self, capsys):
        assert main(["solve", "--model", "mv"]) == 1

    def test_random_requires_both_dimensions(self, capsys):
        assert main(["solve", "--model", "mv", "--random", "--n", "10"]) == 1

    def test_generic_requires_cost_expression(self, capsys):
        code = main(["solve", "--model", "generic", "--random",
                     "--n", "6", "--p", "12"])
        assert code == 1
        assert "cost-expr" in capsys.readouterr().err

    def test_generic_expression_matches_builtin_quadratic(self, capsys):
        code_mv, record_mv = run_json(capsys, [
            "solve", "--model", "mv", "--random", "--n", "6", "--p", "18",
            "--seed", "3"])
        code_gen, record_gen = run_json(capsys, [
            "solve", "--model", "generic", "--cost-expr", "u**2/2",
            "--random", "--n", "6", "--p", "18", "--seed", "3"])
        assert code_mv == 0 and code_gen == 0
        assert record_gen["positions"] == pytest.approx(record_mv["positions"],
                                                        abs=1e-6)

    def test_file_input_round_trip(self, capsys, tmp_path):
        from bpfolio.model import generate_returns, save_returns
        rs = generate_returns(10, 30, 5)
        path = tmp_path / "returns.csv"
        save_returns(rs, str(path))
        code_file, record_file = run_json(capsys, [
            "solve", "--model", "mv", "--input", str(path), "--n", "10"])
        code_rand, record_rand = run_json(capsys, [
            "solve", "--model", "mv", "--random", "--n", "10", "--p", "30",
            "--seed", "5"])
        assert code_file == 0
        assert record_file["positions"] == record_rand["positions"]
        assert record_file["seed"] is None

    def test_unknown_model_rejected_by_parser(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["solve", "--model", "huber", "--random", "--n", "4", "--p", "8"])
        assert excinfo.value.code == 1


class TestSweepCommand:
    def test_schema_and_replica_columns(self, capsys):
        code = main(["sweep", "--model", "mv", "--alphas", "2,3", "--n", "20",
                     "--trials", "2", "--seed", "0"])
        assert code == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == SWEEP_CSV_HEADER
        assert len(lines) == 3
        row = dict(zip(lines[0].split(","), lines[1].split(",")))
        assert float(row["alpha"]) == 2.0
        assert float(row["q_replica"]) == 2.0
        assert float(row["eps_replica"]) == 0.5
        assert int(row["n_diverged"]) == 0

    def test_single_trial_degenerate_statistics(self, capsys):
        code = main(["sweep", "--model", "mv", "--alphas", "2", "--n", "20",
                     "--trials", "1", "--seed", "0"])
        captured = capsys.readouterr()
        assert code == 0
        assert "trials=1" in captured.err
        row = captured.out.strip().splitlines()[1].split(",")
        assert float(row[2]) == 0.0  # q_se
        assert float(row[4]) == 0.0  # eps_se

    def test_absolute_deviation_replica_eps_is_nan(self):
        csv_text = run_sweep(ABSOLUTE_DEVIATION, [2.0], 10, 1, 0, beta=4.0)
        row = csv_text.splitlines()[1].split(",")
        assert row[6] == "nan"

    def test_alpha_at_or_below_one_rejected(self, capsys):
        assert main(["sweep", "--model", "mv", "--alphas", "0.5,2"]) == 1
        assert main(["sweep", "--model", "mv", "--alphas", "1.0"]) == 1

    def test_trial_seeds_are_base_plus_index(self):
        # trials 0 and 1 of base seed 5 equal single trials at seeds 5 and 6
        pair = run_sweep(MEAN_VARIANCE, [2.0], 20, 2, 5)
        first = run_sweep(MEAN_VARIANCE, [2.0], 20, 1, 5)
        second = run_sweep(MEAN_VARIANCE, [2.0], 20, 1, 6)

        def q_mean(text):
            return float(text.splitlines()[1].split(",")[1])

        expected = 0.5 * (q_mean(first) + q_mean(second))
        # the csv rounds to 10 significant digits
        assert q_mean(pair) == pytest.approx(expected, rel=1e-9)


class TestTheoryCommand:
    def test_spectral_moments_golden(self, capsys):
        code, record = run_json(capsys, ["theory", "mp", "--alpha", "2"])
        assert code == 0
        assert record["inv_lambda_mean"] == 1.0
        assert record["inv_lambda_sq_mean"] == 2.0
        assert record["q"] == 2.0
        assert record["eps"] == 0.5

    def test_replica_closed_form_golden(self, capsys):
        code, record = run_json(capsys, [
            "theory", "replica", "--alpha", "3", "--beta", "10", "--model", "mv"])
        assert code == 0
        assert record["q"] == pytest.approx(1.5, abs=1e-12)
        assert record["chi"] == pytest.approx(0.05, abs=1e-12)

    def test_replica_absolute_deviation_runs_fixed_point(self, capsys):
        code, record = run_json(capsys, [
            "theory", "replica", "--alpha", "2", "--beta", "64", "--model", "ad"])
        assert code == 0
        assert record["divergent"] is False
        assert 1.0 < record["q"] < 3.0

    def test_divergent_phase_is_reported_not_raised(self, capsys):
        code, record = run_json(capsys, ["theory", "replica", "--alpha", "0.5"])
        assert code == 0
        assert record["divergent"] is True
        assert record["q"] == "inf"

    def test_annealed_golden(self, capsys):
        code, record = run_json(capsys, [
            "theory", "annealed", "--model", "ad", "--alpha", "2", "--s", "1"])
        assert code == 0
        assert record["value"] == pytest.approx(4.0 / np.sqrt(2.0 * np.pi), rel=1e-10)

    def test_replica_rejects_expected_shortfall(self, capsys):
        code = main(["theory", "replica", "--alpha", "2", "--model", "es"])
        assert code == 1
        assert "annealed" in capsys.readouterr().err


class TestKyCommand:
    def test_counterexample_golden(self, capsys):
        code, record = run_json(capsys, ["ky", "--counterexample"])
        assert code == 0
        assert record["w_mv"] == pytest.approx([0.0, 2.0], abs=1e-12)
        assert record["w_ad"] == pytest.approx([-1.0, 3.0], abs=1e-12)
        assert record["equal"] is False
        assert record["distance"] == pytest.approx(np.sqrt(2.0), rel=1e-12)
        assert record["cosine"] == pytest.approx(6.0 / (2.0 * np.sqrt(10.0)), rel=1e-12)

    def test_random_mode_reports_similarity(self, capsys):
        code, record = run_json(capsys, [
            "ky", "--n", "20", "--p", "40", "--trials", "2", "--seed", "0"])
        assert code == 0
        assert record["trials"] == 2
        assert -1.0 <= record["mean_cosine"] <= 1.0
        assert record["mean_q_gap"] >= 0.0
        assert record["n_diverged"] == 0

    def test_random_mode_requires_dimensions(self, capsys):
        assert main(["ky", "--trials", "2"]) == 1


class TestSeedEnvironment:
    def test_env_overrides_default_seed_only(self, capsys, monkeypatch):
        monkeypatch.setenv("BPFOLIO_SEED", "123")
        _, from_env = run_json(capsys, [
            "solve", "--model", "mv", "--random", "--n", "10", "--p", "30"])
        _, explicit = run_json(capsys, [
            "solve", "--model", "mv", "--random", "--n", "10", "--p", "30",
            "--seed", "123"])
        assert from_env["seed"] == 123
        assert from_env["positions"] == explicit["positions"]
        _, other = run_json(capsys, [
            "solve", "--model", "mv", "--random", "--n", "10", "--p", "30",
            "--seed", "9"])
        assert other["seed"] == 9

    def test_invalid_env_seed_is_usage_error(self, capsys, monkeypatch):
        monkeypatch.setenv("BPFOLIO_SEED", "not-a-number")
        code = main(["solve", "--model", "mv", "--random", "--n", "10", "--p", "30"])
        assert code == 1


class TestOutputFiles:
    def test_out_file_matches_stdout(self, capsys, tmp_path):
        argv = ["theory", "mp", "--alpha", "2"]
        main(argv)
        stdout_text = capsys.readouterr().out
        out_path = tmp_path / "mp.json"
        main(argv + ["--out", str(out_path)])
        assert out_path.read_text() == stdout_text

    def test_no_partial_files_left_behind(self, tmp_path):
        out_path = tmp_path / "sweep.csv"
        main(["sweep", "--model", "mv", "--alphas", "2", "--n", "20",
              "--trials", "2", "--seed", "0", "--out", str(out_path)])
        assert out_path.exists()
        leftovers = [name for name in os.listdir(tmp_path) if name != "sweep.csv"]
        assert leftovers == []

    def test_reruns_are_byte_identical(self, tmp_path):
        argv = ["solve", "--model", "ad", "--random", "--n", "10", "--p", "20",
                "--seed", "4", "--beta", "8"]
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        main(argv + ["--out", str(first)])
        main(argv + ["--out", str(second)])
        assert first.read_bytes() == second.read_bytes()
