import csv

import numpy as np
import pytest

from oglp.cli import EXIT_BREACH, EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, main
from oglp.config import ConfigError, ExperimentConfig, dumps, from_dict, load_config, loads
from oglp.experiment import run_experiment
from oglp.graph import read_edge_list
from oglp.predictors import load_matrix

BASE = """
trajectory: {d: 6, T: 40, model: %s}
objective: {alpha: 2.0, beta: 0.1, gamma: 0.9}
learner: {predictor: %s, snapshot_every: 20}
benchmark: {predictors: [identity, prior]}
seeds: [0, 1]
"""


def write_cfg(tmp_path, model="transition", predictor="prior", text=None, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(text if text is not None else BASE % (model, predictor))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestConfig:
    def test_round_trip(self):
        cfg = loads(BASE % ("ar", "identity"))
        assert cfg.trajectory.d == 6 and cfg.objective.gamma == 0.9 and cfg.seeds == (0, 1)
        assert loads(dumps(cfg)) == cfg
        assert loads(dumps(ExperimentConfig())) == ExperimentConfig()

    def test_plain_exponent_is_float(self):
        cfg = loads("learner: {regret_tol: 1e-10}\nbenchmark: {beta_grid: [1e-3, 10]}")
        assert cfg.learner.regret_tol == 1e-10
        assert cfg.benchmark.beta_grid == (1e-3, 10.0)

    def test_defaults(self):
        cfg = loads("")
        assert cfg.objective.alpha == 2.0
        assert cfg.trajectory.d == 20 and cfg.trajectory.T == 1000
        assert cfg.benchmark.beta_grid == (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)

    @pytest.mark.parametrize(
        "text",
        [
            "nonsense: {}",
            "trajectory: {colour: red}",
            "objective: {gamma: 1.0}",
            "trajectory: {model: switching, T: 100, switch_times: [10, 200]}",
            "seeds: []",
            "learner: {predictor: oracle}",
            "[1, 2",
            "- a list",
        ],
    )
    def test_invalid(self, text):
        with pytest.raises(ConfigError):
            loads(text)

    def test_from_dict_none(self):
        assert from_dict(None) == ExperimentConfig()


class TestSimulate:
    def test_static_snapshots(self, tmp_path):
        cfg = write_cfg(tmp_path, text="trajectory: {d: 5, T: 10, model: static}")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == EXIT_OK
        graphs = sorted((tmp_path / "sim" / "graphs").iterdir())
        assert len(graphs) == 10
        first = graphs[0].read_bytes()
        assert all(g.read_bytes() == first for g in graphs)
        assert load_config(tmp_path / "sim" / "config.yaml").trajectory.T == 10

    def test_byte_identical_rerun(self, tmp_path):
        cfg = write_cfg(tmp_path, model="ar")
        for out in ("a", "b"):
            assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / out)]) == EXIT_OK
        for rel in ("signals.csv", "config.yaml", "ar_matrix.csv", "graphs/graph_000040.csv"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
        assert load_matrix(tmp_path / "a" / "ar_matrix.csv").shape == (15, 15)

    def test_switch_time_beyond_horizon(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, text="trajectory: {model: switching, T: 100, switch_times: [50, 150]}")
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.yaml"),
                     "--out", str(tmp_path / "sim")]) == EXIT_FAILURE


class TestLearn:
    def test_replay_matches_fresh(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == EXIT_OK
        assert main(["learn", "--config", str(cfg), "--out", str(tmp_path / "fresh")]) == EXIT_OK
        assert main(["learn", "--config", str(cfg), "--out", str(tmp_path / "replay"),
                     "--replay", str(tmp_path / "sim")]) == EXIT_OK
        for rel in ("trace.csv", "summary.csv", "snapshots/w_hat_000040.csv"):
            fresh = (tmp_path / "fresh" / rel).read_bytes()
            assert fresh == (tmp_path / "replay" / rel).read_bytes()
        assert b"\r" not in fresh
        timing = read_csv(tmp_path / "fresh" / "timing.csv")
        assert len(timing) == 1 and float(timing[0]["us_per_round"]) > 0

    def test_deterministic_and_seed_flag(self, tmp_path):
        cfg = write_cfg(tmp_path)
        for out, seed in (("a", "1"), ("b", "1"), ("c", "0")):
            assert main(["learn", "--config", str(cfg), "--out", str(tmp_path / out), "--seed", seed]) == EXIT_OK
        trace = lambda out: (tmp_path / out / "trace.csv").read_bytes()  # noqa: E731
        assert trace("a") == trace("b")
        assert trace("a") != trace("c")
        assert read_csv(tmp_path / "a" / "summary.csv")[0]["seed"] == "1"

    def test_snapshot_is_corrected_iterate(self, tmp_path):
        cfg = write_cfg(tmp_path)
        assert main(["learn", "--config", str(cfg), "--out", str(tmp_path / "run")]) == EXIT_OK
        result = run_experiment(load_config(cfg))
        snap = read_edge_list(tmp_path / "run" / "snapshots" / "w_hat_000020.csv")
        expected = np.where(result.trace.w_corrected[19] > 1e-12, result.trace.w_corrected[19], 0.0)
        np.testing.assert_array_equal(snap, expected)

    def test_identity_on_static_graph_improves(self, tmp_path):
        text = "trajectory: {d: 10, T: 500, model: static}\nlearner: {predictor: identity}"
        cfg = write_cfg(tmp_path, text=text)
        assert main(["learn", "--config", str(cfg), "--out", str(tmp_path / "run")]) == EXIT_OK
        rows = read_csv(tmp_path / "run" / "trace.csv")
        assert len(rows) == 500
        assert float(rows[-1]["rel_error"]) < float(rows[0]["rel_error"])

    def test_gamma_out_of_range(self, tmp_path):
        cfg = write_cfg(tmp_path, text="objective: {gamma: 1.2}")
        assert main(["learn", "--config", str(cfg), "--out", str(tmp_path / "run")]) == EXIT_CONFIG

    def test_replay_dimension_mismatch(self, tmp_path):
        small = write_cfg(tmp_path, text="trajectory: {d: 4, T: 5}", name="small.yaml")
        assert main(["simulate", "--config", str(small), "--out", str(tmp_path / "sim")]) == EXIT_OK
        cfg = write_cfg(tmp_path, text="trajectory: {d: 6, T: 5}")
        assert main(["learn", "--config", str(cfg), "--out", str(tmp_path / "run"),
                     "--replay", str(tmp_path / "sim")]) == EXIT_CONFIG

    def test_breach_exit_code(self, tmp_path):
        # a huge constant step drives every edge of some node to zero
        text = "trajectory: {d: 6, T: 30}\nlearner: {step_rule: 50.0}"
        cfg = write_cfg(tmp_path, text=text)
        assert main(["learn", "--config", str(cfg), "--out", str(tmp_path / "run")]) == EXIT_BREACH


class TestBenchmark:
    def test_outputs(self, tmp_path):
        cfg = write_cfg(tmp_path, model="switching", text=(
            "trajectory: {d: 6, T: 120, model: switching, switch_times: [60, 90]}\n"
            "benchmark: {predictors: [identity, data_driven], recover_window: 20}\n"
            "seeds: [0, 1]\n"))
        assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
        runs = read_csv(tmp_path / "b" / "runs.csv")
        assert len(runs) == 2 * 2 * 120
        summary = read_csv(tmp_path / "b" / "summary.csv")
        assert [(r["predictor"], r["seed"], r["status"]) for r in summary] == [
            ("identity", "0", "ok"), ("identity", "1", "ok"),
            ("data_driven", "0", "ok"), ("data_driven", "1", "ok"),
        ]
        curves = read_csv(tmp_path / "b" / "mean_curves.csv")
        assert list(curves[0]) == ["t", "identity", "data_driven"] and len(curves) == 120
        mean = np.mean([float(r["rel_error"]) for r in runs if r["predictor"] == "identity" and r["t"] == "7"])
        assert float(curves[6]["identity"]) == pytest.approx(mean, rel=1e-12)
        rec = read_csv(tmp_path / "b" / "recovery.csv")
        assert {(r["predictor"], r["switch_t"]) for r in rec} == {
            ("identity", "60"), ("identity", "90"), ("data_driven", "60"), ("data_driven", "90")
        }

    def test_single_run_reduces_to_learn(self, tmp_path):
        text = "trajectory: {d: 5, T: 60, model: ar}\nlearner: {predictor: prior}\n" \
               "benchmark: {predictors: [prior]}\nseeds: [3]\n"
        cfg = write_cfg(tmp_path, text=text)
        assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_OK
        assert main(["learn", "--config", str(cfg), "--out", str(tmp_path / "l")]) == EXIT_OK
        bench = read_csv(tmp_path / "b" / "runs.csv")
        trace = read_csv(tmp_path / "l" / "trace.csv")
        assert [r["rel_error"] for r in bench] == [r["rel_error"] for r in trace]
        b_sum, l_sum = read_csv(tmp_path / "b" / "summary.csv")[0], read_csv(tmp_path / "l" / "summary.csv")[0]
        for key in ("final_rel_error", "mean_rel_error_last10", "max_grad_norm", "min_degree"):
            assert b_sum[key] == l_sum[key]

    def test_beta_search(self, tmp_path):
        text = "trajectory: {d: 5, T: 40, model: transition}\n" \
               "benchmark: {predictors: [identity], beta_grid: [0.01, 0.1, 1.0]}\nseeds: [0]\n"
        cfg = write_cfg(tmp_path, text=text)
        assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path / "b"), "--search-beta"]) == EXIT_OK
        rows = read_csv(tmp_path / "b" / "beta_search.csv")
        assert [float(r["beta"]) for r in rows] == [0.01, 0.1, 1.0]
        best = min(rows, key=lambda r: float(r["mean_final_rel_error"]))
        assert [r["selected"] for r in rows].count("true") == 1
        assert best["selected"] == "true"
        assert read_csv(tmp_path / "b" / "summary.csv")[0]["beta"] == best["beta"]

    def test_all_runs_fail(self, tmp_path):
        text = "trajectory: {d: 6, T: 30}\nlearner: {step_rule: 50.0}\nbenchmark: {predictors: [identity]}\n"
        cfg = write_cfg(tmp_path, text=text)
        assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path / "b")]) == EXIT_FAILURE
        assert read_csv(tmp_path / "b" / "summary.csv")[0]["status"].startswith("barrier_breach")
