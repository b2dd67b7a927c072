import csv
import math

import numpy as np
import pytest
import yaml

from ctfilter.bench import cli
from ctfilter.bench.config import AlgorithmSpec, ExperimentConfig, config_from_dict, load_config, parse_algorithm
from ctfilter.bench.runner import (
    ERROR_HEADER,
    error_rows,
    gain_error,
    run_filter_experiment,
    run_gain_benchmark,
    run_gain_eval,
    trial_ensemble,
    write_csv,
)
from ctfilter.errors import ConfigError
from ctfilter.gain import GainField
from ctfilter.kalman import steady_state_variance_scalar


def _gain_cfg(**kw):
    raw = {"kind": "gain-bench", "N": [20], "trials": 3, "seed": 11,
           "algorithms": [{"name": "constant"}, {"name": "galerkin", "M": [1, 3]},
                          {"name": "kernel", "epsilon": [0.2], "L": 50},
                          {"name": "coupling", "epsilon": [0.1]}]}
    raw.update(kw)
    return config_from_dict(raw)


def _filter_cfg(filters, **kw):
    raw = {"kind": "filter-run", "model": "linear_1d", "N": [50], "trials": 2, "horizon": 0.5, "seed": 3,
           "filters": filters}
    raw.update(kw)
    return config_from_dict(raw)


class TestGainError:
    def test_identical(self):
        exact = np.linspace(0, 1, 10)
        assert gain_error(GainField(exact.reshape(-1, 1, 1), "x"), exact) == 0.0

    def test_offset(self):
        exact = np.linspace(0, 1, 10)
        assert gain_error(exact + 0.1, exact) == pytest.approx(0.01)

    def test_single_particle(self):
        exact = np.zeros(100)
        approx = exact.copy()
        approx[17] = 1.0
        assert gain_error(approx, exact) == pytest.approx(0.01)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            gain_error(np.zeros(3), np.zeros(4))


class TestConfig:
    def test_defaults(self):
        cfg = config_from_dict({"kind": "gain-bench", "algorithms": ["constant"]})
        assert cfg.trials == 100
        assert cfg.density == "bimodal_sigma2_0.2"
        assert cfg.algorithms == (AlgorithmSpec("constant", {}),)

    @pytest.mark.parametrize(
        "raw",
        [
            {"kind": "gain-bench", "algorithms": ["constant"], "bogus": 1},
            {"kind": "gain-bench", "algorithms": [{"name": "kernel", "eps": 0.1}]},
            {"kind": "gain-bench", "algorithms": [{"name": "simplex"}]},
            {"kind": "filter-run", "filters": [{"name": "kbf", "gain": "constant"}]},
            {"kind": "filter-run", "filters": ["particle"]},
            {"kind": "other"},
            {"kind": "gain-bench", "algorithms": ["constant"], "trials": 0},
            {"kind": "gain-bench", "algorithms": ["constant"], "density": "nope"},
            {"kind": "gain-bench", "algorithms": [{"name": "coupling", "epsilon": -1}]},
            {"kind": "filter-run", "model": "double_well_1d", "filters": ["kbf"]},
            {"kind": "filter-run", "filters": [{"name": "fpf", "gain": {"name": "kernel", "epsilon": [0.1, 0.2]}}]},
        ],
    )
    def test_rejected(self, raw):
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_scalar_or_list(self):
        spec = parse_algorithm({"name": "kernel", "epsilon": 0.1, "L": 10})
        assert spec.variants() == [(0.1, {"epsilon": 0.1, "L": 10})]

    def test_shipped_configs_load(self):
        from pathlib import Path

        for path in sorted(Path(__file__).parents[1].joinpath("configs").glob("*.yaml")):
            assert isinstance(load_config(path), ExperimentConfig)

    def test_filter_tags(self):
        cfg = _filter_cfg(["kbf", {"name": "fpf", "gain": {"name": "kernel", "epsilon": 0.1}},
                           {"name": "fpf", "gain": "exact"}])
        assert [f.tag for f in cfg.filters] == ["kbf", "fpf-kernel:0.1", "fpf-exact"]


class TestGainBenchmark:
    def test_single_record_reproducible(self):
        cfg = config_from_dict({"kind": "gain-bench", "N": 100, "trials": 1, "seed": 5, "algorithms": ["constant"]})
        a, b = run_gain_benchmark(cfg), run_gain_benchmark(cfg)
        assert len(a) == 1
        assert a == b

    def test_one_row_per_cell(self):
        cfg = _gain_cfg(N=[20, 40])
        records = run_gain_benchmark(cfg)
        keys = {(r.algorithm, r.param, r.N, r.trial) for r in records}
        assert len(records) == len(keys) == 5 * 2 * 3
        assert all(r.status == "ok" and r.error >= 0 for r in records)

    def test_trial_isolation(self):
        small = run_gain_benchmark(_gain_cfg(trials=2))
        large = run_gain_benchmark(_gain_cfg(trials=3))
        assert small == [r for r in large if r.trial < 2]

    def test_n_grid_isolation(self):
        a = run_gain_benchmark(_gain_cfg(N=[20]))
        b = run_gain_benchmark(_gain_cfg(N=[40, 20]))
        assert a == [r for r in b if r.N == 20]

    def test_algorithm_order_invariance(self):
        cfg = _gain_cfg()
        flipped = cfg.replace(algorithms=tuple(reversed(cfg.algorithms)))
        assert run_gain_benchmark(cfg) == run_gain_benchmark(flipped)

    def test_workers_do_not_change_results(self):
        cfg = _gain_cfg()
        assert run_gain_benchmark(cfg) == run_gain_benchmark(cfg.replace(workers=2))

    def test_seed_changes_ensembles(self):
        cfg = _gain_cfg()
        assert not np.array_equal(trial_ensemble(cfg, 20, 0).states, trial_ensemble(cfg.replace(seed=12), 20, 0).states)

    def test_failures_become_status_rows(self):
        cfg = config_from_dict({"kind": "gain-bench", "N": [10], "trials": 2,
                                "algorithms": [{"name": "coupling", "epsilon": [5.0]}, {"name": "galerkin", "M": [20]}]})
        records = run_gain_benchmark(cfg)
        assert len(records) == 4
        assert all(math.isnan(r.error) for r in records)
        assert {r.status.split(":")[1].strip() for r in records} == {"EpsilonTooLarge", "IllConditionedBasis"}

    def test_gain_eval_rows(self):
        cfg = config_from_dict({"kind": "gain-eval", "N": 30, "algorithms": ["constant", {"name": "kernel", "L": 20}]})
        rows = run_gain_eval(cfg)
        assert len(rows) == 60
        const = [r for r in rows if r[0] == "constant"]
        assert len({r[4] for r in const}) == 1
        assert all(r[6] > 0 for r in rows)


class TestFilterExperiment:
    def test_kbf_only_bounded_by_prior_std(self):
        cfg = _filter_cfg(["kbf"], trials=20, horizon=5.0)
        series, summary = run_filter_experiment(cfg)
        sq = np.array([(r[5] - r[6]) ** 2 for r in series if r[3] >= 100])
        rmse = np.sqrt(sq.mean())
        assert np.isfinite(rmse)
        assert rmse < 1.0
        assert np.sqrt(steady_state_variance_scalar(-0.5, 1.0, 1.0)) < 1.0

    def test_kbf_and_ekbf_identical(self):
        series, _ = run_filter_experiment(_filter_cfg(["kbf", "ekbf"]))
        kbf = [r[6:] for r in series if r[1] == "kbf"]
        ekbf = [r[6:] for r in series if r[1] == "ekbf"]
        assert kbf == ekbf

    def test_all_filters_consistent(self):
        N = 500
        cfg = _filter_cfg(["kbf", "ekbf", "enkbf-stochastic", "enkbf-deterministic", {"name": "fpf", "gain": "constant"}],
                          N=[N], trials=20, horizon=2.0)
        _, summary = run_filter_experiment(cfg)
        bound = 5 / np.sqrt(N) * np.sqrt(steady_state_variance_scalar(-0.5, 1.0, 1.0))
        for tag in ("enkbf-stochastic", "enkbf-deterministic", "fpf-constant"):
            vals = [r[4] for r in summary if r[1] == tag]
            assert len(vals) == 20
            assert np.mean(vals) < bound
        assert all(r[4] == 0.0 for r in summary if r[1] in ("kbf", "ekbf"))

    def test_trial_isolation(self):
        filters = ["kbf", "enkbf-stochastic"]
        a, _ = run_filter_experiment(_filter_cfg(filters, trials=1))
        b, _ = run_filter_experiment(_filter_cfg(filters, trials=2))
        assert a == [r for r in b if r[0] == 0]

    def test_nonlinear_model_runs(self):
        cfg = _filter_cfg(["ekbf", "enkbf-deterministic", {"name": "fpf", "gain": {"name": "galerkin", "M": 3}}],
                          model="double_well_1d")
        _, summary = run_filter_experiment(cfg)
        assert all(r[5] == "ok" and math.isnan(r[4]) for r in summary)


class TestCli:
    def _write(self, tmp_path, raw, name="cfg.yaml"):
        path = tmp_path / name
        path.write_text(yaml.safe_dump(raw))
        return str(path)

    def test_gain_bench_byte_identical(self, tmp_path):
        cfg = self._write(tmp_path, {"kind": "gain-bench", "N": [20, 30], "trials": 2,
                                     "algorithms": ["constant", {"name": "coupling", "epsilon": [0.1]}]})
        outs = []
        for k in range(2):
            out = tmp_path / f"run{k}.csv"
            assert cli.main(["gain-bench", "--config", cfg, "--seed", "9", "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        header = outs[0].decode().splitlines()[0].split(",")
        assert header == ERROR_HEADER

    def test_seed_override_changes_output(self, tmp_path):
        cfg = self._write(tmp_path, {"kind": "gain-bench", "N": 20, "trials": 1, "algorithms": ["constant"]})
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cli.main(["gain-bench", "--config", cfg, "--seed", "1", "--out", str(a)])
        cli.main(["gain-bench", "--config", cfg, "--seed", "2", "--out", str(b)])
        assert a.read_bytes() != b.read_bytes()

    def test_gain_eval_dump_coupling(self, tmp_path):
        cfg = self._write(tmp_path, {"kind": "gain-eval", "N": 12,
                                     "algorithms": [{"name": "coupling", "epsilon": [0.05, 0.1]}]})
        out = tmp_path / "eval.csv"
        assert cli.main(["gain-eval", "--config", cfg, "--out", str(out), "--dump-coupling"]) == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["algorithm", "param", "i", "x", "K_alg", "K_exact", "rho"]
        assert len(rows) == 1 + 24
        for eps in ("0.05", "0.1"):
            plan = list(csv.reader((tmp_path / f"eval.coupling_eps{eps}.csv").open()))
            assert plan[0] == ["i", "j", "t_ij"]
            assert math.isclose(sum(float(r[2]) for r in plan[1:]), 1.0, rel_tol=1e-12)

    def test_filter_run_writes_series_and_summary(self, tmp_path):
        cfg = self._write(tmp_path, {"kind": "filter-run", "filters": ["kbf", "enkbf-deterministic"], "N": 20,
                                     "trials": 1, "horizon": 0.1, "record_every": 5})
        out = tmp_path / "f.csv"
        assert cli.main(["filter-run", "--config", cfg, "--out", str(out)]) == 0
        series = list(csv.reader(out.open()))
        assert series[0] == ["trial", "filter", "N", "step", "t", "truth_1", "mean_1", "var_1"]
        assert len(series) == 1 + 2 * 3
        assert (tmp_path / "f_summary.csv").exists()

    @pytest.mark.parametrize(
        "raw, command",
        [
            ({"kind": "gain-bench", "algorithms": ["constant"], "typo": 1}, "gain-bench"),
            ({"kind": "gain-bench", "algorithms": ["constant"]}, "filter-run"),
        ],
    )
    def test_config_errors_exit_2(self, tmp_path, raw, command, capsys):
        cfg = self._write(tmp_path, raw)
        assert cli.main([command, "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 2
        assert "ctfilter:" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert cli.main(["gain-bench", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_write_csv_is_stable(tmp_path):
    rows = error_rows(run_gain_benchmark(_gain_cfg(trials=1)))
    write_csv(tmp_path / "a.csv", ERROR_HEADER, rows)
    text = (tmp_path / "a.csv").read_text()
    assert "\r" not in text
    values = [float(line.split(",")[4]) for line in text.splitlines()[1:]]
    assert values == [r[4] for r in rows]
