import json

import numpy as np
import pytest

from nhsim.cli import main
from nhsim.circuit import EchoSeries
from nhsim.errors import BudgetExhaustedError, ConfigError
from nhsim.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    ParameterCache,
    TimeGrid,
    compile_gate,
    fmt,
    minimal_layers,
    run_avg_le_sweep,
    run_convergence_study,
    run_layer_study,
    run_le_curve,
)
from nhsim.compiler import AnsatzParameters


BASE = {
    "model": {"n_sites": 2, "coupling": 1.0, "field": 0.5,
              "perturbation": {"index": 1, "strength": 0.1}},
    "beta": 5.0,
    "dilation": {"eta0": 2.0, "segments_per_unit": 100},
    "ansatz": {"layers": 10, "t_s": 0.0035},
    "optimizer": {"max_iterations": 200, "target_fitness": 0.95, "seed": 3},
    "time_grid": {"t_start": 0.0, "t_end": 1.0, "t_step": 0.5},
    "simulate": False,
    "output": "out",
}


def make_config(**overrides):
    raw = json.loads(json.dumps(BASE))
    for key, val in overrides.items():
        if isinstance(val, dict) and key in raw and isinstance(raw[key], dict):
            raw[key].update(val)
        else:
            raw[key] = val
    return raw


class TestConfigParsing:
    def test_minimal_roundtrip(self):
        cfg = ExperimentConfig.from_dict(BASE)
        assert cfg.model.n_sites == 2
        assert cfg.optimizer.seed == 3
        resolved = cfg.resolved()
        again = ExperimentConfig.from_dict(resolved)
        assert again.resolved() == resolved

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            ExperimentConfig.from_dict(make_config(bogus=1))

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="unknown dilation keys"):
            ExperimentConfig.from_dict(make_config(dilation={"eta": 2.0}))
        with pytest.raises(ConfigError, match="unknown optimizer keys"):
            ExperimentConfig.from_dict(make_config(optimizer={"lr": 0.1}))

    def test_bad_grid(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(make_config(time_grid={"t_step": -1.0}))

    def test_window_beyond_grid(self):
        with pytest.raises(ConfigError, match="window"):
            ExperimentConfig.from_dict(make_config(average_window={"tau": 5.0, "T": 5.0}))

    def test_perturbation_index_check(self):
        with pytest.raises(ConfigError, match="index"):
            ExperimentConfig.from_dict(make_config(model={"perturbation": {"index": 5, "strength": 0.1}}))

    def test_bad_sweep_field(self):
        with pytest.raises(ConfigError, match="sweep"):
            ExperimentConfig.from_dict(make_config(sweep={"kappa": [0.1]}))

    def test_sweep_points_cartesian(self):
        cfg = ExperimentConfig.from_dict(
            make_config(sweep={"g": [0.1, 1.5], "n": [1, 2]}))
        pts = cfg.sweep_points()
        assert len(pts) == 4
        assert {"g": 0.1, "n": 1} in pts and {"g": 1.5, "n": 2} in pts

    def test_with_overrides(self):
        cfg = ExperimentConfig.from_dict(BASE)
        cfg2 = cfg.with_overrides({"g": 1.2, "n_sites": 3})
        assert cfg2.model.field == 1.2
        assert cfg2.model.n_sites == 3
        assert cfg.model.field == 0.5  # original untouched

    def test_time_grid_points(self):
        grid = TimeGrid(0.0, 2.0, 0.5)
        np.testing.assert_allclose(grid.points(), [0.0, 0.5, 1.0, 1.5, 2.0])


class TestFloatFormatting:
    def test_roundtrip(self):
        for v in [0.1, 1 / 3, 2e-17, float("nan")]:
            s = fmt(v)
            if s == "nan":
                continue
            assert float(s) == v


class TestParameterCache:
    def test_store_load_roundtrip(self, tmp_path):
        cache = ParameterCache(tmp_path)
        params = AnsatzParameters(2, 3, 0.0035, np.arange(18.0).reshape(2, 3, 3))
        cache.store("abc", params, "deadbeef", 0.995, 42)
        back, meta = cache.load("abc")
        np.testing.assert_array_equal(back.theta, params.theta)
        assert meta["fitness_achieved"] == 0.995
        assert meta["iterations_used"] == 42
        assert meta["target_hash"] == "deadbeef"

    def test_missing_key(self, tmp_path):
        assert ParameterCache(tmp_path).load("nope") is None

    def test_key_sensitivity(self):
        cfg = ExperimentConfig.from_dict(BASE)
        k0 = ParameterCache.key(cfg, 1.0)
        assert ParameterCache.key(cfg, 2.0) != k0
        cfg2 = ExperimentConfig.from_dict(make_config(ansatz={"layers": 11}))
        assert ParameterCache.key(cfg2, 1.0) != k0
        cfg3 = ExperimentConfig.from_dict(make_config(optimizer={"seed": 4}))
        assert ParameterCache.key(cfg3, 1.0) != k0
        # beta does not enter the compile cache
        cfg4 = ExperimentConfig.from_dict(make_config(beta=9.0))
        assert ParameterCache.key(cfg4, 1.0) == k0


class TestTheoryCurveRunner:
    def test_csv_shape_and_values(self, tmp_path):
        cfg = ExperimentConfig.from_dict(make_config(sweep={"g": [0.3, 1.2]}))
        results = run_le_curve(cfg, tmp_path)
        assert len(results) == 2
        for overrides, series in results:
            assert isinstance(series, EchoSeries)
            assert len(series.times) == 3
            assert ((series.le_theory >= 0) & (series.le_theory <= 1)).all()
            assert np.isnan(series.le_simulated).all()
        csv = (tmp_path / "le_curve_g0.3.csv").read_text().splitlines()
        assert csv[0] == CSV_HEADER
        assert len(csv) == 4
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "le-curve"

    def test_determinism(self, tmp_path):
        cfg = ExperimentConfig.from_dict(make_config(sweep={"g": [0.3]}))
        run_le_curve(cfg, tmp_path / "a")
        run_le_curve(cfg, tmp_path / "b")
        fa = (tmp_path / "a" / "le_curve_g0.3.csv").read_bytes()
        fb = (tmp_path / "b" / "le_curve_g0.3.csv").read_bytes()
        assert fa == fb


class TestSimulatedRunner:
    def test_simulated_curve_micro(self, tmp_path):
        cfg = ExperimentConfig.from_dict(make_config(simulate=True))
        results = run_le_curve(cfg, tmp_path)
        _, series = results[0]
        # t=0 trivial; later points compiled
        assert series.le_simulated[0] == 1.0
        assert not np.isnan(series.le_simulated).any()
        assert (series.fitness[1:] >= 0.9).all()
        assert ((series.success_prob[1:] > 0) & (series.success_prob[1:] <= 1)).all()
        assert np.abs(series.le_simulated - series.le_theory).max() <= 0.1
        # compiled artifacts landed in the cache
        assert len(list((tmp_path / "cache").glob("*.json"))) == 2

    def test_cache_hit_on_rerun(self, tmp_path):
        cfg = ExperimentConfig.from_dict(make_config(simulate=True))
        run_le_curve(cfg, tmp_path)
        first = (tmp_path / "le_curve_base.csv").read_bytes()
        run_le_curve(cfg, tmp_path)  # second run hits the cache
        assert (tmp_path / "le_curve_base.csv").read_bytes() == first

    def test_stride_interpolation(self, tmp_path):
        cfg = ExperimentConfig.from_dict(make_config(
            simulate=True, sim_stride=2,
            time_grid={"t_start": 0.0, "t_end": 1.0, "t_step": 0.25}))
        _, series = run_le_curve(cfg, tmp_path)[0]
        assert not np.isnan(series.le_simulated).any()   # interpolated between
        assert np.isnan(series.fitness[1])               # not compiled there
        assert not np.isnan(series.fitness[2])

    def test_warm_start_smoke(self, tmp_path):
        cfg = ExperimentConfig.from_dict(make_config(simulate=True, warm_start=True))
        _, series = run_le_curve(cfg, tmp_path)[0]
        assert not np.isnan(series.le_simulated).any()


class TestAvgLeRunner:
    def test_theory_window(self, tmp_path):
        cfg = ExperimentConfig.from_dict(make_config(
            time_grid={"t_start": 0.0, "t_end": 4.0, "t_step": 0.5},
            average_window={"tau": 1.0, "T": 2.0},
            sweep={"g": [0.2, 1.5]}))
        rows = run_avg_le_sweep(cfg, tmp_path)
        assert len(rows) == 2
        for ns, g, lth, lsim in rows:
            assert ns == 2 and 0.0 <= lth <= 1.0 and np.isnan(lsim)
        header = (tmp_path / "avg_le.csv").read_text().splitlines()[0]
        assert header == "n_sites,g,avg_le_theory,avg_le_sim"
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "avg-le"

    def test_requires_window(self, tmp_path):
        with pytest.raises(ConfigError):
            run_avg_le_sweep(ExperimentConfig.from_dict(BASE), tmp_path)


class TestStudies:
    def test_minimal_layers_finds_small_circuit(self):
        cfg = ExperimentConfig.from_dict(make_config(
            optimizer={"max_iterations": 200, "target_fitness": 0.9}))
        target = np.eye(8, dtype=complex)  # N=3 identity: reachable at small L
        ent = cfg.entangler_for(3)
        found = minimal_layers(cfg, target, ent, 0.5, seed=0, layer_cap=16)
        assert 1 <= found <= 16

    def test_minimal_layers_trivial_target_needs_one(self):
        cfg = ExperimentConfig.from_dict(make_config(
            optimizer={"max_iterations": 50, "target_fitness": 0.9}))
        target = np.eye(4, dtype=complex)
        ent = cfg.entangler_for(2)
        assert minimal_layers(cfg, target, ent, 0.01, seed=0, layer_cap=8) == 1

    def test_minimal_layers_budget_exhausted(self):
        cfg = ExperimentConfig.from_dict(make_config(
            optimizer={"max_iterations": 2, "target_fitness": 0.999999}))
        target = np.eye(4, dtype=complex)
        ent = cfg.entangler_for(2)
        with pytest.raises(BudgetExhaustedError):
            minimal_layers(cfg, target, ent, 0.999999, seed=0, layer_cap=2)

    def test_layer_study_rows(self, tmp_path):
        cfg = ExperimentConfig.from_dict(make_config(
            optimizer={"max_iterations": 150, "target_fitness": 0.9},
            study={"time": 0.5, "n_qubits": [2], "f_targets": [0.5, 0.8],
                   "restarts": 2}))
        rows, exhausted = run_layer_study(cfg, tmp_path)
        assert len(rows) == 2
        for nq, ft, mean_l, std_l in rows:
            assert nq == 2 and mean_l >= 1
        # tighter targets never need fewer layers
        assert rows[0][2] <= rows[1][2]
        assert (tmp_path / "layer_study.csv").exists()

    def test_convergence_study(self, tmp_path):
        cfg = ExperimentConfig.from_dict(make_config(
            optimizer={"max_iterations": 40, "target_fitness": 0.95},
            study={"time": 0.5, "n_qubits": [2, 3]}))
        traces, crossings = run_convergence_study(cfg, tmp_path)
        assert [nq for nq, _ in crossings] == [2, 3]
        for nq, trace in traces:
            assert trace.final_fitness >= trace.iterations[0][1]
            assert (tmp_path / f"convergence_N{nq}.csv").exists()

    @pytest.mark.slow
    def test_layer_study_fitness_target_tradeoff(self, tmp_path):
        # three-qubit register, three fitness targets: looser targets need
        # fewer layers; reductions printed for comparison with the source
        # figure (synthetic entangler, so percentages differ)
        cfg = ExperimentConfig.from_dict(make_config(
            ansatz={"layers": 64},
            optimizer={"max_iterations": 400, "target_fitness": 0.999,
                       "seed": 0, "init_amplitude": 0.1},
            study={"time": 1.0, "n_qubits": [3],
                   "f_targets": [0.99, 0.999, 0.9999], "restarts": 3}))
        rows, exhausted = run_layer_study(cfg, tmp_path)
        assert not exhausted
        by_target = {ft: mean_l for _, ft, mean_l, _ in rows}
        assert by_target[0.99] <= by_target[0.999] <= by_target[0.9999]
        for loose in (0.99, 0.999):
            cut = 1 - by_target[loose] / by_target[0.9999]
            print(f"layer reduction at F={loose}: {100 * cut:.0f}%")


class TestCompileGate:
    def test_dilated_target_and_cache_hit(self, tmp_path):
        cfg = ExperimentConfig.from_dict(BASE)
        params, fit, iters, duration, path, cached = compile_gate(cfg, tmp_path, t=0.5)
        assert not cached
        assert duration == pytest.approx(10 * 0.0035)
        assert path.exists()
        _, fit2, _, _, _, cached2 = compile_gate(cfg, tmp_path, t=0.5)
        assert cached2 and fit2 == fit

    def test_matrix_target(self, tmp_path):
        rng = np.random.default_rng(0)
        from support import rand_unitary
        u = rand_unitary(4, rng)
        np.save(tmp_path / "target.npy", u)
        cfg = ExperimentConfig.from_dict(make_config(
            ansatz={"layers": 8}, optimizer={"max_iterations": 300, "target_fitness": 0.99}))
        params, fit, iters, duration, path, cached = compile_gate(
            cfg, tmp_path, matrix_path=str(tmp_path / "target.npy"))
        assert fit >= 0.99
        raw = json.loads(path.read_text())
        assert set(raw) == {"L", "N", "t_s", "theta", "target_hash",
                            "fitness_achieved", "iterations_used"}
        assert raw["L"] == 8 and raw["N"] == 2
        assert len(raw["theta"]) == 8 * 2 * 3


class TestCli:
    def _write(self, tmp_path, raw):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(raw))
        return str(p)

    def test_validate_ok(self, tmp_path, capsys):
        path = self._write(tmp_path, BASE)
        assert main(["validate", "--config", path]) == 0
        assert "config OK" in capsys.readouterr().out

    def test_validate_bad_config_exit_2(self, tmp_path, capsys):
        path = self._write(tmp_path, make_config(bogus=1))
        assert main(["validate", "--config", path]) == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_file_exit_2(self, tmp_path):
        assert main(["validate", "--config", str(tmp_path / "none.json")]) == 2

    def test_le_curve_runs(self, tmp_path, capsys):
        path = self._write(tmp_path, BASE)
        out = tmp_path / "out"
        assert main(["le-curve", "--config", path, "--out", str(out)]) == 0
        assert (out / "le_curve_base.csv").exists()

    def test_numerical_failure_exit_3(self, tmp_path):
        # eta0 too small for this horizon: positivity must fail
        raw = make_config(simulate=True,
                          dilation={"eta0": 0.05, "segments_per_unit": 100},
                          model={"perturbation": {"index": 1, "strength": 0.4},
                                 "n_sites": 2, "field": 0.5},
                          time_grid={"t_start": 0.0, "t_end": 2.0, "t_step": 1.0})
        path = self._write(tmp_path, raw)
        code = main(["le-curve", "--config", path, "--out", str(tmp_path / "o")])
        assert code == 3

    def test_compile_gate_cli(self, tmp_path, capsys):
        path = self._write(tmp_path, BASE)
        out = tmp_path / "o"
        assert main(["compile-gate", "--config", path, "--time", "0.5",
                     "--out", str(out)]) == 0
        assert "compiled L=10" in capsys.readouterr().out
        # second call reports the cache hit
        assert main(["compile-gate", "--config", path, "--time", "0.5",
                     "--out", str(out)]) == 0
        assert "cache hit" in capsys.readouterr().out

    def test_compile_gate_budget_exit_4(self, tmp_path):
        raw = make_config(optimizer={"max_iterations": 2, "target_fitness": 0.99999},
                          ansatz={"layers": 2})
        path = self._write(tmp_path, raw)
        assert main(["compile-gate", "--config", path, "--time", "0.5",
                     "--out", str(tmp_path / "o")]) == 4

    def test_seed_override_changes_cache_key(self, tmp_path):
        cfg1 = ExperimentConfig.from_dict(BASE)
        raw = self._write(tmp_path, BASE)
        # just ensure the flag is accepted and the run completes
        assert main(["le-curve", "--config", raw, "--seed", "9",
                     "--out", str(tmp_path / "s")]) == 0

    def test_workers_flag_parallel_matches_serial(self, tmp_path):
        raw = make_config(simulate=True)
        path = self._write(tmp_path, raw)
        assert main(["le-curve", "--config", path, "--out", str(tmp_path / "w1"),
                     "--workers", "1"]) == 0
        assert main(["le-curve", "--config", path, "--out", str(tmp_path / "w2"),
                     "--workers", "2"]) == 0
        b1 = (tmp_path / "w1" / "le_curve_base.csv").read_bytes()
        b2 = (tmp_path / "w2" / "le_curve_base.csv").read_bytes()
        assert b1 == b2
