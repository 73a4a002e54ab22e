"""Config-driven experiment runners: echo curves, average-echo sweeps,
layer-count and convergence studies, and standalone gate compilation.

All runners are deterministic for a fixed config and seed; emitted CSV
numbers are formatted with shortest round-trip float repr so reruns are
byte-identical.  Compiled parameters are cached on disk under a content
hash of everything that influences them.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import circuit, compiler, dilation, models
from .errors import BudgetExhaustedError, ConfigError

CSV_HEADER = "t,le_theory,le_sim,fitness,success_prob"


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class TimeGrid:
    t_start: float = 0.0
    t_end: float = 20.0
    t_step: float = 0.5

    def __post_init__(self):
        if self.t_step <= 0 or self.t_end < self.t_start:
            raise ConfigError("time grid must be increasing with positive step")

    def points(self) -> np.ndarray:
        n = int(np.floor((self.t_end - self.t_start) / self.t_step + 1 + 1e-9))
        return self.t_start + self.t_step * np.arange(n)


@dataclass(frozen=True)
class AverageWindow:
    tau: float
    horizon: float

    def __post_init__(self):
        if self.tau < 0 or self.horizon <= 0:
            raise ConfigError("average window needs tau >= 0 and T > 0")


@dataclass
class ExperimentConfig:
    """Resolved experiment description (see configs/ for JSON examples)."""

    model: models.IsingSpec
    perturbation: models.PerturbationSpec
    beta: float = 10.0
    eta0: float = 2.0
    positivity_margin: float = 1e-6
    segments_per_unit: int = 200
    midpoint: bool = False
    layers: int = 150
    t_s: float = 0.0035
    coupling_table_path: str | None = None
    optimizer: compiler.OptimizerConfig = field(default_factory=compiler.OptimizerConfig)
    time_grid: TimeGrid = field(default_factory=TimeGrid)
    average_window: AverageWindow | None = None
    sweep: dict = field(default_factory=dict)
    simulate: bool = True
    sim_stride: int = 1
    warm_start: bool = False
    study_time: float = 1.0
    study_qubits: list = field(default_factory=lambda: [2, 3])
    f_targets: list = field(default_factory=lambda: [0.99, 0.999])
    restarts: int = 5
    output: str = "out"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            return cls._parse(dict(raw))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad config: {exc}") from exc

    @classmethod
    def _parse(cls, raw: dict) -> "ExperimentConfig":
        def check_keys(section, given, allowed):
            unknown = set(given) - allowed
            if unknown:
                raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")

        check_keys("config", raw, {
            "model", "beta", "dilation", "ansatz", "optimizer", "time_grid",
            "average_window", "sweep", "simulate", "sim_stride", "warm_start",
            "study", "output",
        })
        m = raw.get("model", {})
        pert = m.get("perturbation", {})
        check_keys("model", m, {"n_sites", "coupling", "field", "perturbation"})
        check_keys("model.perturbation", pert, {"index", "strength"})
        model = models.IsingSpec(
            n_sites=int(m.get("n_sites", 3)),
            coupling=float(m.get("coupling", 1.0)),
            field=float(m.get("field", 0.5)))
        perturbation = models.PerturbationSpec(
            index=int(pert.get("index", 1)),
            strength=float(pert.get("strength", 0.0)))
        if not 1 <= perturbation.index <= model.n_sites:
            raise ConfigError(
                f"perturbation index {perturbation.index} outside 1..{model.n_sites}")
        d = raw.get("dilation", {})
        a = raw.get("ansatz", {})
        o = raw.get("optimizer", {})
        tg = raw.get("time_grid", {})
        st = raw.get("study", {})
        aw = raw.get("average_window")
        check_keys("dilation", d, {"eta0", "positivity_margin", "segments_per_unit",
                                   "midpoint"})
        check_keys("ansatz", a, {"layers", "t_s", "coupling_table"})
        check_keys("optimizer", o, {"method", "learning_rate", "max_iterations",
                                    "target_fitness", "seed", "init", "init_amplitude"})
        check_keys("time_grid", tg, {"t_start", "t_end", "t_step"})
        check_keys("study", st, {"time", "n_qubits", "f_targets", "restarts"})
        if aw is not None:
            check_keys("average_window", aw, {"tau", "T"})
        cfg = cls(
            model=model,
            perturbation=perturbation,
            beta=float(raw.get("beta", 10.0)),
            eta0=float(d.get("eta0", 2.0)),
            positivity_margin=float(d.get("positivity_margin", 1e-6)),
            segments_per_unit=int(d.get("segments_per_unit", 200)),
            midpoint=bool(d.get("midpoint", False)),
            layers=int(a.get("layers", 150)),
            t_s=float(a.get("t_s", 0.0035)),
            coupling_table_path=a.get("coupling_table"),
            optimizer=compiler.OptimizerConfig(
                method=o.get("method", "adaptive-moment"),
                learning_rate=float(o.get("learning_rate", 0.05)),
                max_iterations=int(o.get("max_iterations", 500)),
                target_fitness=float(o.get("target_fitness", 0.999)),
                seed=int(o.get("seed", 0)),
                init=o.get("init", "zeros"),
                init_amplitude=float(o.get("init_amplitude", 0.1))),
            time_grid=TimeGrid(
                t_start=float(tg.get("t_start", 0.0)),
                t_end=float(tg.get("t_end", 20.0)),
                t_step=float(tg.get("t_step", 0.5))),
            average_window=AverageWindow(float(aw["tau"]), float(aw["T"])) if aw else None,
            sweep={k: list(v) for k, v in raw.get("sweep", {}).items()},
            simulate=bool(raw.get("simulate", True)),
            sim_stride=int(raw.get("sim_stride", 1)),
            warm_start=bool(raw.get("warm_start", False)),
            study_time=float(st.get("time", 1.0)),
            study_qubits=[int(v) for v in st.get("n_qubits", [2, 3])],
            f_targets=[float(v) for v in st.get("f_targets", [0.99, 0.999])],
            restarts=int(st.get("restarts", 5)),
            output=str(raw.get("output", "out")))
        bad_sweep = set(cfg.sweep) - {"g", "n", "n_sites"}
        if bad_sweep:
            raise ConfigError(f"unknown sweep fields: {sorted(bad_sweep)}")
        if cfg.sim_stride < 1:
            raise ConfigError("sim_stride must be >= 1")
        if cfg.beta < 0:
            raise ConfigError("beta must be >= 0")
        if cfg.average_window is not None:
            hi = cfg.average_window.tau + cfg.average_window.horizon
            if cfg.time_grid.t_end < hi:
                raise ConfigError(
                    f"time grid ends at {cfg.time_grid.t_end} before window end {hi}")
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(raw)

    def resolved(self) -> dict:
        """JSON-serializable snapshot of everything that defines results."""
        return {
            "model": {
                "n_sites": self.model.n_sites,
                "coupling": self.model.coupling,
                "field": self.model.field,
                "perturbation": {
                    "index": self.perturbation.index,
                    "strength": self.perturbation.strength,
                },
            },
            "beta": self.beta,
            "dilation": {
                "eta0": self.eta0,
                "positivity_margin": self.positivity_margin,
                "segments_per_unit": self.segments_per_unit,
                "midpoint": self.midpoint,
            },
            "ansatz": {
                "layers": self.layers,
                "t_s": self.t_s,
                "coupling_table": self.coupling_table_path,
            },
            "optimizer": {
                "method": self.optimizer.method,
                "learning_rate": self.optimizer.learning_rate,
                "max_iterations": self.optimizer.max_iterations,
                "target_fitness": self.optimizer.target_fitness,
                "seed": self.optimizer.seed,
                "init": self.optimizer.init,
                "init_amplitude": self.optimizer.init_amplitude,
            },
            "time_grid": {
                "t_start": self.time_grid.t_start,
                "t_end": self.time_grid.t_end,
                "t_step": self.time_grid.t_step,
            },
            "average_window": None if self.average_window is None else {
                "tau": self.average_window.tau, "T": self.average_window.horizon},
            "sweep": self.sweep,
            "simulate": self.simulate,
            "sim_stride": self.sim_stride,
            "warm_start": self.warm_start,
            "study": {
                "time": self.study_time,
                "n_qubits": self.study_qubits,
                "f_targets": self.f_targets,
                "restarts": self.restarts,
            },
        }

    # --- derived objects ---

    def coupling_table(self) -> models.CouplingTable:
        if self.coupling_table_path:
            return models.load_coupling_table(self.coupling_table_path)
        return models.default_coupling_table()

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Copy with sweep-point overrides {g|n|n_sites: value} applied."""
        model = self.model
        pert = self.perturbation
        if "g" in overrides:
            model = models.IsingSpec(model.n_sites, model.coupling, float(overrides["g"]))
        if "n_sites" in overrides:
            ns = int(overrides["n_sites"])
            model = models.IsingSpec(ns, model.coupling, model.field)
            if pert.index > ns:
                raise ConfigError(f"perturbation index {pert.index} outside 1..{ns}")
        if "n" in overrides:
            pert = models.PerturbationSpec(int(overrides["n"]), pert.strength)
            if not 1 <= pert.index <= model.n_sites:
                raise ConfigError(f"perturbation index {pert.index} outside 1..{model.n_sites}")
        out = ExperimentConfig(**{**self.__dict__, "model": model, "perturbation": pert})
        return out

    def hamiltonian(self) -> np.ndarray:
        return models.build_Hs(self.model, self.perturbation)

    def initial_state(self) -> np.ndarray:
        return models.thermal_state(models.build_ising(self.model), self.beta)

    def entangler_for(self, n_qubits: int) -> np.ndarray:
        table = self.coupling_table().truncated(n_qubits)
        diag = models.entangler_generator_diagonal(table)
        return np.diag(np.exp(-1j * diag * self.t_s))

    def dilation_config(self, total_time: float) -> dilation.DilationConfig:
        return dilation.DilationConfig.for_time(
            total_time, self.segments_per_unit, eta0=self.eta0,
            positivity_margin=self.positivity_margin, midpoint=self.midpoint)

    def sweep_points(self) -> list:
        """Cartesian product of the sweep lists, as override dicts."""
        keys = [k for k in ("n_sites", "g", "n") if k in self.sweep]
        if not keys:
            return [{}]
        points = [{}]
        for k in keys:
            points = [{**p, k: v} for p in points for v in self.sweep[k]]
        return points


# ---------------------------------------------------------------------------
# float formatting and file emission


def fmt(x) -> str:
    """Shortest round-trip decimal form; identical across reruns."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, rows, header: str = CSV_HEADER) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def sweep_tag(overrides: dict) -> str:
    if not overrides:
        return "base"
    return "_".join(f"{k}{overrides[k]:g}" for k in sorted(overrides))


def write_manifest(out_dir: Path, cfg: ExperimentConfig, extra: dict) -> None:
    payload = {"config": cfg.resolved(), **extra}
    (out_dir / "manifest.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# compiled-parameter cache


class ParameterCache:
    """Content-addressed store of compiled ansatz parameters.

    Keys hash the resolved model/dilation/ansatz/optimizer config plus the
    evolution time; writes go through a temp file and atomic rename so
    concurrent writers of the same key cannot interleave.
    """

    def __init__(self, directory):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(cfg: ExperimentConfig, t: float) -> str:
        resolved = cfg.resolved()
        basis = {k: resolved[k] for k in ("model", "dilation", "ansatz", "optimizer")}
        # hash the table content, not just its path
        table = cfg.coupling_table()
        basis["couplings"] = sorted((i, j, v) for (i, j), v in table.entries.items())
        basis["warm_start"] = cfg.warm_start
        basis["t"] = float(t)
        blob = json.dumps(basis, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:24]

    def path(self, key: str) -> Path:
        return self.dir / f"{key}.json"

    def load(self, key: str):
        p = self.path(key)
        if not p.exists():
            return None
        return compiler.load_parameters(p)

    def store(self, key: str, params: compiler.AnsatzParameters, target_hash: str,
              fitness_achieved: float, iterations_used: int) -> dict:
        payload = compiler.parameters_payload(
            params, target_hash, fitness_achieved, iterations_used)
        fd, tmp = tempfile.mkstemp(dir=self.dir, suffix=".tmp")
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh)
        os.replace(tmp, self.path(key))
        return payload


def target_hash_of(u: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(u).tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# compilation of one time point


def compile_point(cfg: ExperimentConfig, t: float, cache: ParameterCache | None,
                  theta0: np.ndarray | None = None):
    """Compile the dilated evolution at time t; returns
    (params, fitness, iterations, cache_key, from_cache).

    The cache key covers the warm-start flag, so hits are valid even for
    warm-started runs (the theta lineage is deterministic given the seed).
    """
    n_qubits = cfg.model.n_sites + 1
    key = ParameterCache.key(cfg, t)
    if cache is not None:
        hit = cache.load(key)
        if hit is not None:
            params, meta = hit
            return params, meta["fitness_achieved"], meta["iterations_used"], key, True
    hs = cfg.hamiltonian()
    target = dilation.target_unitary(hs, cfg.dilation_config(t))
    ent = cfg.entangler_for(n_qubits)
    trace = compiler.optimize(target, ent, cfg.layers, cfg.optimizer,
                              t_s=cfg.t_s, theta0=theta0)
    params = trace.final_theta
    iters = trace.iterations[-1][0]
    if cache is not None:
        cache.store(key, params, target_hash_of(target), trace.final_fitness, iters)
    return params, trace.final_fitness, iters, key, False


def _sim_task(cfg_raw: dict, overrides: dict, t: float, cache_dir: str):
    """Process-pool entry: compile one (sweep point, time point) and run the
    dilated circuit."""
    cfg = ExperimentConfig.from_dict(cfg_raw).with_overrides(overrides)
    cache = ParameterCache(cache_dir)
    if t == 0.0:
        return 1.0, 1.0, 1.0 / (1.0 + cfg.eta0**2), None
    params, fit, iters, key, _ = compile_point(cfg, t, cache)
    hs = cfg.hamiltonian()
    rho0 = cfg.initial_state()
    ent = cfg.entangler_for(cfg.model.n_sites + 1)
    evolution = compiler.ansatz_unitary(params, ent)
    result = circuit.run_dilated(rho0, evolution, cfg.eta0)
    le_sim = circuit.loschmidt_echo(rho0, result.system_state)
    return le_sim, fit, result.success_probability, key


# ---------------------------------------------------------------------------
# runners


def run_le_curve(cfg: ExperimentConfig, out_dir, workers: int = 1):
    """Echo curves per sweep point: theory always, simulated when enabled.

    The t = 0 grid point needs no compilation (the evolution is the
    identity) and is reported with fitness 1.  Writes one CSV per sweep
    point plus a manifest; returns the list of (overrides, EchoSeries).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = ParameterCache(out / "cache")
    times = cfg.time_grid.points()
    results = []
    cache_keys = []
    warn_log = []

    sim_tasks = []
    if cfg.simulate:
        for overrides in cfg.sweep_points():
            for k, t in enumerate(times):
                if k % cfg.sim_stride == 0:
                    sim_tasks.append((overrides, float(t)))

    sim_values = {}
    if sim_tasks:
        raw = cfg.resolved()
        if workers > 1 and not cfg.warm_start:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                futs = [pool.submit(_sim_task, raw, ov, t, str(cache.dir))
                        for ov, t in sim_tasks]
                for (ov, t), fut in zip(sim_tasks, futs):
                    sim_values[(sweep_tag(ov), t)] = fut.result()
        else:
            # warm start chains theta along the time grid, so it runs
            # sequentially within each sweep point
            prev_theta = {}
            for ov, t in sim_tasks:
                tag = sweep_tag(ov)
                if t == 0.0:
                    sim_values[(tag, t)] = (1.0, 1.0, 1.0 / (1.0 + cfg.eta0**2), None)
                    continue
                point_cfg = cfg.with_overrides(ov)
                theta0 = prev_theta.get(tag) if cfg.warm_start else None
                params, fit, _, key, _ = compile_point(point_cfg, t, cache, theta0)
                rho0 = point_cfg.initial_state()
                ent = point_cfg.entangler_for(point_cfg.model.n_sites + 1)
                run = circuit.run_dilated(
                    rho0, compiler.ansatz_unitary(params, ent), point_cfg.eta0)
                sim_values[(tag, t)] = (circuit.loschmidt_echo(rho0, run.system_state),
                                        fit, run.success_probability, key)
                if cfg.warm_start:
                    prev_theta[tag] = params.theta

    for overrides in cfg.sweep_points():
        point_cfg = cfg.with_overrides(overrides)
        tag = sweep_tag(overrides)
        hs = point_cfg.hamiltonian()
        rho0 = point_cfg.initial_state()
        le_th = circuit.theory_echo_curve(hs, rho0, times)
        le_sim = np.full(len(times), np.nan)
        fit = np.full(len(times), np.nan)
        succ = np.full(len(times), np.nan)
        if cfg.simulate:
            for k, t in enumerate(times):
                got = sim_values.get((tag, float(t)))
                if got is None:
                    continue
                le_sim[k], fit[k], succ[k], key = got
                if key:
                    cache_keys.append(key)
                if fit[k] < point_cfg.optimizer.target_fitness:
                    warn_log.append(
                        f"{tag}: compilation at t={t:g} reached F={fit[k]:.6f} "
                        f"below target {point_cfg.optimizer.target_fitness}")
            if cfg.sim_stride > 1:
                compiled = ~np.isnan(le_sim)
                if compiled.sum() >= 2:
                    le_sim = np.interp(times, times[compiled], le_sim[compiled])
        series = circuit.EchoSeries(times, le_th, le_sim, fit, succ)
        write_csv(out / f"le_curve_{tag}.csv",
                  zip(times, le_th, le_sim, fit, succ))
        results.append((overrides, series))

    write_manifest(out, cfg, {
        "command": "le-curve",
        "cache_keys": sorted(set(cache_keys)),
        "warnings": warn_log,
        "csv_files": [f"le_curve_{sweep_tag(ov)}.csv" for ov, _ in results],
    })
    return results


def run_avg_le_sweep(cfg: ExperimentConfig, out_dir, workers: int = 1):
    """Average echo over the configured window per sweep point.

    Theory path on every grid point; simulated path (when enabled) compiled
    at the configured stride with linear interpolation between compiled
    points.  Returns rows (n_sites, g, lbar_theory, lbar_sim).
    """
    if cfg.average_window is None:
        raise ConfigError("avg-le needs an average_window in the config")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves = run_le_curve(cfg, out, workers=workers)
    tau, horizon = cfg.average_window.tau, cfg.average_window.horizon
    rows = []
    for overrides, series in curves:
        point_cfg = cfg.with_overrides(overrides)
        lbar_th = circuit.average_le(series, tau, horizon, "theory")
        lbar_sim = float("nan")
        if cfg.simulate and not np.isnan(series.le_simulated).all():
            lbar_sim = circuit.average_le(series, tau, horizon, "simulated")
        rows.append((point_cfg.model.n_sites, point_cfg.model.field, lbar_th, lbar_sim))
    write_csv(out / "avg_le.csv", rows, header="n_sites,g,avg_le_theory,avg_le_sim")
    manifest = json.loads((out / "manifest.json").read_text())
    manifest["command"] = "avg-le"
    manifest["csv_files"] = sorted(set(manifest.get("csv_files", [])) | {"avg_le.csv"})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return rows


def minimal_layers(cfg: ExperimentConfig, target: np.ndarray, ent: np.ndarray,
                   f_target: float, seed: int, layer_cap: int) -> int:
    """Smallest L reaching f_target within the iteration budget, by
    doubling bracket then binary search.  Raises BudgetExhaustedError when
    even layer_cap fails."""
    opt = compiler.OptimizerConfig(
        method=cfg.optimizer.method, learning_rate=cfg.optimizer.learning_rate,
        max_iterations=cfg.optimizer.max_iterations, target_fitness=f_target,
        seed=seed, init="random-uniform", init_amplitude=cfg.optimizer.init_amplitude)

    def reaches(layers: int) -> bool:
        trace = compiler.optimize(target, ent, layers, opt, t_s=cfg.t_s)
        return trace.converged

    lo, hi = 0, 1
    while not reaches(hi):
        lo = hi
        hi *= 2
        if hi > layer_cap:
            raise BudgetExhaustedError(
                f"no L <= {layer_cap} reaches F >= {f_target} within "
                f"{opt.max_iterations} iterations")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if reaches(mid):
            hi = mid
        else:
            lo = mid
    return hi


def run_layer_study(cfg: ExperimentConfig, out_dir, f_targets=None, restarts=None):
    """Minimal layer count vs register size and fitness target, aggregated
    over random-init restarts.  Budget exhaustion is recorded per cell."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    f_targets = list(f_targets) if f_targets is not None else cfg.f_targets
    restarts = int(restarts) if restarts is not None else cfg.restarts
    if restarts < 1:
        raise ConfigError("restarts must be >= 1")
    rows = []
    exhausted = []
    for nq in cfg.study_qubits:
        ns = nq - 1
        point_cfg = cfg.with_overrides({"n_sites": ns}) if ns != cfg.model.n_sites else cfg
        hs = point_cfg.hamiltonian()
        target = dilation.target_unitary(hs, point_cfg.dilation_config(cfg.study_time))
        ent = point_cfg.entangler_for(nq)
        for f_target in f_targets:
            found = []
            for r in range(restarts):
                try:
                    found.append(minimal_layers(
                        point_cfg, target, ent, f_target,
                        seed=cfg.optimizer.seed + r, layer_cap=max(4 * cfg.layers, 64)))
                except BudgetExhaustedError as exc:
                    exhausted.append(f"N={nq} F={f_target} restart={r}: {exc}")
            if found:
                rows.append((nq, f_target, float(np.mean(found)), float(np.std(found))))
            else:
                rows.append((nq, f_target, float("nan"), float("nan")))
    write_csv(out / "layer_study.csv", rows,
              header="n_qubits,f_target,mean_layers,std_layers")
    write_manifest(out, cfg, {"command": "layer-study", "budget_exhausted": exhausted})
    return rows, exhausted


def run_convergence_study(cfg: ExperimentConfig, out_dir):
    """Fitness vs iteration for each register size at the configured layer
    count; reports the first iteration with F >= 0.995."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traces = []
    crossings = []
    for nq in cfg.study_qubits:
        ns = nq - 1
        point_cfg = cfg.with_overrides({"n_sites": ns}) if ns != cfg.model.n_sites else cfg
        hs = point_cfg.hamiltonian()
        target = dilation.target_unitary(hs, point_cfg.dilation_config(cfg.study_time))
        ent = point_cfg.entangler_for(nq)
        trace = compiler.optimize(target, ent, cfg.layers, cfg.optimizer, t_s=cfg.t_s)
        traces.append((nq, trace))
        crossings.append((nq, trace.first_reaching(0.995)))
        write_csv(out / f"convergence_N{nq}.csv",
                  [(it, f, g) for it, f, g, _ in trace.iterations],
                  header="iteration,fitness,grad_max")
    write_manifest(out, cfg, {
        "command": "convergence-study",
        "first_iteration_above_0.995": {str(n): c for n, c in crossings},
    })
    return traces, crossings


def compile_gate(cfg: ExperimentConfig, out_dir, t: float | None = None,
                 matrix_path: str | None = None):
    """Standalone compiler access: dilated target at time t (default) or a
    raw unitary from an .npy file.  Persists the parameter artifact and
    returns (params, fitness, iterations, duration, artifact_path, from_cache)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = ParameterCache(out / "cache")
    if matrix_path is not None:
        target = np.load(matrix_path)
        nq = int(np.log2(target.shape[0]))
        ent = cfg.entangler_for(nq)
        key_blob = json.dumps({
            "matrix": target_hash_of(target),
            "ansatz": cfg.resolved()["ansatz"],
            "optimizer": cfg.resolved()["optimizer"],
        }, sort_keys=True).encode()
        key = hashlib.sha256(key_blob).hexdigest()[:24]
        hit = cache.load(key)
        if hit is not None:
            params, meta = hit
            return (params, meta["fitness_achieved"], meta["iterations_used"],
                    compiler.circuit_duration(params), cache.path(key), True)
        trace = compiler.optimize(target, ent, cfg.layers, cfg.optimizer, t_s=cfg.t_s)
        params = trace.final_theta
        cache.store(key, params, target_hash_of(target), trace.final_fitness,
                    trace.iterations[-1][0])
        return (params, trace.final_fitness, trace.iterations[-1][0],
                compiler.circuit_duration(params), cache.path(key), False)
    t = cfg.study_time if t is None else t
    params, fit, iters, key, from_cache = compile_point(cfg, t, cache)
    return (params, fit, iters, compiler.circuit_duration(params),
            cache.path(key), from_cache)
