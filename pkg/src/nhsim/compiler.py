"""Layered variational compilation of a target unitary.

The ansatz is L layers, each layer being per-qubit rotation triples
R_x(th3) R_y(th2) R_x(th1) on every qubit followed by one fixed diagonal
entangler; layer 1 acts first.  The fitness is the normalized gate
fidelity |Tr(V† U(theta))|^2 / 4^N and its gradient is evaluated
analytically with one forward sweep of cached prefix products and one
backward sweep of suffix products, so the cost stays linear in L.

Rotation convention: R_gamma(beta) = exp(-i beta sigma_gamma / 2), which
sends |0> to (|0> - i|1>)/sqrt(2) under R_x(pi/2).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DimensionMismatchError, DomainError
from .linalg import SIGMA_X, SIGMA_Y, as_operator
from .models import entangler_generator_diagonal

_GX = -0.5j * SIGMA_X
_GY = -0.5j * SIGMA_Y


def rotation_gate(axis: str, angle: float) -> np.ndarray:
    """2x2 rotation exp(-i angle sigma_axis / 2) for axis 'x' or 'y'."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    if axis == "x":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if axis == "y":
        return np.array([[c, -s], [s, c]], dtype=complex)
    raise DomainError(f"axis must be 'x' or 'y', got {axis!r}")


def entangler(generator: np.ndarray, t_s: float) -> np.ndarray:
    """Diagonal unitary exp(-i H_int t_s) for a real diagonal generator,
    computed elementwise."""
    generator = as_operator(generator, "generator")
    off = generator - np.diag(np.diag(generator))
    if np.abs(off).max() > 1e-12 or np.abs(np.diag(generator).imag).max() > 1e-12:
        raise DomainError("entangler generator must be real diagonal")
    return np.diag(np.exp(-1j * np.diag(generator).real * t_s))


@dataclass
class AnsatzParameters:
    """Rotation angles indexed (layer, qubit, slot) plus the fixed
    entangler duration."""

    layers: int
    n_qubits: int
    t_s: float
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (self.layers, self.n_qubits, 3):
            raise DimensionMismatchError(
                f"theta shape {self.theta.shape} != ({self.layers}, {self.n_qubits}, 3)")

    @classmethod
    def zeros(cls, layers: int, n_qubits: int, t_s: float) -> "AnsatzParameters":
        return cls(layers, n_qubits, t_s, np.zeros((layers, n_qubits, 3)))


@dataclass(frozen=True)
class OptimizerConfig:
    """Gradient-ascent settings.  ``method`` is 'adaptive-moment' (default)
    or 'plain-gradient'; init is 'zeros' or 'random-uniform' over
    (-init_amplitude, init_amplitude)."""

    method: str = "adaptive-moment"
    learning_rate: float = 0.05
    max_iterations: int = 500
    target_fitness: float = 0.999
    seed: int = 0
    init: str = "zeros"
    init_amplitude: float = 0.1

    def __post_init__(self):
        if self.method not in ("adaptive-moment", "plain-gradient"):
            raise DomainError(f"unknown optimizer method {self.method!r}")
        if self.init not in ("zeros", "random-uniform"):
            raise DomainError(f"unknown init mode {self.init!r}")
        if not 0 < self.target_fitness <= 1:
            raise DomainError("target_fitness must be in (0, 1]")
        if self.learning_rate <= 0 or self.max_iterations < 1:
            raise DomainError("learning_rate and max_iterations must be positive")


@dataclass
class OptimizationTrace:
    """Per-iteration record of one optimization run."""

    iterations: list = field(default_factory=list)  # (idx, fitness, grad max-norm, seconds)
    final_theta: AnsatzParameters | None = None
    converged: bool = False

    @property
    def fitness_values(self) -> np.ndarray:
        return np.array([row[1] for row in self.iterations])

    @property
    def final_fitness(self) -> float:
        return self.iterations[-1][1]

    def first_reaching(self, level: float):
        """Earliest iteration index with fitness >= level, or None."""
        for idx, f, _, _ in self.iterations:
            if f >= level:
                return idx
        return None


def _entangler_diag_of(ent: np.ndarray, n_qubits: int) -> np.ndarray:
    ent = as_operator(ent, "entangler")
    if ent.shape[0] != 2**n_qubits:
        raise DimensionMismatchError(
            f"entangler dimension {ent.shape[0]} != 2^{n_qubits}")
    return np.diag(ent).copy()


def _rotation_stacks(theta: np.ndarray):
    """Per-(layer,qubit) composite rotations and their three slot
    derivatives, as stacked 2x2 arrays of shape (L, N, [3,] 2, 2)."""
    half = theta / 2.0
    c, s = np.cos(half), np.sin(half)

    def rx_stack(k):
        m = np.empty(theta.shape[:2] + (2, 2), dtype=complex)
        m[..., 0, 0] = c[..., k]
        m[..., 0, 1] = -1j * s[..., k]
        m[..., 1, 0] = -1j * s[..., k]
        m[..., 1, 1] = c[..., k]
        return m

    ry = np.zeros(theta.shape[:2] + (2, 2), dtype=complex)
    ry[..., 0, 0] = c[..., 1]
    ry[..., 0, 1] = -s[..., 1]
    ry[..., 1, 0] = s[..., 1]
    ry[..., 1, 1] = c[..., 1]

    r1, r3 = rx_stack(0), rx_stack(2)
    r32 = r3 @ ry
    rot = r32 @ r1
    drot = np.stack([
        rot @ _GX,                 # slot 1: x generator commutes with R_x(th1)
        r3 @ (_GY @ ry) @ r1,      # slot 2
        _GX @ rot,                 # slot 3
    ], axis=2)
    return rot, drot


def _layer_blocks(rot: np.ndarray) -> np.ndarray:
    """Kronecker the per-qubit rotations of each layer into (L, D, D)."""
    n = rot.shape[1]
    block = rot[:, 0]
    for q in range(1, n):
        l, d = block.shape[0], block.shape[1]
        block = np.einsum("lab,lcd->lacbd", block, rot[:, q]).reshape(l, 2 * d, 2 * d)
    return block


def _ptrace_cols(g: np.ndarray, qubit: int) -> np.ndarray:
    """W[a,b] = sum_rest G[(rest,a),(rest,b)] batched over the leading axis."""
    nl, d = g.shape[0], g.shape[1]
    left = 2**qubit
    right = d // (2 * left)
    gt = g.reshape(nl, left, 2, right, left, 2, right)
    w = np.zeros((nl, 2, 2), dtype=complex)
    for i in range(left):
        for j in range(right):
            w += gt[:, i, :, j, i, :, j]
    return w


def ansatz_unitary(params: AnsatzParameters, ent: np.ndarray) -> np.ndarray:
    """Full circuit unitary, layer 1 applied first."""
    diag = _entangler_diag_of(ent, params.n_qubits)
    rot, _ = _rotation_stacks(params.theta)
    blocks = _layer_blocks(rot)
    u = np.eye(2**params.n_qubits, dtype=complex)
    for l in range(params.layers):
        u = diag[:, None] * (blocks[l] @ u)
    return u


def fitness(params: AnsatzParameters, target: np.ndarray, ent: np.ndarray) -> float:
    """Normalized gate fidelity |Tr(target† U(theta))|^2 / 4^N."""
    target = as_operator(target, "target")
    if target.shape[0] != 2**params.n_qubits:
        raise DimensionMismatchError("target dimension does not match ansatz register")
    u = ansatz_unitary(params, ent)
    t = np.einsum("ij,ji->", target.conj().T, u)
    return float(abs(t) ** 2 / 4**params.n_qubits)


def fitness_and_gradient(params: AnsatzParameters, target: np.ndarray, ent: np.ndarray):
    """Fitness and its exact analytic gradient in one backpropagation pass.

    One forward sweep caches the prefix products, one backward sweep the
    suffixes; per layer only a constant number of full-dimension matrix
    products remain, everything else is single-qubit insertions.
    """
    target = as_operator(target, "target")
    nl, nq = params.layers, params.n_qubits
    dim = 2**nq
    if target.shape[0] != dim:
        raise DimensionMismatchError("target dimension does not match ansatz register")
    diag = _entangler_diag_of(ent, nq)
    vh = target.conj().T

    rot, drot = _rotation_stacks(params.theta)
    blocks = _layer_blocks(rot)

    prefix = np.empty((nl + 1, dim, dim), dtype=complex)
    prefix[0] = np.eye(dim)
    for l in range(nl):
        prefix[l + 1] = diag[:, None] * (blocks[l] @ prefix[l])

    t_val = np.einsum("ij,ji->", vh, prefix[nl])
    f_val = float(abs(t_val) ** 2 / 4**nq)

    suffix = np.empty((nl + 1, dim, dim), dtype=complex)
    suffix[nl] = np.eye(dim)
    for l in range(nl - 1, -1, -1):
        suffix[l] = suffix[l + 1] @ (diag[:, None] * blocks[l])

    # the fully-rotated environment of layer l is G_l = P_l V† Q_l (suffix
    # including the layer itself); undoing qubit q's rotation commutes with
    # tracing out the other qubits, so each parameter needs only a partial
    # trace and 2x2 products.  Layer chunks bound the temporaries.
    env = np.empty((nl, nq, 2, 2), dtype=complex)
    chunk = 64
    for s in range(0, nl, chunk):
        e = min(s + chunk, nl)
        g = np.matmul(prefix[s:e], np.matmul(vh[None, :, :], suffix[s:e]))
        for q in range(nq):
            env[s:e, q] = _ptrace_cols(g, q) @ rot[s:e, q].conj().transpose(0, 2, 1)

    scale = 2.0 / 4**nq
    grad = scale * np.real(np.conj(t_val) * np.einsum("lnab,lnkba->lnk", env, drot))
    return f_val, grad


def gradient(params: AnsatzParameters, target: np.ndarray, ent: np.ndarray) -> np.ndarray:
    """Analytic gradient of the fitness, shape (L, N, 3)."""
    return fitness_and_gradient(params, target, ent)[1]


def circuit_duration(params: AnsatzParameters) -> float:
    """Total entangler time L * t_s; single-qubit rotations count as zero."""
    return params.layers * params.t_s


def parameters_payload(params: AnsatzParameters, target_hash: str,
                       fitness_achieved: float, iterations_used: int) -> dict:
    """JSON form of a compiled circuit: theta flattened layer-major, then
    qubit, then rotation slot."""
    return {
        "L": params.layers,
        "N": params.n_qubits,
        "t_s": params.t_s,
        "theta": [float(v) for v in params.theta.reshape(-1)],
        "target_hash": target_hash,
        "fitness_achieved": float(fitness_achieved),
        "iterations_used": int(iterations_used),
    }


def save_parameters(params: AnsatzParameters, path, target_hash: str = "",
                    fitness_achieved: float = float("nan"),
                    iterations_used: int = 0) -> None:
    Path(path).write_text(json.dumps(
        parameters_payload(params, target_hash, fitness_achieved, iterations_used)))


def load_parameters(path):
    """Read a persisted parameter artifact; returns (AnsatzParameters, metadata)."""
    raw = json.loads(Path(path).read_text())
    theta = np.array(raw["theta"], dtype=float).reshape(raw["L"], raw["N"], 3)
    return AnsatzParameters(raw["L"], raw["N"], raw["t_s"], theta), raw


# adaptive method: lr decays by the factor after this many evaluations
# without improvement; gentler than halving so long compilations keep a
# workable step size in the tail
_PLATEAU_PATIENCE = 40
_PLATEAU_FACTOR = 0.7
_LR_FLOOR = 1e-4


def optimize(target: np.ndarray, ent: np.ndarray, layers: int,
             cfg: OptimizerConfig, t_s: float = 0.0,
             theta0: np.ndarray | None = None) -> OptimizationTrace:
    """Gradient-ascend the fitness from the configured initial point.

    Deterministic for a fixed seed.  The adaptive-moment method decays its
    learning rate by 0.7 after a 40-evaluation stall (floor 1e-4), which is
    what lets long compilations push past the fixed-step oscillation floor.
    """
    target = as_operator(target, "target")
    nq = int(np.log2(target.shape[0]))
    if 2**nq != target.shape[0]:
        raise DimensionMismatchError("target dimension must be a power of two")

    if theta0 is not None:
        theta = np.array(theta0, dtype=float)
    elif cfg.init == "zeros":
        theta = np.zeros((layers, nq, 3))
    else:
        rng = np.random.default_rng(cfg.seed)
        theta = rng.uniform(-cfg.init_amplitude, cfg.init_amplitude, size=(layers, nq, 3))

    trace = OptimizationTrace()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    lr = cfg.learning_rate
    best = -np.inf
    stall = 0
    tick = time.perf_counter()

    for it in range(cfg.max_iterations + 1):
        f_val, grad = fitness_and_gradient(
            AnsatzParameters(layers, nq, t_s, theta), target, ent)
        trace.iterations.append(
            (it, f_val, float(np.abs(grad).max()), time.perf_counter() - tick))
        if f_val >= cfg.target_fitness:
            trace.converged = True
            break
        if it == cfg.max_iterations:
            break
        if f_val > best + 1e-9:
            best = f_val
            stall = 0
        else:
            stall += 1
            if cfg.method == "adaptive-moment" and stall >= _PLATEAU_PATIENCE and lr > _LR_FLOOR:
                lr = max(lr * _PLATEAU_FACTOR, _LR_FLOOR)
                stall = 0
        if cfg.method == "plain-gradient":
            theta = theta + lr * grad
        else:
            k = it + 1
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            theta = theta + lr * (m / (1 - b1**k)) / (np.sqrt(v / (1 - b2**k)) + eps)

    trace.final_theta = AnsatzParameters(layers, nq, t_s, theta)
    return trace


class VariationalGateCompiler(BaseEstimator):
    """Estimator-style wrapper: fit a layered circuit to a target unitary.

    Parameters mirror OptimizerConfig plus the ansatz geometry.  The
    entangler comes from ``coupling_table`` (a CouplingTable, truncated to
    the target's register) or an explicit ``entangler_generator`` diagonal;
    with neither, the entangler is the identity.

    After ``fit(target)`` the compiled angles are in ``theta_`` and the
    achieved fidelity in ``fitness_``.
    """

    def __init__(self, layers=40, t_s=0.0035, coupling_table=None,
                 entangler_generator=None, method="adaptive-moment",
                 learning_rate=0.05, max_iterations=500, target_fitness=0.999,
                 init="zeros", init_amplitude=0.1, seed=0):
        self.layers = layers
        self.t_s = t_s
        self.coupling_table = coupling_table
        self.entangler_generator = entangler_generator
        self.method = method
        self.learning_rate = learning_rate
        self.max_iterations = max_iterations
        self.target_fitness = target_fitness
        self.init = init
        self.init_amplitude = init_amplitude
        self.seed = seed

    def _entangler_for(self, n_qubits: int) -> np.ndarray:
        if self.entangler_generator is not None:
            gen = np.asarray(self.entangler_generator)
            gen = np.diag(gen) if gen.ndim == 1 else gen
            return entangler(gen, self.t_s)
        if self.coupling_table is not None:
            table = self.coupling_table.truncated(n_qubits)
            return np.diag(np.exp(-1j * entangler_generator_diagonal(table) * self.t_s))
        return np.eye(2**n_qubits, dtype=complex)

    def fit(self, target, y=None):
        target = as_operator(target, "target")
        nq = int(np.log2(target.shape[0]))
        if 2**nq != target.shape[0]:
            raise DimensionMismatchError("target dimension must be a power of two")
        ent = self._entangler_for(nq)
        cfg = OptimizerConfig(
            method=self.method, learning_rate=self.learning_rate,
            max_iterations=self.max_iterations, target_fitness=self.target_fitness,
            seed=self.seed, init=self.init, init_amplitude=self.init_amplitude)
        trace = optimize(target, ent, self.layers, cfg, t_s=self.t_s)
        self.n_qubits_ = nq
        self.entangler_ = ent
        self.trace_ = trace
        self.theta_ = trace.final_theta
        self.fitness_ = trace.final_fitness
        self.converged_ = trace.converged
        self.n_iter_ = trace.iterations[-1][0]
        return self

    def compiled_unitary(self) -> np.ndarray:
        return ansatz_unitary(self.theta_, self.entangler_)

    def score(self, target, y=None) -> float:
        """Fitness of the fitted circuit against a (possibly new) target."""
        return fitness(self.theta_, as_operator(target), self.entangler_)

    def duration(self) -> float:
        return circuit_duration(self.theta_)
