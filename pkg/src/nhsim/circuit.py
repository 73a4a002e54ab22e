"""The dilated circuit end to end, the exact non-Hermitian oracle, and the
Loschmidt-echo observables.

Register order is system ⊗ ancilla throughout (ancilla last).  The ancilla
is prepared by R_y(2 arctan eta0) then R_x(pi/2), the joint register is
evolved, R_x(-pi/2) undoes the basis change, and the block with the
ancilla in |0> carries the (unnormalized) evolved system state; its trace
is the post-selection success probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compiler import rotation_gate
from .errors import (
    BadStateError,
    DimensionMismatchError,
    NotPSDError,
    RangeNotCoveredError,
    VanishingBlockError,
)
from .linalg import as_operator, expm_general, herm_eig, sqrtm_psd

_BLOCK_FLOOR = 1e-12


@dataclass
class DilatedRunResult:
    """Output of one dilated-circuit run."""

    system_state: np.ndarray
    success_probability: float
    joint_state: np.ndarray | None = None


@dataclass
class EchoSeries:
    """Sampled Loschmidt-echo curves; simulated columns are NaN when only
    the theory path was computed."""

    times: np.ndarray
    le_theory: np.ndarray
    le_simulated: np.ndarray
    fitness: np.ndarray
    success_prob: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        for name in ("le_theory", "le_simulated", "fitness", "success_prob"):
            if len(getattr(self, name)) != n:
                raise DimensionMismatchError(f"{name} length != times length")


def prepare_joint_initial(rho0: np.ndarray, eta0: float) -> np.ndarray:
    """rho0 ⊗ |0><0| with the ancilla rotated by R_x(pi/2) R_y(2 arctan eta0).

    The resulting ancilla amplitudes reproduce the (|-> + eta0 |+>)
    structure of the dilated state at t = 0 after normalization.
    """
    rho0 = as_operator(rho0, "rho0")
    tr = np.real(np.trace(rho0))
    if abs(tr - 1.0) > 1e-8:
        raise BadStateError(f"rho0 trace {tr} deviates from 1")
    k = rotation_gate("x", np.pi / 2) @ rotation_gate("y", 2 * np.arctan(eta0))
    ancilla = k @ np.array([[1, 0], [0, 0]], dtype=complex) @ k.conj().T
    return np.kron(rho0, ancilla)


def run_dilated(rho0: np.ndarray, evolution: np.ndarray, eta0: float,
                keep_joint: bool = False) -> DilatedRunResult:
    """Run the full circuit with a given joint-register evolution unitary."""
    rho0 = as_operator(rho0, "rho0")
    evolution = as_operator(evolution, "evolution")
    dim = rho0.shape[0]
    if evolution.shape[0] != 2 * dim:
        raise DimensionMismatchError(
            f"evolution dim {evolution.shape[0]} != 2 x system dim {dim}")
    joint = prepare_joint_initial(rho0, eta0)
    joint = evolution @ joint @ evolution.conj().T
    undo = np.kron(np.eye(dim), rotation_gate("x", -np.pi / 2))
    joint = undo @ joint @ undo.conj().T

    block = joint[0::2, 0::2]
    p = float(np.real(np.trace(block)))
    if p < _BLOCK_FLOOR:
        raise VanishingBlockError(f"ancilla-0 block trace {p:.3e} below {_BLOCK_FLOOR:.0e}")
    state = block / p
    state = (state + state.conj().T) / 2
    return DilatedRunResult(state, p, joint if keep_joint else None)


def exact_nonhermitian_evolve(hs: np.ndarray, rho0: np.ndarray, t: float) -> np.ndarray:
    """Normalized e^{-i H_s t} rho0 e^{i H_s† t}, the theory oracle."""
    hs = as_operator(hs, "H_s")
    rho0 = as_operator(rho0, "rho0")
    if hs.shape != rho0.shape:
        raise DimensionMismatchError(f"H_s {hs.shape} vs rho0 {rho0.shape}")
    w = expm_general(-1j * hs * t)
    rho = w @ rho0 @ w.conj().T
    tr = np.real(np.trace(rho))
    if not np.isfinite(tr) or tr <= 0:
        raise OverflowError("evolved state trace is not positive finite")
    rho /= tr
    return (rho + rho.conj().T) / 2


def loschmidt_echo(rho0: np.ndarray, rho_t: np.ndarray) -> float:
    """Uhlmann fidelity [Tr sqrt(sqrt(rho0) rho_t sqrt(rho0))]^2, in [0, 1]."""
    s0 = sqrtm_psd(rho0)
    inner = s0 @ rho_t @ s0
    lam, _ = herm_eig((inner + inner.conj().T) / 2, tol=1e-8)
    if lam.min() < -1e-8:
        raise NotPSDError(f"echo kernel has negative eigenvalue {lam.min():.3e}")
    val = float(np.sqrt(np.clip(lam, 0.0, None)).sum() ** 2)
    return min(max(val, 0.0), 1.0)


def _window_mean(times: np.ndarray, values: np.ndarray, tau: float, horizon: float) -> float:
    """Trapezoidal mean of a sampled curve over [tau, tau + horizon], with
    linear interpolation at the window edges."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    hi = tau + horizon
    eps = 1e-9 * max(1.0, abs(hi))
    if tau < times[0] - eps or hi > times[-1] + eps:
        raise RangeNotCoveredError(
            f"window [{tau}, {hi}] outside sampled range [{times[0]}, {times[-1]}]")
    inside = (times > tau) & (times < hi)
    ts = np.concatenate(([tau], times[inside], [hi]))
    vs = np.concatenate(([np.interp(tau, times, values)], values[inside],
                         [np.interp(hi, times, values)]))
    return float(np.trapezoid(vs, ts) / horizon)


def average_le(series: EchoSeries, tau: float, horizon: float, which: str = "theory") -> float:
    """Time-averaged echo over [tau, tau + horizon] from a sampled series.

    ``which`` selects the 'theory' or 'simulated' column.
    """
    values = series.le_theory if which == "theory" else series.le_simulated
    return _window_mean(series.times, values, tau, horizon)


def theory_echo_curve(hs: np.ndarray, rho0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Loschmidt echo of the exact evolution on an ascending uniform grid.

    Steps the state with one fixed short-time propagator (conjugation
    composes exactly, and the per-step renormalization keeps growing or
    decaying modes inside floating-point range for very long horizons).
    """
    hs = as_operator(hs, "H_s")
    times = np.asarray(times, dtype=float)
    if len(times) == 0:
        return np.array([])
    steps = np.diff(times)
    if len(steps) and (steps.min() <= 0 or np.abs(steps - steps[0]).max() > 1e-9 * max(steps[0], 1)):
        raise ValueError("theory_echo_curve needs a uniform ascending grid")
    s0 = sqrtm_psd(rho0)

    def echo_of(rho):
        inner = s0 @ rho @ s0
        lam = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
        return min(1.0, float(np.sqrt(np.clip(lam, 0.0, None)).sum() ** 2))

    rho = exact_nonhermitian_evolve(hs, rho0, times[0]) if times[0] != 0.0 \
        else as_operator(rho0).copy()
    echoes = np.empty(len(times))
    echoes[0] = echo_of(rho)
    if len(times) > 1:
        g = expm_general(-1j * hs * steps[0])
        gd = g.conj().T
        for k in range(1, len(times)):
            rho = g @ rho @ gd
            tr = np.real(np.trace(rho))
            if tr <= 0 or not np.isfinite(tr):
                raise OverflowError(f"state norm degenerate at t={times[k]:g}")
            rho /= tr
            rho = (rho + rho.conj().T) / 2
            echoes[k] = echo_of(rho)
    return echoes
