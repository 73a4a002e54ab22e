"""Hermitian dilation of a non-Hermitian Hamiltonian.

For a time-independent H_s the metric M(t) = eta†eta + I obeys
i dM/dt = H_s† M - M H_s, solved in closed form by

    M(t) = e^{-i H_s† t} M(0) e^{i H_s t},      M(0) = (1 + eta0^2) I.

eta(t) is fixed as the Hermitian principal PSD root of M(t) - I, and its
time derivative comes from the Sylvester equation X eta + eta X = dM/dt
solved entrywise in eta's eigenbasis.  The dilated Hamiltonian on the
register extended by one ancilla (last tensor factor) is

    H_sa(t) = Lambda(t) ⊗ I + Gamma(t) ⊗ Z

with Lambda = {H_s + [i deta/dt + eta H_s] eta} M^{-1} and
Gamma = i [H_s eta - eta H_s - i deta/dt] M^{-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NotHermitianError, PositivityLostError, SingularEtaError
from .linalg import (
    SIGMA_I,
    SIGMA_Z,
    as_operator,
    expm_general,
    herm_defect,
    herm_eig,
)

DILATED_HERM_TOL = 1e-6
_ETA_PAIR_FLOOR = 1e-12


@dataclass(frozen=True)
class DilationConfig:
    """Dilation parameters: initial eta scale, positivity margin for
    M(t) - I, and the segmentation of the evolution window."""

    eta0: float = 2.0
    positivity_margin: float = 1e-6
    segments: int = 200
    total_time: float = 1.0
    midpoint: bool = False

    def __post_init__(self):
        if self.eta0 <= 0:
            raise DomainError("eta0 must be positive")
        if self.positivity_margin <= 0:
            raise DomainError("positivity margin must be positive")
        if self.segments < 1:
            raise DomainError("segments must be >= 1")

    @classmethod
    def for_time(cls, total_time: float, segments_per_unit: int = 200, **kw) -> "DilationConfig":
        """Config with the default density of 200 segments per unit time."""
        segs = max(1, int(round(abs(total_time) * segments_per_unit)))
        return cls(segments=segs, total_time=total_time, **kw)


@dataclass(frozen=True)
class DilationFrame:
    """All time-t dilation quantities for one sample time."""

    time: float
    metric: np.ndarray
    eta: np.ndarray
    eta_dot: np.ndarray
    lambda_block: np.ndarray
    gamma_block: np.ndarray
    dilated_h: np.ndarray


def metric_at(hs: np.ndarray, t: float, cfg: DilationConfig) -> np.ndarray:
    """M(t) = e^{-i H_s† t} (1 + eta0^2) e^{i H_s t}, exact for
    time-independent H_s."""
    hs = as_operator(hs, "H_s")
    w = expm_general(1j * hs * t)
    m = (1.0 + cfg.eta0**2) * (w.conj().T @ w)
    return (m + m.conj().T) / 2


def metric_dot(hs: np.ndarray, metric: np.ndarray) -> np.ndarray:
    """dM/dt = i (M H_s - H_s† M), the closed form of the metric equation."""
    md = 1j * (metric @ hs - hs.conj().T @ metric)
    return (md + md.conj().T) / 2


def eta_at(metric: np.ndarray, cfg: DilationConfig) -> np.ndarray:
    """Hermitian principal PSD root of M - I; raises PositivityLostError when
    the smallest eigenvalue of M - I falls below the configured margin."""
    lam, v = herm_eig(metric, tol=1e-8)
    gap = lam - 1.0
    if gap.min() < cfg.positivity_margin:
        raise PositivityLostError(
            f"min eig(M - I) = {gap.min():.3e} < margin {cfg.positivity_margin:.1e}; "
            "increase eta0 or shorten the horizon")
    return (v * np.sqrt(gap)) @ v.conj().T


def eta_dot_at(eta: np.ndarray, m_dot: np.ndarray) -> np.ndarray:
    """Solve X eta + eta X = dM/dt for Hermitian X in eta's eigenbasis."""
    mu, v = herm_eig(eta, tol=1e-8)
    pair = mu[:, None] + mu[None, :]
    if pair.min() < _ETA_PAIR_FLOOR:
        raise SingularEtaError(f"eigenvalue pair sum {pair.min():.3e} too small for Sylvester solve")
    x = (v.conj().T @ m_dot @ v) / pair
    return v @ x @ v.conj().T


def dilated_hamiltonian(hs: np.ndarray, t: float, cfg: DilationConfig) -> DilationFrame:
    """Assemble the full dilation frame at time t."""
    hs = as_operator(hs, "H_s")
    metric = metric_at(hs, t, cfg)
    return _frame_from_metric(hs, t, metric, cfg)


def _frame_from_metric(hs: np.ndarray, t: float, metric: np.ndarray,
                       cfg: DilationConfig) -> DilationFrame:
    dim = hs.shape[0]
    lam, v = herm_eig(metric, tol=1e-8)
    gap = lam - 1.0
    if gap.min() < cfg.positivity_margin:
        raise PositivityLostError(
            f"min eig(M - I) = {gap.min():.3e} < margin {cfg.positivity_margin:.1e} at t={t:g}")
    mu = np.sqrt(gap)
    eta = (v * mu) @ v.conj().T

    m_dot = metric_dot(hs, metric)
    pair = mu[:, None] + mu[None, :]
    if pair.min() < _ETA_PAIR_FLOOR:
        raise SingularEtaError(f"eigenvalue pair sum {pair.min():.3e} too small at t={t:g}")
    eta_dot = v @ ((v.conj().T @ m_dot @ v) / pair) @ v.conj().T

    # M^{-1} shares eta's eigenbasis since M = eta^2 + I
    m_inv = (v * (1.0 / lam)) @ v.conj().T
    lam_block = (hs + (1j * eta_dot + eta @ hs) @ eta) @ m_inv
    gam_block = 1j * (hs @ eta - eta @ hs - 1j * eta_dot) @ m_inv

    h_sa = np.kron(lam_block, SIGMA_I) + np.kron(gam_block, SIGMA_Z)
    defect = herm_defect(h_sa)
    if defect > DILATED_HERM_TOL:
        raise NotHermitianError(
            f"dilated Hamiltonian defect {defect:.3e} at t={t:g}; upstream inconsistency")
    h_sa = (h_sa + h_sa.conj().T) / 2
    return DilationFrame(
        time=t, metric=metric, eta=eta, eta_dot=eta_dot,
        lambda_block=lam_block, gamma_block=gam_block, dilated_h=h_sa)


def target_unitary(hs: np.ndarray, cfg: DilationConfig) -> np.ndarray:
    """Time-ordered product of segment propagators of the dilated Hamiltonian.

    Samples H_sa at right endpoints m*dt (or midpoints (m-1/2)*dt when
    cfg.midpoint), latest factor leftmost.  The metric at successive sample
    times is accumulated from a single short-step exponential of H_s.
    """
    hs = as_operator(hs, "H_s")
    dim = hs.shape[0]
    if cfg.total_time == 0:
        return np.eye(2 * dim, dtype=complex)
    dt = cfg.total_time / cfg.segments
    m0 = 1.0 + cfg.eta0**2

    # w tracks e^{i H_s t_m} at the current sample time, advanced by one
    # fixed short-step factor per segment
    step = expm_general(1j * hs * dt)
    w = expm_general(1j * hs * (dt / 2)) if cfg.midpoint else step

    u = np.eye(2 * dim, dtype=complex)
    for m in range(1, cfg.segments + 1):
        t_m = (m - 0.5) * dt if cfg.midpoint else m * dt
        metric = m0 * (w.conj().T @ w)
        metric = (metric + metric.conj().T) / 2
        frame = _frame_from_metric(hs, t_m, metric, cfg)
        lam, v = np.linalg.eigh(frame.dilated_h)
        factor = (v * np.exp(-1j * dt * lam)) @ v.conj().T
        u = factor @ u
        if m < cfg.segments:
            w = w @ step
    return u
