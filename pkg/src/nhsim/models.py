"""Physical operators: the open-boundary Ising chain, its non-Hermitian
boundary perturbations, the diagonal two-body entangler generator, and
thermal initial states.

Site labels follow the formulas (1-based); storage is 0-based with site n
living in tensor slot n-1.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError, IndexOutOfRangeError
from .linalg import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    check_hermitian,
    herm_eig,
    pauli_site,
)


@dataclass(frozen=True)
class IsingSpec:
    """Open-boundary transverse-field Ising chain parameters."""

    n_sites: int
    coupling: float = 1.0
    field: float = 0.0

    def __post_init__(self):
        if self.n_sites < 1:
            raise DomainError("n_sites must be >= 1")
        if self.field < 0:
            raise DomainError("field strength must be >= 0")


@dataclass(frozen=True)
class PerturbationSpec:
    """Boundary perturbation: index n of the string operator and its weight."""

    index: int = 1
    strength: float = 0.0


@dataclass(frozen=True)
class CouplingTable:
    """Symmetric pairwise couplings (in frequency units) defining the
    entangler generator.  Keys are 0-based (i, j) with i < j."""

    n_qubits: int
    entries: dict

    def __post_init__(self):
        for (i, j) in self.entries:
            if i == j:
                raise DomainError(f"self-coupling ({i},{j}) not allowed")
            if not (0 <= i < j < self.n_qubits):
                raise IndexOutOfRangeError(
                    f"pair ({i},{j}) outside 0..{self.n_qubits - 1} or unordered")

    def truncated(self, n_qubits: int) -> "CouplingTable":
        """Restrict the table to the first ``n_qubits`` qubits."""
        kept = {(i, j): v for (i, j), v in self.entries.items() if j < n_qubits}
        return CouplingTable(n_qubits, kept)


def load_coupling_table(path) -> CouplingTable:
    """Read a coupling table from JSON: {n_qubits, couplings: [[i, j, J], ...]}
    with 1-based qubit indices in the file."""
    raw = json.loads(Path(path).read_text())
    n = int(raw["n_qubits"])
    entries = {}
    for i, j, v in raw["couplings"]:
        i, j = int(i) - 1, int(j) - 1
        if i > j:
            i, j = j, i
        entries[(i, j)] = float(v)
    return CouplingTable(n, entries)


def save_coupling_table(table: CouplingTable, path) -> None:
    payload = {
        "n_qubits": table.n_qubits,
        "couplings": [[i + 1, j + 1, v] for (i, j), v in sorted(table.entries.items())],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def default_coupling_table() -> CouplingTable:
    """The 7-qubit table shipped with the package (synthetic values, not a
    measured molecule)."""
    return load_coupling_table(Path(__file__).parent / "data" / "couplings7.json")


def build_ising(spec: IsingSpec) -> np.ndarray:
    """H = -J sum_n X_n X_{n+1} + g sum_n Z_n on an open chain."""
    ns = spec.n_sites
    dim = 2**ns
    h = np.zeros((dim, dim), dtype=complex)
    for n in range(ns - 1):
        h -= spec.coupling * (pauli_site(SIGMA_X, n, ns) @ pauli_site(SIGMA_X, n + 1, ns))
    for n in range(ns):
        h += spec.field * pauli_site(SIGMA_Z, n, ns)
    return h


def _signed_z_prefix_string(ns: int, upto: int, tail_op: np.ndarray, tail_site: int) -> np.ndarray:
    """Product over sites 1..upto-1 of (-Z_l), times tail_op on tail_site.
    All indices 1-based."""
    out = pauli_site(tail_op, tail_site - 1, ns)
    for l in range(1, upto):
        out = (-pauli_site(SIGMA_Z, l - 1, ns)) @ out
    return out


def build_Dn(n_sites: int, n: int) -> np.ndarray:
    """Non-Hermitian string perturbation

        D_n = prod_{l<n} (-Z_l) X_n  -  i prod_{l<N-n+1} (-Z_l) Y_{N-n+1}

    with 1-based site labels.  Traceless and generically non-Hermitian.
    """
    if not 1 <= n <= n_sites:
        raise IndexOutOfRangeError(f"n={n} outside 1..{n_sites}")
    first = _signed_z_prefix_string(n_sites, n, SIGMA_X, n)
    mirror = n_sites - n + 1
    second = _signed_z_prefix_string(n_sites, mirror, SIGMA_Y, mirror)
    return first - 1j * second


def build_D(n_sites: int, g: float) -> np.ndarray:
    """Nonlocal perturbation (1/2) sqrt(1-g^2) sum_n g^(n-1) D_n.

    Only defined for 0 <= g < 1 (the prefactor turns imaginary at g >= 1;
    the experiments use individual D_n in that regime).
    """
    if not 0 <= g < 1:
        raise DomainError(f"build_D requires 0 <= g < 1, got g={g}")
    pref = 0.5 * np.sqrt(1.0 - g * g)
    out = np.zeros((2**n_sites, 2**n_sites), dtype=complex)
    weight = 1.0  # g^(n-1), with 0^0 = 1
    for n in range(1, n_sites + 1):
        if weight != 0.0:
            out += weight * build_Dn(n_sites, n)
        weight *= g
    return pref * out


def build_Hs(ising: IsingSpec, pert: PerturbationSpec) -> np.ndarray:
    """Total Hamiltonian H_0 + kappa D_n; non-Hermitian whenever kappa != 0."""
    if abs(pert.strength) >= ising.field > 0 or (ising.field == 0 and pert.strength != 0):
        warnings.warn(
            f"perturbation strength {pert.strength} is not small against field {ising.field}; "
            "the model assumes |kappa| << g", stacklevel=2)
    h = build_ising(ising)
    if pert.strength != 0.0:
        h = h + pert.strength * build_Dn(ising.n_sites, pert.index)
    return h


def entangler_generator_diagonal(table: CouplingTable) -> np.ndarray:
    """Diagonal of H_int = sum_{i<j} pi J_ij Z_i Z_j / 2, as a real vector."""
    n = table.n_qubits
    dim = 2**n
    basis = np.arange(dim)
    diag = np.zeros(dim)
    z = [1.0 - 2.0 * ((basis >> (n - 1 - q)) & 1) for q in range(n)]
    for (i, j), coupling in table.entries.items():
        diag += (np.pi * coupling / 2.0) * z[i] * z[j]
    return diag


def build_entangler_generator(table: CouplingTable) -> np.ndarray:
    """H_int as a dense (real, diagonal, Hermitian) matrix."""
    return np.diag(entangler_generator_diagonal(table)).astype(complex)


def thermal_state(h0: np.ndarray, beta: float) -> np.ndarray:
    """Gibbs state exp(-beta H0)/Tr exp(-beta H0) of a Hermitian H0.

    Computed in the eigenbasis with the largest Boltzmann exponent shifted
    out, so large beta cannot overflow.
    """
    if beta < 0:
        raise DomainError("beta must be >= 0")
    h0 = check_hermitian(h0, name="H0")
    lam, v = herm_eig(h0)
    w = np.exp(-beta * (lam - lam.min()))
    rho = (v * w) @ v.conj().T
    rho /= np.real(np.trace(rho))
    return (rho + rho.conj().T) / 2
