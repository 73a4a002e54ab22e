"""Dense complex operator algebra for small qubit registers.

Everything here works on plain ``numpy`` arrays of complex128.  Operators
are validated at function boundaries rather than wrapped in a class; the
helpers ``check_hermitian`` / ``check_unitary`` implement the tolerances
used throughout the package (1e-10 for input validation, 1e-9 for results
of decompositions).

Tensor-factor convention: site 0 is the leftmost (most significant) factor
of every Kronecker product.  The dilation ancilla, when present, is the
last factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatchError, NotHermitianError, NotPSDError

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-10
PSD_DUST = 1e-8

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

_AXIS_MATRICES = {"i": SIGMA_I, "x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}


def as_operator(a, name: str = "operator") -> np.ndarray:
    """Coerce to a square complex matrix with finite entries."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"{name} must be square, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite entries")
    return a


def herm_defect(a: np.ndarray) -> float:
    """Largest entrywise deviation from Hermiticity, max |A - A†|."""
    return float(np.abs(a - a.conj().T).max())


def unitary_defect(a: np.ndarray) -> float:
    """Largest entrywise deviation of A†A from the identity."""
    return float(np.abs(a.conj().T @ a - np.eye(a.shape[0])).max())


def check_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL, name: str = "matrix") -> np.ndarray:
    a = as_operator(a, name)
    d = herm_defect(a)
    if d > tol:
        raise NotHermitianError(f"{name} is not Hermitian: max|A-A†| = {d:.3e} > {tol:.1e}")
    return a


def check_unitary(a: np.ndarray, tol: float = UNITARY_TOL, name: str = "matrix") -> np.ndarray:
    a = as_operator(a, name)
    d = unitary_defect(a)
    if d > tol:
        raise ValueError(f"{name} is not unitary: max|A†A-I| = {d:.3e} > {tol:.1e}")
    return a


def n_qubits_of(a: np.ndarray, name: str = "operator") -> int:
    """Number of qubits for a 2**q dimensional operator."""
    dim = a.shape[0]
    q = dim.bit_length() - 1
    if 2**q != dim:
        raise DimensionMismatchError(f"{name} dimension {dim} is not a power of two")
    return q


def kron_all(factors) -> np.ndarray:
    """Kronecker product of a sequence of matrices, first factor leftmost."""
    out = np.array([[1.0 + 0j]])
    for f in factors:
        out = np.kron(out, f)
    return out


@dataclass(frozen=True)
class PauliTerm:
    """A weighted Pauli string.

    ``axes`` holds one character per site from ``{'i','x','y','z'}``; site 0
    is the leftmost tensor factor.
    """

    coefficient: complex
    axes: str

    def __post_init__(self):
        if len(self.axes) < 1:
            raise ValueError("PauliTerm needs at least one site")
        bad = set(self.axes.lower()) - set("ixyz")
        if bad:
            raise ValueError(f"unknown Pauli axes {sorted(bad)}; use i/x/y/z")
        object.__setattr__(self, "axes", self.axes.lower())

    @property
    def n_sites(self) -> int:
        return len(self.axes)

    def __mul__(self, other: "PauliTerm") -> "PauliTerm":
        """Symbolic product of two Pauli strings (site by site)."""
        if self.n_sites != other.n_sites:
            raise DimensionMismatchError("Pauli strings act on different registers")
        coeff = self.coefficient * other.coefficient
        axes = []
        for a, b in zip(self.axes, other.axes):
            c, phase = _PAULI_PRODUCT[(a, b)]
            axes.append(c)
            coeff *= phase
        return PauliTerm(coeff, "".join(axes))


# single-site products sigma_a sigma_b = phase * sigma_c
_PAULI_PRODUCT = {
    ("i", "i"): ("i", 1), ("i", "x"): ("x", 1), ("i", "y"): ("y", 1), ("i", "z"): ("z", 1),
    ("x", "i"): ("x", 1), ("y", "i"): ("y", 1), ("z", "i"): ("z", 1),
    ("x", "x"): ("i", 1), ("y", "y"): ("i", 1), ("z", "z"): ("i", 1),
    ("x", "y"): ("z", 1j), ("y", "x"): ("z", -1j),
    ("y", "z"): ("x", 1j), ("z", "y"): ("x", -1j),
    ("z", "x"): ("y", 1j), ("x", "z"): ("y", -1j),
}


def pauli_to_matrix(term: PauliTerm) -> np.ndarray:
    """Dense matrix of a Pauli string: coefficient times the site-ordered
    Kronecker product of single-site Pauli matrices."""
    return term.coefficient * kron_all(_AXIS_MATRICES[a] for a in term.axes)


def pauli_site(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Embed a single-site 2x2 operator at ``site`` of an n-site register."""
    if not 0 <= site < n_sites:
        raise DimensionMismatchError(f"site {site} outside register of {n_sites}")
    return kron_all(op if k == site else SIGMA_I for k in range(n_sites))


def herm_eig(a: np.ndarray, tol: float = HERMITIAN_TOL):
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvector k in column k.  Raises NotHermitianError when the input
    deviates from Hermiticity by more than ``tol``.
    """
    a = check_hermitian(a, tol)
    lam, v = np.linalg.eigh(a)
    return lam, v


def expm_hermitian(a: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """exp(scale * A) for Hermitian A, via eigendecomposition.

    With purely imaginary ``scale`` the result is unitary (up to 1e-9).
    """
    lam, v = herm_eig(a)
    return (v * np.exp(scale * lam)) @ v.conj().T


def expm_general(a: np.ndarray) -> np.ndarray:
    """exp(A) for an arbitrary square complex matrix.

    Delegates to scipy's scaling-and-squaring Pade implementation, which
    stays accurate near exceptional points where eigendecomposition-based
    exponentials break down.  Raises OverflowError when the result leaves
    the representable range.
    """
    a = as_operator(a)
    with np.errstate(over="ignore", invalid="ignore"):
        e = scipy.linalg.expm(a)
    if not np.isfinite(e).all():
        raise OverflowError("matrix exponential overflowed the floating-point range")
    return e


def sqrtm_psd(a: np.ndarray, dust: float = PSD_DUST) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Eigenvalues in (-dust, 0) are treated as floating-point dust and clamped
    to zero; anything at or below ``-dust`` raises NotPSDError.
    """
    lam, v = herm_eig(a)
    if lam.min() < -dust:
        raise NotPSDError(f"matrix has negative eigenvalue {lam.min():.3e}")
    lam = np.clip(lam, 0.0, None)
    return (v * np.sqrt(lam)) @ v.conj().T


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Trace distance (1/2)||a - b||_1 between two Hermitian matrices."""
    d = a - b
    lam = np.linalg.eigvalsh((d + d.conj().T) / 2)
    return 0.5 * float(np.abs(lam).sum())
