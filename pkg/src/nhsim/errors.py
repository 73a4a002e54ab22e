"""Exception types shared across the package.

Numerical-breakdown errors (PositivityLostError, SingularEtaError,
VanishingBlockError) signal that a run cannot continue with the given
parameters; they map to CLI exit code 3.  Validation errors subclass
ValueError and map to exit code 2 when raised during config handling.
"""


class DimensionMismatchError(ValueError):
    """Operands act on registers of incompatible dimension."""


class NotHermitianError(ValueError):
    """Matrix required to be Hermitian is not, beyond tolerance."""


class NotPSDError(ValueError):
    """Matrix required to be positive semidefinite has a negative eigenvalue
    beyond the dust threshold."""


class DomainError(ValueError):
    """Scalar parameter outside the mathematically valid domain."""


class IndexOutOfRangeError(ValueError):
    """Site or qubit index outside the register."""


class BadStateError(ValueError):
    """Density matrix fails trace/positivity requirements."""


class PositivityLostError(RuntimeError):
    """The dilation metric minus identity is no longer positive definite:
    the chosen eta0 cannot dilate this Hamiltonian out to this time."""


class SingularEtaError(RuntimeError):
    """Sylvester solve for d(eta)/dt hit a vanishing eigenvalue pair sum."""


class VanishingBlockError(RuntimeError):
    """Post-selected ancilla block has numerically zero trace."""


class RangeNotCoveredError(ValueError):
    """Requested averaging window extends beyond the sampled time grid."""


class BudgetExhaustedError(RuntimeError):
    """Search exceeded its iteration or layer budget without reaching target."""


class ConfigError(ValueError):
    """Experiment configuration is malformed or inconsistent."""
