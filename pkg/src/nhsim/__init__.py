"""Classical simulation of non-Hermitian qubit dynamics: Hermitian dilation
with one ancilla, variational compilation of the dilated propagator into a
layered rotation+entangler circuit, and Loschmidt-echo observables."""

from .circuit import (
    DilatedRunResult,
    EchoSeries,
    average_le,
    exact_nonhermitian_evolve,
    loschmidt_echo,
    prepare_joint_initial,
    run_dilated,
    theory_echo_curve,
)
from .compiler import (
    AnsatzParameters,
    OptimizationTrace,
    OptimizerConfig,
    VariationalGateCompiler,
    ansatz_unitary,
    circuit_duration,
    entangler,
    fitness,
    fitness_and_gradient,
    gradient,
    load_parameters,
    optimize,
    rotation_gate,
    save_parameters,
)
from .dilation import (
    DilationConfig,
    DilationFrame,
    dilated_hamiltonian,
    eta_at,
    eta_dot_at,
    metric_at,
    metric_dot,
    target_unitary,
)
from .linalg import (
    PauliTerm,
    expm_general,
    expm_hermitian,
    herm_eig,
    kron_all,
    pauli_site,
    pauli_to_matrix,
    sqrtm_psd,
    trace_distance,
)
from .models import (
    CouplingTable,
    IsingSpec,
    PerturbationSpec,
    build_D,
    build_Dn,
    build_Hs,
    build_entangler_generator,
    build_ising,
    default_coupling_table,
    load_coupling_table,
    save_coupling_table,
    thermal_state,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
