"""Shared helpers for the test suite: random operator factories and
independent slow-path oracles kept deliberately separate from the package
implementations they check."""

import numpy as np

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def rand_hermitian(dim, rng, spectral_norm=None):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    a = (a + a.conj().T) / 2
    if spectral_norm is not None:
        a *= spectral_norm / np.linalg.norm(a, 2)
    return a


def rand_density(dim, rng):
    b = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = b @ b.conj().T
    return rho / np.trace(rho).real


def rand_unitary(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def rand_nonhermitian(dim, rng, herm_norm=1.0, antiherm_norm=0.5):
    """H = A + iB with prescribed spectral norms for both parts."""
    return (rand_hermitian(dim, rng, herm_norm)
            + 1j * rand_hermitian(dim, rng, antiherm_norm))


def kron_chain(mats):
    out = np.array([[1.0 + 0j]])
    for m in mats:
        out = np.kron(out, m)
    return out


def embed(op, site, n):
    return kron_chain([op if k == site else I2 for k in range(n)])


def ising_bitwise(n_sites, coupling, field):
    """Second code path for the chain Hamiltonian: assemble matrix elements
    by walking computational basis states bit by bit."""
    dim = 2**n_sites
    h = np.zeros((dim, dim), dtype=complex)
    for s in range(dim):
        zsum = sum(1 if ((s >> (n_sites - 1 - q)) & 1) == 0 else -1
                   for q in range(n_sites))
        h[s, s] += field * zsum
        for q in range(n_sites - 1):
            flipped = s ^ (1 << (n_sites - 1 - q)) ^ (1 << (n_sites - 2 - q))
            h[flipped, s] += -coupling
    return h


def pauli_basis_decompose(op, n_sites):
    """Coefficients of op over the full Pauli-string basis."""
    singles = {"i": I2, "x": SX, "y": SY, "z": SZ}
    labels = [""]
    for _ in range(n_sites):
        labels = [lab + ax for lab in labels for ax in "ixyz"]
    out = {}
    for lab in labels:
        p = kron_chain([singles[ax] for ax in lab])
        c = np.trace(p.conj().T @ op) / 2**n_sites
        if abs(c) > 1e-12:
            out[lab] = complex(c)
    return out


def naive_ansatz_unitary(theta, ent_matrix):
    """Straightforward layer-by-layer evaluator used as the independent
    second code path for the compiled circuit."""
    layers, n, _ = theta.shape
    dim = 2**n
    u = np.eye(dim, dtype=complex)
    for l in range(layers):
        block = np.array([[1.0 + 0j]])
        for q in range(n):
            t1, t2, t3 = theta[l, q]
            rx1 = np.cos(t1 / 2) * I2 - 1j * np.sin(t1 / 2) * SX
            ry2 = np.cos(t2 / 2) * I2 - 1j * np.sin(t2 / 2) * SY
            rx3 = np.cos(t3 / 2) * I2 - 1j * np.sin(t3 / 2) * SX
            block = np.kron(block, rx3 @ ry2 @ rx1)
        u = ent_matrix @ block @ u
    return u


def naive_gradient(theta, target, ent_matrix):
    """O(L^2) per-parameter analytic gradient: rebuild the full product for
    every parameter with the differentiated rotation inserted."""
    layers, n, _ = theta.shape
    dim = 2**n
    vh = target.conj().T

    def rot(l, q, slot_derivative=None):
        t1, t2, t3 = theta[l, q]
        rx1 = np.cos(t1 / 2) * I2 - 1j * np.sin(t1 / 2) * SX
        ry2 = np.cos(t2 / 2) * I2 - 1j * np.sin(t2 / 2) * SY
        rx3 = np.cos(t3 / 2) * I2 - 1j * np.sin(t3 / 2) * SX
        gx, gy = -0.5j * SX, -0.5j * SY
        if slot_derivative == 0:
            return rx3 @ ry2 @ gx @ rx1
        if slot_derivative == 1:
            return rx3 @ gy @ ry2 @ rx1
        if slot_derivative == 2:
            return gx @ rx3 @ ry2 @ rx1
        return rx3 @ ry2 @ rx1

    def layer(l, dq=None, dslot=None):
        block = np.array([[1.0 + 0j]])
        for q in range(n):
            block = np.kron(block, rot(l, q, dslot if q == dq else None))
        return ent_matrix @ block

    full = np.eye(dim, dtype=complex)
    for l in range(layers):
        full = layer(l) @ full
    t_val = np.trace(vh @ full)

    grad = np.zeros_like(theta)
    for l in range(layers):
        for q in range(n):
            for k in range(3):
                u = np.eye(dim, dtype=complex)
                for m in range(layers):
                    u = (layer(m, q, k) if m == l else layer(m)) @ u
                dt = np.trace(vh @ u)
                grad[l, q, k] = 2.0 * np.real(np.conj(t_val) * dt) / 4**n
    return grad
