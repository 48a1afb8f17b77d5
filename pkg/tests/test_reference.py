import numpy as np
import pytest
from scipy.linalg import expm

from kvhsim.errors import HamiltonianError, TruncationError
from kvhsim.grid import make_grid
from kvhsim.hamiltonian import PAULI, HamiltonianFunction, HybridHamiltonian
from kvhsim.koopman import liouville_transport
from kvhsim.reference import (CompositeQuantumState, EhrenfestState, QuantumPropagator,
                              build_composite_hamiltonian, ehrenfest_energy, ehrenfest_step,
                              ladder_operators, oscillator_reduced_density, position_density,
                              quantize_quadratic, quantum_evolve, spin_reduced_density,
                              wigner_kernel, wigner_transform)

H0 = HamiltonianFunction.quadratic(a=0.5, b=0.5)
HI = HamiltonianFunction.quadratic(a=0.25, b=-0.25, f=0.5)
FIG1 = HybridHamiltonian.from_commuting(H0, HI, PAULI["z"])


def test_ladder_algebra():
    n = 40
    x, p, x2, p2, xp = ladder_operators(n, hbar=0.7)
    k = n - 2  # truncation spoils the last rows of products
    assert np.allclose((x @ x)[:k, :k], x2[:k, :k])
    assert np.allclose((p @ p)[:k, :k], p2[:k, :k])
    assert np.allclose((0.5 * (x @ p + p @ x))[:k, :k], xp[:k, :k])
    comm = x @ p - p @ x
    assert np.allclose(comm[:k, :k], 0.7j * np.eye(k))


def test_oscillator_spectrum():
    hbar = 0.5
    Hm = quantize_quadratic(H0, 20, hbar)
    assert np.allclose(np.sort(np.linalg.eigvalsh(Hm)), hbar * (np.arange(20) + 0.5))


def test_linear_term_is_position_operator(grid64):
    x = ladder_operators(10)[0]
    assert np.allclose(quantize_quadratic(HamiltonianFunction.quadratic(d=1.0), 10), x)
    with pytest.raises(HamiltonianError):
        quantize_quadratic(HamiltonianFunction.sampled(grid64, grid64.Q**4 + 0 * grid64.P), 10)


def test_composite_block_structure():
    M = build_composite_hamiltonian(FIG1, 8)
    up, dn = M[0::2, 0::2], M[1::2, 1::2]
    assert np.allclose(M[0::2, 1::2], 0) and np.allclose(M[1::2, 0::2], 0)
    assert np.allclose(up, quantize_quadratic(H0 + HI, 8))
    assert np.allclose(dn, quantize_quadratic(H0 - HI, 8))


def test_ehrenfest_circular_orbit():
    H = HybridHamiltonian.scalar(H0)
    s = EhrenfestState(1.0, 0.0, [1.0])
    for _ in range(1000):
        s = ehrenfest_step(s, H, 1e-3)
    assert s.q == pytest.approx(np.cos(1.0), abs=1e-12)
    assert s.p == pytest.approx(-np.sin(1.0), abs=1e-12)
    assert ehrenfest_energy(s, H) == pytest.approx(0.5, abs=1e-12)


def test_ehrenfest_constant_hamiltonian():
    B = 0.4 * PAULI["x"] + 0.1 * PAULI["z"]
    H = HybridHamiltonian([[B[0, 0], B[0, 1]], [B[1, 0], B[1, 1]]])
    s = EhrenfestState(0.3, -0.2, [1.0, 0.0])
    for _ in range(200):
        s = ehrenfest_step(s, H, 1e-2)
    assert (s.q, s.p) == (pytest.approx(0.3), pytest.approx(-0.2))
    assert np.allclose(s.psi, expm(-2j * B) @ [1, 0], atol=1e-9)


def test_ehrenfest_step_convergence():
    H = HybridHamiltonian.pauli(h0=H0, hx=HamiltonianFunction.quadratic(d=2.0))

    def run(dt):
        s = EhrenfestState(1.0, 0.0, np.array([1.0, 1.0]) / np.sqrt(2))
        for _ in range(int(round(1.0 / dt))):
            s = ehrenfest_step(s, H, dt)
        return s.as_vector()

    fine = run(1e-4)
    assert np.max(np.abs(run(1e-3) - fine)) < 1e-9
    assert np.max(np.abs(run(1e-2) - fine)) < 1e-5


def test_eigenstate_only_gains_phase():
    Hm = build_composite_hamiltonian(FIG1, 16)
    w, V = np.linalg.eigh(Hm)
    s = CompositeQuantumState(V[:, 3].reshape(16, 2))
    out = quantum_evolve(s, Hm, 2.3, tail_tol=1.0)
    assert np.allclose(out.c, np.exp(-1j * w[3] * 2.3) * s.c)


def test_truncation_error():
    Hm = build_composite_hamiltonian(HybridHamiltonian.scalar(H0), 12)
    osc = np.zeros(12)
    osc[9] = 1.0
    s = CompositeQuantumState.product(osc, [1.0])
    with pytest.raises(TruncationError):
        quantum_evolve(s, Hm, 0.1)
    with pytest.raises(HamiltonianError):
        QuantumPropagator(np.triu(np.ones((4, 4))))


def test_spin_reduced_density():
    s = CompositeQuantumState.ground_product(8, [1.0, 1.0])
    assert np.allclose(spin_reduced_density(s).matrix, 0.5 * np.ones((2, 2)))
    c = np.zeros((8, 2))
    c[0, 0] = c[1, 1] = 1 / np.sqrt(2)
    m = spin_reduced_density(CompositeQuantumState(c)).matrix
    assert np.allclose(m, 0.5 * np.eye(2))
    assert np.allclose(oscillator_reduced_density(CompositeQuantumState(c)), np.diag([.5, .5] + [0] * 6))


def test_wigner_ground_and_first_excited(grid64):
    G, Pm = grid64.Q, grid64.P
    assert np.allclose(wigner_kernel(0, 0, G, Pm), np.exp(-G**2 - Pm**2) / np.pi)
    assert wigner_kernel(1, 1, 0.0, 0.0) == pytest.approx(-1 / np.pi)
    rho = np.zeros((4, 4))
    rho[1, 1] = 1.0
    W = wigner_transform(rho, grid64)
    assert W.mass() == pytest.approx(1.0, abs=1e-12)
    assert W.W.min() == pytest.approx(-1 / np.pi, rel=1e-12)


def test_wigner_hbar_scaling():
    g = make_grid(64, 64, (-6, 6), hbar=0.5)
    W = wigner_kernel(0, 0, g.Q, g.P, hbar=0.5)
    assert np.allclose(W, np.exp(-(g.Q**2 + g.P**2) / 0.5) / (0.5 * np.pi))


def test_wigner_marginal_is_position_density(grid64):
    rng = np.random.default_rng(3)
    A = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    rho = A @ A.conj().T
    rho /= np.trace(rho).real
    W = wigner_transform(rho, grid64).W
    marg = W.sum(axis=1) * grid64.dp
    assert np.allclose(marg, position_density(rho, grid64.q), atol=1e-10)


def test_wigner_rejects_coarse_grid():
    g = make_grid(16, 16, (-8, 8))
    rho = np.zeros((30, 30))
    rho[25, 25] = 1.0
    with pytest.raises(ValueError, match="coarse"):
        wigner_transform(rho, g)


def test_quantum_wigner_follows_channel_flow(grid64):
    """Quadratic channels move the Wigner function by the classical flow."""
    Hm = build_composite_hamiltonian(FIG1, 80)
    s = CompositeQuantumState.ground_product(80, [1.0, 0.0])
    out = quantum_evolve(s, Hm, 1.7)
    W = wigner_transform(oscillator_reduced_density(out), grid64).W
    ref = liouville_transport(grid64, lambda q, p: np.exp(-q * q - p * p) / np.pi, H0 + HI, 1.7).rho
    assert np.max(np.abs(W - ref)) < 1e-12


def test_basis_size_robustness():
    H = HybridHamiltonian.pauli(h0=H0, hx=HamiltonianFunction.quadratic(d=2.0),
                                hz=HamiltonianFunction.quadratic(a=0.25, b=-0.25, f=0.5))
    rhos = []
    for n in (40, 56):
        s = CompositeQuantumState.ground_product(n, [1.0, 1.0])
        out = quantum_evolve(s, build_composite_hamiltonian(H, n), 1.0, tail_tol=1e-8)
        rhos.append(spin_reduced_density(out).matrix)
    assert np.max(np.abs(rhos[0] - rhos[1])) < 1e-8
