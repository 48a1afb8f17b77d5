import numpy as np
import pytest
from scipy.linalg import expm

from kvhsim.errors import GridMismatchError
from kvhsim.grid import make_grid
from kvhsim.hamiltonian import PAULI, HamiltonianFunction, HybridHamiltonian
from kvhsim.koopman import KoopmanStepper, kvn_classical_density, liouville_transport
from kvhsim.nonlinear import (NQCLE, density_from_wavefunction, hermiticity_defect,
                              integrated_density, mean_velocity, node_min_eigenvalue, nqcle_rhs,
                              nqcle_step, trace_density)

OSC = HamiltonianFunction.quadratic(a=0.5, b=0.5)


def _blob(q, p, q0=1.0, p0=0.0):
    return np.exp(-((q - q0) ** 2 + (p - p0) ** 2)) / np.pi


def test_density_from_wavefunction(grid64):
    U = np.array([np.exp(-grid64.Q**2), 1j * np.exp(-grid64.P**2)])
    P = density_from_wavefunction(grid64, U)
    assert P.shape == (2, 2) + grid64.shape
    assert hermiticity_defect(P) == 0.0
    assert node_min_eigenvalue(P) > -1e-14
    assert np.allclose(trace_density(grid64, P).rho, np.sum(np.abs(U) ** 2, axis=0))
    assert np.allclose(P[0, 1], -1j * np.exp(-grid64.Q**2 - grid64.P**2))


def test_mean_velocity_oscillator(grid64):
    H = HybridHamiltonian.scalar(OSC)
    _, Hq, Hp, _ = H.arrays(grid64)
    P = _blob(grid64.Q, grid64.P)[None, None].astype(complex)
    vq, vp, flagged = mean_velocity(grid64, P, Hq, Hp)
    ok = ~flagged
    assert np.allclose(vq[ok], grid64.P[ok] + 0 * vq[ok])
    assert np.allclose(vp[ok], -np.broadcast_to(grid64.Q, vp.shape)[ok])
    assert np.all(vq[flagged] == 0) and np.all(vp[flagged] == 0)


def test_mean_velocity_flags_low_density(grid64):
    H = HybridHamiltonian.scalar(OSC)
    _, Hq, Hp, _ = H.arrays(grid64)
    P = _blob(grid64.Q, grid64.P)[None, None].astype(complex)
    _, _, f_small = mean_velocity(grid64, P, Hq, Hp)
    _, _, f_big = mean_velocity(grid64, P, Hq, Hp, eps_rho=1e-3)
    assert f_big.sum() > f_small.sum() > 0
    assert np.all(f_big == (P[0, 0].real < 1e-3))


def test_mean_velocity_is_channel_average(grid64):
    """For a diagonal P the velocity is the population-weighted channel velocity."""
    H = HybridHamiltonian.pauli(h0=OSC, hz=HamiltonianFunction.quadratic(d=1.0))
    _, Hq, Hp, _ = H.arrays(grid64)
    w = _blob(grid64.Q, grid64.P)
    P = np.zeros((2, 2) + grid64.shape, complex)
    P[0, 0], P[1, 1] = 0.75 * w, 0.25 * w
    vq, vp, flagged = mean_velocity(grid64, P, Hq, Hp)
    ok = ~flagged
    assert np.allclose(vq[ok], np.broadcast_to(grid64.P, vq.shape)[ok])
    want = -(np.broadcast_to(grid64.Q, vp.shape) + 0.75 - 0.25)
    assert np.allclose(vp[ok], want[ok])


def test_rhs_conserves_mass(grid64):
    H = HybridHamiltonian.pauli(h0=OSC, hx=HamiltonianFunction.quadratic(d=2.0),
                                hz=HamiltonianFunction.quadratic(a=0.25, b=-0.25, f=0.5))
    U = np.array([_blob(grid64.Q, grid64.P), _blob(grid64.Q, grid64.P, -1.0, 0.5)]) ** 0.5
    P = density_from_wavefunction(grid64, U.astype(complex))
    dP = nqcle_rhs(grid64, P, H)
    assert abs(np.trace(integrated_density(grid64, dP))) < 1e-12
    assert hermiticity_defect(dP) < 1e-12


def test_constant_hamiltonian_is_a_commutator(grid64):
    sx = 0.7 * PAULI["x"] + 0.2 * PAULI["z"]
    H = HybridHamiltonian([[sx[0, 0], sx[0, 1]], [sx[1, 0], sx[1, 1]]])
    w = _blob(grid64.Q, grid64.P)
    P = np.zeros((2, 2) + grid64.shape, complex)
    P[0, 0] = w
    dt, n = 1e-2, 100
    eq = NQCLE(grid64, H)
    for _ in range(n):
        P = eq.step(P, dt)
    V = expm(-1j * sx * dt * n)
    want = V @ np.diag([1.0, 0.0]) @ V.conj().T
    assert np.allclose(integrated_density(grid64, P), want, atol=1e-9)
    assert np.allclose(P[1, 1], want[1, 1].real * w, atol=1e-9)


def test_input_validation(grid64):
    H = HybridHamiltonian.scalar(OSC)
    bad = np.zeros((1, 1) + grid64.shape, complex)
    bad[0, 0, 3, 3] = 1j
    with pytest.raises(ValueError):
        nqcle_rhs(grid64, bad, H)
    with pytest.raises(GridMismatchError):
        nqcle_rhs(grid64, np.zeros((2, 2) + grid64.shape, complex), H)
    with pytest.raises(ValueError):
        NQCLE(grid64, H, divergence="central")


def test_zero_step_is_identity(grid64):
    H = HybridHamiltonian.scalar(OSC)
    P = _blob(grid64.Q, grid64.P)[None, None].astype(complex)
    out = nqcle_step(grid64, P, H, 0.0)
    assert np.array_equal(out, P) and out is not P


@pytest.mark.parametrize("divergence", ["spectral", "upwind"])
def test_scalar_case_is_liouville(divergence):
    """With one quantum level the field obeys the Liouville equation."""
    g = make_grid(128, 128, (-8, 8))
    H0 = HamiltonianFunction.quadratic(a=0.5, b=0.5, c=0.2, d=0.3)
    H = HybridHamiltonian.scalar(H0)
    P = _blob(g.Q, g.P)[None, None].astype(complex)
    eq = NQCLE(g, H, divergence=divergence)
    for _ in range(200):
        P = eq.step(P, 5e-3)
    ref = liouville_transport(g, _blob, H0, 1.0).rho
    l1 = np.sum(np.abs(P[0, 0].real - ref)) * g.cell
    tol = 1e-3 if divergence == "spectral" else 0.2
    assert l1 < tol
    assert abs(np.sum(P[0, 0].real) * g.cell - 1.0) < 1e-12


def test_scalar_case_matches_kvn(grid64):
    chi0 = np.sqrt(_blob(grid64.Q, grid64.P)).astype(complex)
    chi = KoopmanStepper(grid64, OSC, 1e-2, solver="rk4_kvn").advance(chi0, 100)
    P = density_from_wavefunction(grid64, chi0[None])
    eq = NQCLE(grid64, HybridHamiltonian.scalar(OSC))
    for _ in range(100):
        P = eq.step(P, 1e-2)
    rho = kvn_classical_density(grid64, chi).rho
    assert np.sum(np.abs(P[0, 0].real - rho)) * grid64.cell < 1e-3


def test_uncoupled_limit_factorises():
    """``H = H0 * 1 + B`` with constant B keeps ``P = rho_c(t) rho_q(t)``."""
    g = make_grid(96, 96, (-8, 8))
    B = 0.5 * PAULI["x"] + 0.3 * PAULI["y"]
    entries = [[OSC + B[j, k] if j == k else HamiltonianFunction.constant(B[j, k])
                for k in range(2)] for j in range(2)]
    H = HybridHamiltonian(entries)
    rho_q = np.array([[0.8, 0.3], [0.3, 0.2]], complex)
    w = _blob(g.Q, g.P)
    P = rho_q[:, :, None, None] * w
    eq = NQCLE(g, H)
    for _ in range(100):
        P = eq.step(P, 1e-2)
    V = expm(-1j * B * 1.0)
    want = (V @ rho_q @ V.conj().T)[:, :, None, None] * liouville_transport(g, _blob, OSC, 1.0).rho
    assert np.max(np.abs(P - want)) < 1e-6
