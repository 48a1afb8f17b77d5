"""Independent baselines: Ehrenfest mean field and the fully quantum model.

The quantum reference quantises the classical (q, p) degree of freedom in
the number basis of the unit-frequency oscillator, with
``x = sqrt(hbar/2)(a + a^dag)`` and ``p = i sqrt(hbar/2)(a^dag - a)``;
``qp`` terms use the symmetric (Weyl) ordering. Composite index is
``m * n + j`` for oscillator level m and quantum level j.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .errors import HamiltonianError, TruncationError
from .hybrid import QuantumDensityMatrix


# -- Ehrenfest mean field -------------------------------------------------

@dataclass
class EhrenfestState:
    q: float
    p: float
    psi: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)

    def as_vector(self):
        return np.concatenate([[self.q, self.p], self.psi])

    @classmethod
    def from_vector(cls, y):
        return cls(float(y[0].real), float(y[1].real), y[2:].copy())


def _ehrenfest_rhs(y, H, hbar):
    q, p, psi = y[0].real, y[1].real, y[2:]
    Hm, Hq, Hp = H.at(q, p)
    qdot = np.vdot(psi, Hp @ psi).real
    pdot = -np.vdot(psi, Hq @ psi).real
    return np.concatenate([[qdot, pdot], (-1j / hbar) * (Hm @ psi)])


def ehrenfest_step(s, H, dt, hbar=1.0):
    """One RK4 step of the mean-field system."""
    y = s.as_vector()
    k1 = _ehrenfest_rhs(y, H, hbar)
    k2 = _ehrenfest_rhs(y + 0.5 * dt * k1, H, hbar)
    k3 = _ehrenfest_rhs(y + 0.5 * dt * k2, H, hbar)
    k4 = _ehrenfest_rhs(y + dt * k3, H, hbar)
    return EhrenfestState.from_vector(y + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4))


def ehrenfest_energy(s, H):
    Hm, _, _ = H.at(s.q, s.p)
    return float(np.vdot(s.psi, Hm @ s.psi).real)


# -- fully quantum composite model ----------------------------------------

def ladder_operators(n_osc, hbar=1.0):
    """Exact truncated ``(x, p, x^2, p^2, (xp + px)/2)`` in the number basis."""
    a = np.diag(np.sqrt(np.arange(1, n_osc)), 1).astype(complex)
    ad = a.conj().T
    num = np.diag(np.arange(n_osc)).astype(complex)
    one = np.eye(n_osc)
    a2 = np.diag(np.sqrt(np.arange(1, n_osc - 1) * np.arange(2, n_osc)), 2).astype(complex)
    ad2 = a2.conj().T
    s = hbar / 2
    x = np.sqrt(s) * (a + ad)
    p = 1j * np.sqrt(s) * (ad - a)
    x2 = s * (a2 + ad2 + 2 * num + one)
    p2 = s * (-a2 - ad2 + 2 * num + one)
    xp = 1j * s * (ad2 - a2)
    return x, p, x2, p2, xp


def quantize_quadratic(h, n_osc, hbar=1.0):
    if not h.is_quadratic:
        raise HamiltonianError("only quadratic entries can be quantised exactly")
    x, p, x2, p2, xp = ladder_operators(n_osc, hbar)
    a, b, c, d, e, f = h.coeffs
    return a * x2 + b * p2 + c * xp + d * x + e * p + f * np.eye(n_osc)


def build_composite_hamiltonian(H, n_osc, hbar=1.0):
    """Hermitian ``(n_osc * n)^2`` matrix for a hybrid Hamiltonian with quadratic entries."""
    n = H.n
    out = np.zeros((n_osc * n, n_osc * n), dtype=complex)
    for j in range(n):
        for k in range(n):
            e = H.entries[j][k]
            if e.is_zero():
                continue
            E = np.zeros((n, n))
            E[j, k] = 1.0
            out += np.kron(quantize_quadratic(e, n_osc, hbar), E)
    return out


@dataclass
class CompositeQuantumState:
    c: np.ndarray
    hbar: float = 1.0

    @property
    def n_osc(self):
        return self.c.shape[0]

    @property
    def n(self):
        return self.c.shape[1]

    def norm2(self):
        return float(np.sum(np.abs(self.c) ** 2))

    def tail_mass(self, width=4):
        return float(np.sum(np.abs(self.c[-width:]) ** 2))

    @classmethod
    def product(cls, osc, spin, hbar=1.0):
        osc = np.asarray(osc, dtype=complex)
        spin = np.asarray(spin, dtype=complex)
        return cls(np.outer(osc / np.linalg.norm(osc), spin / np.linalg.norm(spin)), hbar)

    @classmethod
    def ground_product(cls, n_osc, spin, hbar=1.0):
        osc = np.zeros(n_osc)
        osc[0] = 1.0
        return cls.product(osc, spin, hbar)


class QuantumPropagator:
    """Exact ``exp(-i H t / hbar)`` from one eigendecomposition."""

    def __init__(self, Hmat, hbar=1.0, tail_tol=1e-8):
        Hmat = np.asarray(Hmat)
        if np.max(np.abs(Hmat - Hmat.conj().T)) > 1e-10:
            raise HamiltonianError("composite Hamiltonian is not Hermitian")
        self.evals, self.evecs = np.linalg.eigh(Hmat)
        self.hbar = hbar
        self.tail_tol = tail_tol

    def evolve(self, state, t):
        v = state.c.reshape(-1)
        coef = self.evecs.conj().T @ v
        out = self.evecs @ (np.exp(-1j * self.evals * t / self.hbar) * coef)
        new = CompositeQuantumState(out.reshape(state.c.shape), state.hbar)
        tail = new.tail_mass()
        if tail > self.tail_tol:
            raise TruncationError(f"tail mass {tail:.2e} at t={t:g}; increase n_osc",
                                  t=t, tail_mass=tail, n_osc=new.n_osc)
        return new


def quantum_evolve(state, Hmat, t, tail_tol=1e-8):
    return QuantumPropagator(Hmat, state.hbar, tail_tol).evolve(state, t)


def spin_reduced_density(state):
    rho = state.c.T @ state.c.conj()
    return QuantumDensityMatrix(rho, state.norm2())


def oscillator_reduced_density(state):
    return state.c @ state.c.conj().T


# -- Wigner transform on the number basis ---------------------------------

@dataclass
class WignerField:
    grid: object
    W: np.ndarray

    def mass(self):
        return float(self.grid.integrate(self.W))


def wigner_kernel(m, n, q, p, hbar=1.0):
    """Wigner function of the operator ``|m><n|`` for ``m >= n``.

    ``(-1)^n / (pi hbar) sqrt(n!/m!) (2 conj(alpha))^(m-n) e^{-2|alpha|^2}
    L_n^(m-n)(4|alpha|^2)`` with ``alpha = (q + ip)/sqrt(2 hbar)``.
    """
    if m < n:
        return np.conj(wigner_kernel(n, m, q, p, hbar))
    alpha_c = (q - 1j * p) / np.sqrt(2 * hbar)
    r2 = (q * q + p * p) / hbar  # = 2|alpha|^2
    pref = (-1) ** n / (np.pi * hbar) * np.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)))
    return pref * (2 * alpha_c) ** (m - n) * np.exp(-r2) * eval_genlaguerre(n, m - n, 2 * r2)


def wigner_transform(rho_osc, grid, tail_tol=1e-6, pop_tol=1e-14):
    """Spin-traced oscillator density matrix to its Wigner function on ``grid``.

    The grid must resolve the highest basis level ``m`` whose population plus
    everything above it exceeds ``tail_tol``: its local wavenumber
    ``2 sqrt(2m+1)/sqrt(hbar)`` has to sit below the Nyquist limit and its
    turning radius inside the box.
    """
    rho_osc = np.asarray(rho_osc)
    hbar = grid.hbar
    pops = np.abs(np.diag(rho_osc))
    tails = np.cumsum(pops[::-1])[::-1]
    occupied = np.nonzero(tails > tail_tol)[0]
    top = int(occupied.max()) if occupied.size else 0
    kmax = 2 * np.sqrt((2 * top + 1) / hbar)
    nyq = np.pi / max(grid.dq, grid.dp)
    if kmax > nyq:
        raise ValueError(f"grid too coarse for basis level {top}: needs wavenumber {kmax:.2f}, "
                         f"Nyquist is {nyq:.2f}")
    half = 0.5 * min(grid.Lq, grid.Lp)
    if np.sqrt((2 * top + 1) * hbar) > half:
        raise ValueError(f"box half-width {half:g} smaller than turning radius of level {top}")
    Q, P = grid.Q, grid.P
    W = np.zeros(grid.shape)
    N = rho_osc.shape[0]
    for m in range(N):
        if pops[m] <= pop_tol and not np.any(np.abs(rho_osc[m]) > pop_tol):
            continue
        for n in range(m + 1):
            r = rho_osc[m, n]
            if abs(r) <= pop_tol * 1e-3:
                continue
            K = wigner_kernel(m, n, Q, P, hbar)
            W += (r * K).real if m == n else 2 * (r * K).real
    return WignerField(grid, W)


def hermite_functions(n_max, x, hbar=1.0):
    """Normalised oscillator eigenfunctions ``psi_0..psi_{n_max-1}`` at ``x``."""
    xi = np.asarray(x, dtype=float) / np.sqrt(hbar)
    out = np.zeros((n_max,) + xi.shape)
    out[0] = np.pi ** -0.25 * np.exp(-xi * xi / 2) / hbar ** 0.25
    if n_max > 1:
        out[1] = np.sqrt(2.0) * xi * out[0]
    for k in range(2, n_max):
        out[k] = np.sqrt(2.0 / k) * xi * out[k - 1] - np.sqrt((k - 1) / k) * out[k - 2]
    return out


def position_density(rho_osc, x, hbar=1.0):
    """``<x|rho|x>`` from the basis expansion."""
    phi = hermite_functions(rho_osc.shape[0], x, hbar)
    return np.real(np.einsum("m...,mn,n...->...", phi, rho_osc, phi))
