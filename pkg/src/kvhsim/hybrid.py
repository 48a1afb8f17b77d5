"""Hybrid quantum-classical wave equation for an n-level quantum sector.

A hybrid wavefunction is an array ``(n, nq, np)``: one Koopman component per
quantum basis state. Component form of the evolution::

    d_t U_j = sum_k {H_jk, U_k} + (i/hbar)(p d_p H_jk - H_jk) U_k
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError, HamiltonianError
from .hamiltonian import PAULI, HybridHamiltonian
from .koopman import ClassicalDensityField, check_cfl, characteristics_oracle, momentum_map_density, rk4

PSD_TOL = 1e-10


def _check_dims(grid, U, H):
    U = grid.check(U, "U")
    if U.ndim != 3 or U.shape[0] != H.n:
        raise GridMismatchError(f"wavefunction shape {U.shape} does not match quantum dim {H.n}")
    return U


def qcwe_rhs(grid, U, H):
    U = _check_dims(grid, U, H)
    _, Hq, Hp, L = H.arrays(grid)
    Uq, Up = grid.gradient(U)
    return (np.einsum("jk...,k...->j...", Hq, Up)
            - np.einsum("jk...,k...->j...", Hp, Uq)
            + (1j / grid.hbar) * np.einsum("jk...,k...->j...", L, U))


class QCWEStepper:
    """RK4 for the QCWE with per-node Hamiltonian data precomputed.

    Diagonal Hamiltonians take a per-channel path (no cross-coupling
    products are formed).
    """

    def __init__(self, grid, H, dt, cfl=0.5, cfl_action="abort"):
        self.grid, self.H, self.dt = grid, H, dt
        _, self.Hq, self.Hp, L = H.arrays(grid)
        self.phase = (1j / grid.hbar) * L
        off = ~np.eye(H.n, dtype=bool)
        self.diagonal = not np.any(self.Hq[off]) and not np.any(self.Hp[off]) and not np.any(L[off])
        if self.diagonal:
            idx = np.arange(H.n)
            self.Hq, self.Hp, self.phase = (a[idx, idx] for a in (self.Hq, self.Hp, self.phase))
        check_cfl(grid, H.max_speed(grid), dt, cfl, cfl_action)

    def rhs(self, U):
        Uq, Up = self.grid.gradient(U)
        if self.diagonal:
            return self.Hq * Up - self.Hp * Uq + self.phase * U
        return (np.einsum("jk...,k...->j...", self.Hq, Up)
                - np.einsum("jk...,k...->j...", self.Hp, Uq)
                + np.einsum("jk...,k...->j...", self.phase, U))

    def step(self, U):
        return rk4(self.rhs, U, self.dt)

    def advance(self, U, nsteps):
        for _ in range(nsteps):
            U = rk4(self.rhs, U, self.dt)
        return U


def qcwe_step(grid, U, H, dt, cfl=0.5, cfl_action="abort"):
    U = _check_dims(grid, U, H)
    return QCWEStepper(grid, H, dt, cfl, cfl_action).step(U)


def total_norm(grid, U):
    return grid.norm2(U)


@dataclass
class QuantumDensityMatrix:
    matrix: np.ndarray
    source_norm: float = 1.0

    @property
    def n(self):
        return self.matrix.shape[0]

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T)).min())

    def trace(self):
        return float(np.trace(self.matrix).real)

    def hermiticity_defect(self):
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))


def quantum_density(grid, U, normalize=True):
    """``rho_jk = int U_j conj(U_k) dq dp`` (a Gram matrix, hence PSD).

    With ``normalize`` the result is divided by the total norm, which is
    kept in ``source_norm``.
    """
    U = grid.check(U, "U")
    rho = np.einsum("jab,kab->jk", U, np.conj(U)) * grid.cell
    norm = float(np.trace(rho).real)
    if normalize and norm > 0:
        rho = rho / norm
    return QuantumDensityMatrix(rho, norm)


def hybrid_classical_density(grid, U):
    """Sum over quantum components of the momentum-map density."""
    return ClassicalDensityField(grid, momentum_map_density(grid, grid.check(U, "U")), "hybrid_eq8")


def hybrid_kvn_density(grid, U):
    """Leading term only, ``sum_j |U_j|^2``."""
    return ClassicalDensityField(grid, np.sum(np.abs(U) ** 2, axis=0), "kvn")


@dataclass
class BlochObservables:
    n_vec: np.ndarray
    purity: float
    energy: float = float("nan")
    time: float = 0.0


def bloch_and_purity(rho, energy=float("nan"), time=0.0):
    m = rho.matrix if isinstance(rho, QuantumDensityMatrix) else np.asarray(rho)
    if m.shape != (2, 2):
        raise ValueError(f"Bloch vector needs a 2x2 density matrix, got {m.shape}")
    n_vec = np.array([np.trace(m @ PAULI[a]).real for a in "xyz"])
    purity = float(np.trace(m @ m).real)
    return BlochObservables(n_vec, purity, energy, time)


def hybrid_energy(grid, U, H):
    """``Re sum_jk int conj(U_j) (i hbar {H_jk, U_k} - (p d_p H_jk - H_jk) U_k)``.

    For n = 1 this equals ``int rho_c H`` with rho_c the momentum-map density.
    """
    U = _check_dims(grid, U, H)
    _, Hq, Hp, L = H.arrays(grid)
    Uq, Up = grid.gradient(U)
    br = np.einsum("jk...,k...->j...", Hq, Up) - np.einsum("jk...,k...->j...", Hp, Uq)
    gen = 1j * grid.hbar * br - np.einsum("jk...,k...->j...", L, U)
    return float(np.real(np.sum(np.conj(U) * gen)) * grid.cell)


def diagonal_channel_solve(grid, U0, H, t, method="exact"):
    """Exact QCWE solution for ``H = H0 * 1 + HI * Sigma`` with quadratic H0, HI.

    ``U0`` is a callable ``U0(q, p) -> (n, ...)``. It is rotated into the
    Sigma eigenbasis, each channel follows the characteristics of
    ``H0 + lambda_j HI`` and the result is rotated back.
    """
    if not isinstance(H, HybridHamiltonian) or not H.is_commuting:
        raise HamiltonianError("diagonal channel solve needs the commuting structure")
    H0, HI, _, _, V = H.commuting
    if not (H0.is_quadratic and HI.is_quadratic):
        raise HamiltonianError("diagonal channel solve needs quadratic H0 and HI")
    Vh = V.conj().T
    channels = H.channels()
    out = []
    for j, Hj in enumerate(channels):
        def chi0(q, p, j=j):
            comps = np.asarray(U0(q, p))
            return np.tensordot(Vh[j], comps, axes=(0, 0))
        out.append(characteristics_oracle(grid, chi0, Hj, t, method=method))
    out = np.array(out)
    return np.tensordot(V, out, axes=(1, 0))
