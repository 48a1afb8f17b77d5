"""Nonlinear hybrid density-field equation.

Evolves a Hermitian matrix field ``P(q, p)`` of shape ``(n, n, nq, np)``::

    d_t P = -div(P <X_Hc>) - (i/hbar) [Hc, P],    Hc = H + hbar F(P, {P, H})

with ``<X_A> = (Tr(d_p A P), -Tr(d_q A P)) / Tr P``. The correction F is
pluggable; it defaults to zero.
"""
from __future__ import annotations

import logging

import numpy as np

from .errors import GridMismatchError
from .koopman import ClassicalDensityField, check_cfl, rk4

log = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10


def zero_correction(P, bracket):
    return np.zeros_like(P)


def _mm(A, B):
    """Nodewise matrix product of ``(n, n, ...)`` fields."""
    return np.einsum("ij...,jk...->ik...", A, B)


def _trace_prod(A, B):
    return np.einsum("ij...,ji...->...", A, B)


def dagger(P):
    return np.conj(np.swapaxes(P, 0, 1))


def hermiticity_defect(P):
    return float(np.max(np.abs(P - dagger(P)))) if P.size else 0.0


def density_from_wavefunction(grid, U):
    """``P_jk = U_j conj(U_k)`` per node."""
    U = grid.check(U, "U")
    return U[:, None] * np.conj(U)[None, :]


def trace_density(grid, P):
    return ClassicalDensityField(grid, np.real(np.einsum("ii...->...", P)), "nonlinear_trace")


def node_min_eigenvalue(P):
    """Smallest eigenvalue over all nodes."""
    M = np.moveaxis(P, (0, 1), (-2, -1))
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    return float(np.linalg.eigvalsh(M).min())


def integrated_density(grid, P):
    """``int P dq dp``: the quantum density matrix of the field."""
    return P.sum(axis=(-2, -1)) * grid.cell


def matrix_bracket(grid, P, Hq, Hp):
    """``{P, H} = d_q P d_p H - d_p P d_q H`` with ordered matrix products."""
    Pq, Pp = grid.gradient(P)
    return _mm(Pq, Hp) - _mm(Pp, Hq)


def spectral_bound(A):
    """Nodewise largest |eigenvalue| of a Hermitian matrix field."""
    M = np.moveaxis(A, (0, 1), (-2, -1))
    M = 0.5 * (M + np.conj(np.swapaxes(M, -1, -2)))
    return np.abs(np.linalg.eigvalsh(M)).max(axis=-1)


def mean_velocity(grid, P, Hq, Hp, eps_rho=None, bounds=None):
    """Density-weighted Hamiltonian velocity.

    Returns ``(v_q, v_p, flagged)``; nodes with ``Tr P < eps_rho`` get zero
    velocity and are flagged. ``eps_rho`` defaults to ``1e-12 * max Tr P``.

    For PSD P each component is a convex average of eigenvalues of
    ``d_p H`` (resp. ``-d_q H``), so it is clipped to the nodewise spectral
    bound; this only acts where round-off makes ``Tr P`` nearly cancel.
    """
    rho = np.real(np.einsum("ii...->...", P))
    if eps_rho is None:
        eps_rho = 1e-12 * max(float(rho.max()), 0.0)
    flagged = rho < eps_rho
    safe = np.where(flagged, 1.0, rho)
    vq = np.where(flagged, 0.0, np.real(_trace_prod(Hp, P)) / safe)
    vp = np.where(flagged, 0.0, -np.real(_trace_prod(Hq, P)) / safe)
    if bounds is None:
        bounds = (spectral_bound(Hp), spectral_bound(Hq))
    vq = np.clip(vq, -bounds[0], bounds[0])
    vp = np.clip(vp, -bounds[1], bounds[1])
    return vq, vp, flagged


def _upwind_div(grid, F, v, axis, h):
    # first-order upwind flux on faces i+1/2
    vf = 0.5 * (v + np.roll(v, -1, axis))
    Fn = np.roll(F, -1, axis)
    flux = np.where(vf >= 0, vf * F, vf * Fn)
    return (flux - np.roll(flux, 1, axis)) / h


class NQCLE:
    """Right-hand side and RK4 stepping for the nonlinear density equation."""

    def __init__(self, grid, H, correction=None, eps_rho=None, divergence="spectral"):
        if divergence not in ("spectral", "upwind"):
            raise ValueError(f"unknown divergence scheme {divergence!r}")
        self.grid, self.H = grid, H
        self.correction = correction or zero_correction
        self.eps_rho = eps_rho
        self.divergence = divergence
        self.Hv, self.Hq, self.Hp, _ = H.arrays(grid)
        self._bounds = (spectral_bound(self.Hp), spectral_bound(self.Hq))
        self.last_flagged = None

    def _velocity_bounds(self, Hq, Hp):
        if Hq is self.Hq:
            return self._bounds
        return spectral_bound(Hp), spectral_bound(Hq)

    def effective(self, P):
        """``(Hc, d_q Hc, d_p Hc)`` including the correction."""
        if self.correction is zero_correction:
            return self.Hv, self.Hq, self.Hp
        F = self.correction(P, matrix_bracket(self.grid, P, self.Hq, self.Hp))
        if not np.any(F):
            return self.Hv, self.Hq, self.Hp
        hb = self.grid.hbar
        Fq, Fp = self.grid.gradient(F)
        return self.Hv + hb * F, self.Hq + hb * Fq, self.Hp + hb * Fp

    def velocity(self, P):
        _, Hq, Hp = self.effective(P)
        vq, vp, flagged = mean_velocity(self.grid, P, Hq, Hp, self.eps_rho,
                                        self._velocity_bounds(Hq, Hp))
        self.last_flagged = flagged
        return vq, vp

    def rhs(self, P):
        g = self.grid
        Hc, Hq, Hp = self.effective(P)
        vq, vp, flagged = mean_velocity(g, P, Hq, Hp, self.eps_rho,
                                        self._velocity_bounds(Hq, Hp))
        self.last_flagged = flagged
        if self.divergence == "spectral":
            div = g.partial_q(P * vq) + g.partial_p(P * vp)
        else:
            div = _upwind_div(g, P, vq, -2, g.dq) + _upwind_div(g, P, vp, -1, g.dp)
        comm = _mm(Hc, P) - _mm(P, Hc)
        return -div - (1j / g.hbar) * comm

    def step(self, P, dt):
        new = rk4(self.rhs, P, dt)
        drift = hermiticity_defect(new)
        if drift > 0:
            log.debug("re-symmetrising P, Hermiticity drift %.2e", drift)
        return 0.5 * (new + dagger(new))

    def check_cfl(self, P, dt, cfl=0.5, action="abort"):
        vq, vp = self.velocity(P)
        check_cfl(self.grid, float(np.max(np.hypot(vq, vp))), dt, cfl, action)


def _validate(grid, P, H):
    P = grid.check(P, "P")
    if P.ndim != 4 or P.shape[:2] != (H.n, H.n):
        raise GridMismatchError(f"density field shape {P.shape} does not match dim {H.n}")
    scale = max(float(np.max(np.abs(P))), 1e-300)
    if hermiticity_defect(P) > HERMITIAN_TOL * scale:
        raise ValueError("density field is not Hermitian")
    return P


def nqcle_rhs(grid, P, H, correction=None, eps_rho=None, divergence="spectral"):
    P = _validate(grid, P, H)
    return NQCLE(grid, H, correction, eps_rho, divergence).rhs(P)


def nqcle_step(grid, P, H, dt, correction=None, eps_rho=None, cfl=0.5, cfl_action="abort",
               divergence="spectral"):
    P = _validate(grid, P, H)
    if dt == 0:
        return P.copy()
    eq = NQCLE(grid, H, correction, eps_rho, divergence)
    eq.check_cfl(P, dt, cfl, cfl_action)
    return eq.step(P, dt)
