"""Classical sector: Koopman-von Neumann and Koopman-van Hove wavefunctions.

The KvN generator is the Liouvillian ``{H, .}``; KvH adds the phase term
``(i/hbar)(p d_p H - H)``, so that along Hamiltonian trajectories the
modulus of chi is transported and its phase accumulates the Lagrangian.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import CFLViolation, HamiltonianError, IncompatibleTransformError
from .hamiltonian import HamiltonianFunction

log = logging.getLogger(__name__)

PROVENANCES = ("kvn", "kvh_momentum_map", "hybrid_eq8", "nonlinear_trace", "liouville_reference")


@dataclass
class ClassicalDensityField:
    grid: object
    rho: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def mass(self):
        return float(self.grid.integrate(self.rho))

    def min(self):
        return float(self.rho.min())


def rk4(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def check_cfl(grid, speed, dt, cfl=0.5, action="abort"):
    """Enforce ``dt <= cfl * min(dq, dp) / max|X_H|``."""
    if speed <= 0 or dt <= 0:
        return
    limit = cfl * min(grid.dq, grid.dp) / speed
    if dt > limit:
        msg = f"dt={dt:g} exceeds CFL limit {limit:g} (max speed {speed:g})"
        if action == "abort":
            raise CFLViolation(msg, dt=dt, limit=limit, max_speed=speed)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


def _bracket_with(grid, Hq, Hp, chi):
    chi_q, chi_p = grid.gradient(chi)
    return Hq * chi_p - Hp * chi_q


def kvn_rhs(grid, chi, H):
    """``d_t chi = {H, chi}``."""
    chi = grid.check(chi, "chi")
    Hq, Hp = H.gradient(grid)
    return _bracket_with(grid, Hq, Hp, chi)


def kvh_rhs(grid, chi, H):
    """``d_t chi = {H, chi} + (i/hbar)(p d_p H - H) chi``."""
    chi = grid.check(chi, "chi")
    Hq, Hp = H.gradient(grid)
    L = grid.P * Hp - H.values(grid)
    return _bracket_with(grid, Hq, Hp, chi) + (1j / grid.hbar) * L * chi


class KoopmanStepper:
    """RK4 on the pseudospectral semi-discretisation with cached H data."""

    def __init__(self, grid, H, dt, solver="rk4_kvh", cfl=0.5, cfl_action="abort"):
        if solver not in ("rk4_kvn", "rk4_kvh"):
            raise ValueError(f"unknown solver {solver!r}")
        self.grid, self.H, self.dt, self.solver = grid, H, dt, solver
        self.Hq, self.Hp = H.gradient(grid)
        self.phase = (1j / grid.hbar) * (grid.P * self.Hp - H.values(grid))
        check_cfl(grid, H.max_speed(grid), dt, cfl, cfl_action)

    def rhs(self, chi):
        out = _bracket_with(self.grid, self.Hq, self.Hp, chi)
        if self.solver == "rk4_kvh":
            out = out + self.phase * chi
        return out

    def step(self, chi):
        return rk4(self.rhs, chi, self.dt)

    def advance(self, chi, nsteps):
        for _ in range(nsteps):
            chi = rk4(self.rhs, chi, self.dt)
        return chi


def step(grid, chi, H, dt, solver="rk4_kvh", cfl=0.5, cfl_action="abort"):
    """One RK4 step of the KvN or KvH equation."""
    chi = grid.check(chi, "chi")
    return KoopmanStepper(grid, H, dt, solver, cfl, cfl_action).step(chi)


def momentum_map_density(grid, chi):
    """``|chi|^2 + d_p(p |chi|^2) + hbar Im{conj(chi), chi}``.

    Leading component axes are summed, so this also serves the hybrid
    classical density.
    """
    chi = grid.check(chi, "chi")
    D = np.abs(chi) ** 2
    chi_q, chi_p = grid.gradient(chi)
    # Im{conj chi, chi} = Im(conj(chi_q) chi_p - conj(chi_p) chi_q) = 2 Im(conj(chi_q) chi_p)
    rho = D + grid.partial_p(grid.P * D) + 2 * grid.hbar * np.imag(np.conj(chi_q) * chi_p)
    if rho.ndim > 2:
        rho = rho.reshape((-1,) + grid.shape).sum(axis=0)
    return rho


def kvh_classical_density(grid, chi):
    return ClassicalDensityField(grid, momentum_map_density(grid, chi), "kvh_momentum_map")


def kvn_classical_density(grid, chi):
    return ClassicalDensityField(grid, np.abs(grid.check(chi)) ** 2, "kvn")


# -- exact characteristics for quadratic H --------------------------------

def lagrangian_action(H, t, z0q, z0p, method="exact", n_gauss=64):
    """``int_0^t L(Phi_s(z0)) ds`` along the exact flow of quadratic ``H``."""
    G = H.flow_generator()
    Qf = H.lagrangian_form()
    if method == "exact":
        # Van Loan: expm([[-G^T, Q], [0, G]] t) gives int_0^t e^{G^T s} Q e^{G s} ds
        blk = np.zeros((6, 6))
        blk[:3, :3] = -G.T
        blk[:3, 3:] = Qf
        blk[3:, 3:] = G
        E = expm(blk * t)
        M = E[3:, 3:].T @ E[:3, 3:]
        M = 0.5 * (M + M.T)
    elif method == "gauss":
        x, w = np.polynomial.legendre.leggauss(n_gauss)
        s = 0.5 * t * (x + 1)
        M = np.zeros((3, 3))
        for si, wi in zip(s, w):
            F = expm(G * si)
            M += wi * (F.T @ Qf @ F)
        M *= 0.5 * t
    else:
        raise ValueError(f"unknown method {method!r}")
    return (M[0, 0] * z0q * z0q + 2 * M[0, 1] * z0q * z0p + M[1, 1] * z0p * z0p
            + 2 * M[0, 2] * z0q + 2 * M[1, 2] * z0p + M[2, 2])


def characteristics_oracle(grid, chi0, H, t, method="exact", n_gauss=64, kvn=False):
    """KvH (or KvN with ``kvn=True``) solution by the method of characteristics.

    ``chi0`` is a callable ``chi0(q, p)`` evaluated at back-flowed points, so
    no interpolation enters. Leading output axes follow those of ``chi0``.
    """
    if not isinstance(H, HamiltonianFunction) or not H.is_quadratic:
        raise HamiltonianError("characteristics oracle needs a quadratic Hamiltonian")
    back = H.flow(-t)
    Q, P = grid.Q, grid.P
    q0 = back[0, 0] * Q + back[0, 1] * P + back[0, 2]
    p0 = back[1, 0] * Q + back[1, 1] * P + back[1, 2]
    out = np.asarray(chi0(q0, p0), dtype=complex)
    if kvn or t == 0:
        return out
    action = lagrangian_action(H, t, q0, p0, method, n_gauss)
    return out * np.exp(1j * action / grid.hbar)


def liouville_transport(grid, rho0, H, t):
    """Exact Liouville solution ``rho0(Phi_{-t}(z))`` for a callable ``rho0``."""
    back = H.flow(-t)
    Q, P = grid.Q, grid.P
    q0 = back[0, 0] * Q + back[0, 1] * P + back[0, 2]
    p0 = back[1, 0] * Q + back[1, 1] * P + back[1, 2]
    return ClassicalDensityField(grid, np.real(rho0(q0, p0)), "liouville_reference")


# -- van Hove representation on affine symplectic maps ----------------------

class VanHoveTransform:
    """Pair ``(eta, phi)`` with ``eta(z) = M z + shift``, ``det M = 1``.

    ``phi`` is quadratic, ``phi = w^T Phi w`` for ``w = (q, p, 1)``; by default
    it is the canonical solution of ``eta^* theta + d phi = theta`` plus
    ``phase_const``.
    """

    def __init__(self, M, shift=(0.0, 0.0), phi=None, phase_const=0.0, tol=1e-8):
        M = np.asarray(M, dtype=float)
        shift = np.asarray(shift, dtype=float)
        if M.shape != (2, 2) or abs(np.linalg.det(M) - 1) > 1e-12:
            raise IncompatibleTransformError("eta must be affine with det M = 1")
        self.M, self.shift = M, shift
        self.phi = self.canonical_phase(M, shift, phase_const) if phi is None \
            else np.asarray(phi, dtype=float)
        self.tol = tol

    @staticmethod
    def canonical_phase(M, shift, const=0.0):
        """Quadratic form of ``phi = -(P_l Q_l - p q)/2 - t_p Q_l + const``."""
        # Q_l = m11 q + m12 p, P_l = m21 q + m22 p
        (m11, m12), (m21, m22) = M
        tq, tp = shift
        Phi = np.zeros((3, 3))
        Phi[0, 0] = -0.5 * m11 * m21
        Phi[1, 1] = -0.5 * m12 * m22
        Phi[0, 1] = Phi[1, 0] = -0.25 * (m11 * m22 + m12 * m21 - 1.0)
        Phi[0, 2] = Phi[2, 0] = -0.5 * tp * m11
        Phi[1, 2] = Phi[2, 1] = -0.5 * tp * m12
        Phi[2, 2] = const
        return Phi

    def phase(self, q, p):
        F = self.phi
        return (F[0, 0] * q * q + 2 * F[0, 1] * q * p + F[1, 1] * p * p
                + 2 * F[0, 2] * q + 2 * F[1, 2] * p + F[2, 2])

    def phase_gradient(self, q, p):
        F = self.phi
        return (2 * (F[0, 0] * q + F[0, 1] * p + F[0, 2]),
                2 * (F[0, 1] * q + F[1, 1] * p + F[1, 2]))

    def theta_defect(self, grid):
        """Max node residual of ``eta^* (p dq) + d phi - p dq`` (both components)."""
        Q, P = grid.Q, grid.P
        (m11, m12), (m21, m22) = self.M
        Pn = m21 * Q + m22 * P + self.shift[1]
        phq, php = self.phase_gradient(Q, P)
        rq = Pn * m11 + phq - P
        rp = Pn * m12 + php
        return float(max(np.max(np.abs(rq)), np.max(np.abs(rp))))

    def check(self, grid):
        d = self.theta_defect(grid)
        if d > self.tol:
            raise IncompatibleTransformError(f"theta compatibility defect {d:.3e} > {self.tol:g}")

    def inverse_points(self, q, p):
        Minv = np.linalg.inv(self.M)
        dq, dp = q - self.shift[0], p - self.shift[1]
        return Minv[0, 0] * dq + Minv[0, 1] * dp, Minv[1, 0] * dq + Minv[1, 1] * dp

    def compose(self, first):
        """``self o first``: apply ``first`` then ``self``."""
        M = self.M @ first.M
        shift = self.M @ first.shift + self.shift
        # phi(z) = phi_first(z) + phi_self(eta_first(z)); fix the constant at z = 0
        z = first.shift
        const = first.phase(0.0, 0.0) + self.phase(z[0], z[1])
        base = VanHoveTransform.canonical_phase(M, shift, 0.0)
        return VanHoveTransform(M, shift, phase_const=const - base[2, 2])

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @classmethod
    def translation(cls, a=0.0, b=0.0, phase_const=0.0):
        return cls(np.eye(2), (a, b), phase_const=phase_const)

    @classmethod
    def linear_flow(cls, H, t, phase_const=0.0):
        """Time-``t`` flow of a quadratic Hamiltonian as an affine map."""
        F = H.flow(t)
        return cls(F[:2, :2], F[:2, 2], phase_const=phase_const)


def van_hove_act(grid, chi, g):
    """``chi(z) -> chi(eta^{-1} z) exp(-i phi(eta^{-1} z) / hbar)``.

    Off-grid samples of chi come from Fourier interpolation.
    """
    g.check(grid)
    chi = grid.check(chi, "chi")
    q0, p0 = g.inverse_points(grid.Q, grid.P)
    if np.allclose(g.M, np.eye(2)) and not np.any(g.shift):
        moved = chi.astype(complex)
    else:
        moved = grid.interpolate(chi.astype(complex), q0, p0)
    return moved * np.exp(-1j * g.phase(q0, p0) / grid.hbar)


def momentum_map_pairing_check(grid, chi, xi):
    """``|Omega(xi_V(chi), chi) - 2 <J(chi), xi>|`` for a generator ``xi``.

    ``Omega(a, b) = 2 hbar Im<a|b>``, ``xi_V = -(i/hbar) L_xi chi`` is the
    infinitesimal van Hove action and ``J`` is the momentum-map density.
    """
    chi = grid.check(chi, "chi")
    xi_v = kvh_rhs(grid, chi, xi)
    lhs = 2 * grid.hbar * grid.inner(xi_v, chi).imag
    rhs = 2 * float(np.sum(momentum_map_density(grid, chi) * xi.values(grid)) * grid.cell)
    return abs(lhs - rhs)
