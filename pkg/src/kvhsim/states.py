"""Initial wavefunctions as closed-form callables.

Every state can be evaluated at arbitrary phase-space points, which is what
the characteristics oracle needs. ``scale`` carries the grid normalisation
so that the sampled field and the closed form agree exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


def smooth_window(r, r_inner, r_outer):
    """C-infinity radial cutoff: 1 for r <= r_inner, 0 for r >= r_outer."""
    s = np.clip((np.asarray(r, dtype=float) - r_inner) / (r_outer - r_inner), 0.0, 1.0)

    def psi(x):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)

    a, b = psi(1.0 - s), psi(s)
    return a / (a + b)


@dataclass(frozen=True)
class GaussianState:
    """``sqrt(D) exp(iS/hbar)`` with Gaussian D.

    ``D = exp(-|z - z0|^2 / s^2) / (pi s^2)`` and
    ``S = alpha * (q - q0)(p - p0) + kq q + kp p``. With the defaults this is
    the real root of ``exp(-2 H0) / pi`` for ``H0 = (p^2 + q^2)/2``.
    """

    q0: float = 0.0
    p0: float = 0.0
    width: float = 1.0
    alpha: float = 0.0
    kq: float = 0.0
    kp: float = 0.0
    hbar: float = 1.0
    scale: float = 1.0

    def __call__(self, q, p):
        s2 = self.width ** 2
        dq, dp = q - self.q0, p - self.p0
        amp = np.exp(-(dq * dq + dp * dp) / (2 * s2)) / np.sqrt(np.pi * s2)
        S = self.alpha * dq * dp + self.kq * q + self.kp * p
        return self.scale * amp * np.exp(1j * S / self.hbar)


def matched_density(r2):
    """``(1 - (1 + r^2) e^{-r^2}) / (pi r^4)``, finite at the origin."""
    r2 = np.asarray(r2, dtype=float)
    small = r2 < 1e-3
    safe = np.where(small, 1.0, r2)
    num = -np.expm1(-safe) - safe * np.exp(-safe)
    exact = num / (np.pi * safe * safe)
    # series: (u^2/2 - u^3/3 + u^4/8) / (pi u^2)
    series = (0.5 - r2 / 3 + r2 * r2 / 8) / np.pi
    return np.where(small, series, exact)


@dataclass(frozen=True)
class MatchedState:
    """Koopman state whose momentum-map density is ``exp(-(q^2+p^2))/pi``.

    ``D = (1 - (1+r^2) e^{-r^2}) / (pi r^4)`` with phase ``S = pq/2``; the
    algebraic tail of D is removed by a smooth window between
    ``r_inner`` and ``r_outer``.
    """

    r_inner: float = 6.0
    r_outer: float = 8.0
    hbar: float = 1.0
    scale: float = 1.0

    def __call__(self, q, p):
        r2 = q * q + p * p
        amp = np.sqrt(matched_density(r2)) * smooth_window(np.sqrt(r2), self.r_inner, self.r_outer)
        return self.scale * amp * np.exp(0.5j * q * p / self.hbar)


@dataclass(frozen=True)
class HybridState:
    """Factorised ``U(q, p) = chi(q, p) * spinor``."""

    chi: object
    spinor: tuple = (1.0, 0.0)
    scale: float = 1.0

    def __call__(self, q, p):
        c = np.asarray(self.chi(q, p))
        s = np.asarray(self.spinor, dtype=complex)
        return self.scale * s.reshape((-1,) + (1,) * c.ndim) * c

    @property
    def n(self):
        return len(self.spinor)


def normalized(state, grid):
    """Copy of ``state`` rescaled to unit norm on ``grid``."""
    values = state(grid.Q, grid.P)
    norm = np.sqrt(np.sum(np.abs(values) ** 2) * grid.cell)
    return replace(state, scale=state.scale / norm)


def window_radii(grid, stretch=np.sqrt(3.0), inner=0.75, outer=0.9):
    """Window radii keeping a state inside the box under flows that stretch by ``stretch``."""
    half = 0.5 * min(grid.Lq, grid.Lp)
    r_out = outer * half / stretch
    return inner * r_out, r_out
