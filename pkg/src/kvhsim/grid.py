"""Periodic phase-space grid and the calculus built on it.

Fields are plain numpy arrays whose two trailing axes are (q, p), q outer.
Leading axes are free, so a hybrid wavefunction is ``(n, nq, np)`` and a
matrix field is ``(n, n, nq, np)``; every operator here acts on the trailing
pair only.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import GridError, GridMismatchError, OddSizeError

SCHEMES = ("spectral", "central4")


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Uniform periodic grid over ``[q_min, q_max) x [p_min, p_max)``.

    The symplectic potential convention is ``theta = p dq`` throughout.
    """

    nq: int
    np_: int
    q_min: float
    q_max: float
    p_min: float
    p_max: float
    hbar: float = 1.0
    scheme: str = "spectral"

    def __post_init__(self):
        for name, n in (("nq", self.nq), ("np_", self.np_)):
            if int(n) != n:
                raise GridError(f"{name} must be an integer, got {n!r}")
            if n % 2:
                raise OddSizeError(f"{name}={n} is odd; sizes must be even")
            if n < 8:
                raise GridError(f"{name}={n} is below the minimum of 8")
        if not self.q_max > self.q_min or not self.p_max > self.p_min:
            raise GridError("extents must satisfy min < max")
        if not self.hbar > 0:
            raise GridError(f"hbar must be positive, got {self.hbar}")
        if self.scheme not in SCHEMES:
            raise GridError(f"unknown derivative scheme {self.scheme!r}")

    # -- geometry -----------------------------------------------------------
    @property
    def shape(self):
        return (self.nq, self.np_)

    @property
    def dq(self):
        return (self.q_max - self.q_min) / self.nq

    @property
    def dp(self):
        return (self.p_max - self.p_min) / self.np_

    @property
    def cell(self):
        """Quadrature weight per node."""
        return self.dq * self.dp

    @property
    def Lq(self):
        return self.q_max - self.q_min

    @property
    def Lp(self):
        return self.p_max - self.p_min

    @cached_property
    def q(self):
        return self.q_min + self.dq * np.arange(self.nq)

    @cached_property
    def p(self):
        return self.p_min + self.dp * np.arange(self.np_)

    @cached_property
    def Q(self):
        return np.broadcast_to(self.q[:, None], self.shape)

    @cached_property
    def P(self):
        return np.broadcast_to(self.p[None, :], self.shape)

    @cached_property
    def kq(self):
        k = 2 * np.pi * sfft.fftfreq(self.nq, self.dq)
        k[self.nq // 2] = 0.0
        return k

    @cached_property
    def kp(self):
        k = 2 * np.pi * sfft.fftfreq(self.np_, self.dp)
        k[self.np_ // 2] = 0.0
        return k

    def with_scheme(self, scheme):
        return PhaseSpaceGrid(self.nq, self.np_, self.q_min, self.q_max,
                              self.p_min, self.p_max, self.hbar, scheme)

    # -- validation ---------------------------------------------------------
    def check(self, f, name="field"):
        f = np.asarray(f)
        if f.shape[-2:] != self.shape:
            raise GridMismatchError(
                f"{name} has trailing shape {f.shape[-2:]}, grid is {self.shape}")
        return f

    # -- calculus -----------------------------------------------------------
    def gradient(self, f):
        """Return ``(d_q f, d_p f)`` sharing one forward transform."""
        f = self.check(f)
        if self.scheme == "central4":
            return _central4(f, -2, self.dq), _central4(f, -1, self.dp)
        fh = sfft.fft2(f, axes=(-2, -1))
        fq = sfft.ifft2(fh * (1j * self.kq)[:, None], axes=(-2, -1))
        fp = sfft.ifft2(fh * (1j * self.kp)[None, :], axes=(-2, -1))
        if not np.iscomplexobj(f):
            fq, fp = fq.real, fp.real
        return fq, fp

    def partial_q(self, f):
        f = self.check(f)
        if self.scheme == "central4":
            return _central4(f, -2, self.dq)
        out = sfft.ifft(sfft.fft(f, axis=-2) * (1j * self.kq)[:, None], axis=-2)
        return out if np.iscomplexobj(f) else out.real

    def partial_p(self, f):
        f = self.check(f)
        if self.scheme == "central4":
            return _central4(f, -1, self.dp)
        out = sfft.ifft(sfft.fft(f, axis=-1) * (1j * self.kp), axis=-1)
        return out if np.iscomplexobj(f) else out.real

    def poisson_bracket(self, f, g):
        """``{f, g} = d_q f d_p g - d_p f d_q g``."""
        f = self.check(f, "f")
        g = self.check(g, "g")
        fq, fp = self.gradient(f)
        gq, gp = self.gradient(g)
        return fq * gp - fp * gq

    def integrate(self, f):
        """Node sum times ``dq dp`` over the trailing grid axes."""
        f = self.check(f)
        return f.sum(axis=(-2, -1)) * self.cell

    def norm2(self, f):
        """Squared L2 norm, summed over any leading component axes."""
        f = self.check(f)
        return float(np.sum(np.abs(f) ** 2) * self.cell)

    def inner(self, f, g):
        """``<f|g> = integral of conj(f) g``."""
        return complex(np.sum(np.conj(f) * g) * self.cell)

    def interpolate(self, f, qs, ps):
        """Evaluate the trigonometric interpolant of ``f`` at arbitrary points.

        ``qs`` and ``ps`` share a shape; the result has that shape. Exact at
        nodes and for band-limited periodic data.
        """
        f = self.check(f)
        qs = np.asarray(qs, dtype=float)
        ps = np.asarray(ps, dtype=float)
        out_shape = qs.shape
        coef = sfft.fft2(f) / (self.nq * self.np_)
        xq = (qs.ravel() - self.q_min) * (2 * np.pi / self.Lq)
        xp = (ps.ravel() - self.p_min) * (2 * np.pi / self.Lp)
        Eq = _fourier_basis(self.nq, xq)
        Ep = _fourier_basis(self.np_, xp)
        # sum_k sum_l c_kl Eq[k, x] Ep[l, x]
        out = np.einsum("kx,kx->x", Eq, coef @ Ep)
        if not np.iscomplexobj(f):
            out = out.real
        return out.reshape(out_shape)


def _fourier_basis(n, x):
    m = sfft.fftfreq(n, 1.0 / n)
    E = np.exp(1j * np.outer(m, x))
    # Nyquist mode as a cosine so real data interpolates to real values
    E[n // 2] = np.cos(n / 2 * x)
    return E


def _central4(f, axis, h):
    return (-np.roll(f, -2, axis) + 8 * np.roll(f, -1, axis)
            - 8 * np.roll(f, 1, axis) + np.roll(f, 2, axis)) / (12 * h)


def make_grid(nq, np_, extents, hbar=1.0, scheme="spectral"):
    """Build a grid from ``extents = ((q_min, q_max), (p_min, p_max))``.

    A single pair is applied to both axes.
    """
    ext = np.asarray(extents, dtype=float)
    if ext.shape == (2,):
        ext = np.vstack([ext, ext])
    if ext.shape != (2, 2):
        raise GridError(f"extents must be a pair or a pair of pairs, got {extents!r}")
    return PhaseSpaceGrid(int(nq), int(np_), float(ext[0, 0]), float(ext[0, 1]),
                          float(ext[1, 0]), float(ext[1, 1]), float(hbar), scheme)


# -- field diagnostics ------------------------------------------------------

@dataclass(frozen=True)
class PolarDecomposition:
    density_D: np.ndarray
    phase_S: np.ndarray
    mask: np.ndarray

    def reconstruct(self, hbar):
        return np.sqrt(self.density_D) * np.exp(1j * self.phase_S / hbar)


def polar_decompose(grid, chi, eps_polar=1e-12):
    """Pointwise ``chi = sqrt(D) exp(iS/hbar)``; no phase unwrapping."""
    chi = grid.check(chi)
    amp = np.abs(chi)
    S = grid.hbar * np.angle(chi)
    mask = amp > eps_polar
    S = np.where(mask, S, 0.0)
    return PolarDecomposition(amp ** 2, S, mask)


def boundary_mass(grid, f, margin_fraction=0.05):
    """Fraction of ``sum |f|^2`` sitting in the outer band of the box.

    The band is every node within ``margin_fraction`` of the box width from
    either edge along q or p. Leading axes of ``f`` are summed.
    """
    if not 0 < margin_fraction < 0.5:
        raise ValueError("margin_fraction must lie in (0, 0.5)")
    f = grid.check(f)
    w = np.abs(f) ** 2
    w = w.reshape((-1,) + grid.shape).sum(axis=0)
    total = w.sum()
    if total == 0:
        return 0.0
    return float(w[band_mask(grid, margin_fraction)].sum() / total)


def band_mask(grid, margin_fraction):
    mq = margin_fraction * grid.Lq
    mp = margin_fraction * grid.Lp
    # node centres; the last node sits one spacing short of q_max
    q_out = (grid.q < grid.q_min + mq) | (grid.q + grid.dq > grid.q_max - mq)
    p_out = (grid.p < grid.p_min + mp) | (grid.p + grid.dp > grid.p_max - mp)
    return q_out[:, None] | p_out[None, :]
