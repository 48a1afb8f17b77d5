"""Phase-space Hamiltonians: scalar functions and Hermitian matrices of them."""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from .errors import GridMismatchError, HamiltonianError

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
QUAD_NAMES = ("a", "b", "c", "d", "e", "f")


class HamiltonianFunction:
    """A phase-space function H(q, p).

    Either quadratic, ``H = a q^2 + b p^2 + c qp + d q + e p + f`` with exact
    derivatives and an exact affine flow, or sampled on a grid, in which case
    derivatives come from the grid's derivative scheme.
    """

    def __init__(self, coeffs=None, samples=None, grid=None):
        if (coeffs is None) == (samples is None):
            raise HamiltonianError("give exactly one of coeffs or samples")
        if coeffs is not None:
            coeffs = np.asarray(coeffs)
            if coeffs.shape != (6,):
                raise HamiltonianError("quadratic Hamiltonian needs 6 coefficients (a..f)")
            if not np.all(np.isfinite(coeffs)):
                raise HamiltonianError("non-finite quadratic coefficient")
            if np.iscomplexobj(coeffs) and not np.any(coeffs.imag):
                coeffs = coeffs.real
            self.coeffs = coeffs
            self.samples = None
            self.grid = None
        else:
            if grid is None:
                raise HamiltonianError("sampled Hamiltonian needs its grid")
            samples = grid.check(np.asarray(samples), "samples")
            if not np.all(np.isfinite(samples)):
                raise HamiltonianError("sampled Hamiltonian has non-finite values")
            self.coeffs = None
            self.samples = samples
            self.grid = grid

    @classmethod
    def quadratic(cls, a=0.0, b=0.0, c=0.0, d=0.0, e=0.0, f=0.0):
        return cls(coeffs=np.array([a, b, c, d, e, f]))

    @classmethod
    def constant(cls, value):
        return cls.quadratic(f=value)

    @classmethod
    def sampled(cls, grid, values):
        return cls(samples=values, grid=grid)

    @property
    def kind(self):
        return "quadratic" if self.coeffs is not None else "sampled"

    @property
    def is_quadratic(self):
        return self.coeffs is not None

    @property
    def is_real(self):
        data = self.coeffs if self.is_quadratic else self.samples
        return not np.iscomplexobj(data) or not np.any(np.imag(data))

    def is_zero(self):
        data = self.coeffs if self.is_quadratic else self.samples
        return not np.any(data)

    def __repr__(self):
        if self.is_quadratic:
            terms = ", ".join(f"{n}={v:g}" for n, v in zip(QUAD_NAMES, self.coeffs) if v)
            return f"HamiltonianFunction.quadratic({terms})"
        return f"HamiltonianFunction.sampled(shape={self.samples.shape})"

    # -- algebra (quadratic only; sampled falls back to samples) ------------
    def __add__(self, other):
        if not isinstance(other, HamiltonianFunction):
            other = HamiltonianFunction.constant(other)
        if self.is_quadratic and other.is_quadratic:
            return HamiltonianFunction(coeffs=self.coeffs + other.coeffs)
        grid = self.grid or other.grid
        return HamiltonianFunction.sampled(grid, self.values(grid) + other.values(grid))

    __radd__ = __add__

    def __mul__(self, s):
        if self.is_quadratic:
            return HamiltonianFunction(coeffs=self.coeffs * s)
        return HamiltonianFunction.sampled(self.grid, self.samples * s)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other if isinstance(other, HamiltonianFunction) else -other)

    def conj(self):
        if self.is_quadratic:
            return HamiltonianFunction(coeffs=np.conj(self.coeffs))
        return HamiltonianFunction.sampled(self.grid, np.conj(self.samples))

    # -- evaluation ---------------------------------------------------------
    def __call__(self, q, p):
        if not self.is_quadratic:
            raise HamiltonianError("sampled Hamiltonians are only defined on their grid")
        a, b, c, d, e, f = self.coeffs
        return a * q * q + b * p * p + c * q * p + d * q + e * p + f

    def gradient_at(self, q, p):
        if not self.is_quadratic:
            raise HamiltonianError("sampled Hamiltonians are only defined on their grid")
        a, b, c, d, e, _ = self.coeffs
        return 2 * a * q + c * p + d, 2 * b * p + c * q + e

    def _check_grid(self, grid):
        if not self.is_quadratic and grid != self.grid:
            raise GridMismatchError("sampled Hamiltonian evaluated on a foreign grid")

    def values(self, grid):
        self._check_grid(grid)
        if self.is_quadratic:
            return self(grid.Q, grid.P) + np.zeros(grid.shape)
        return self.samples

    def gradient(self, grid):
        """``(d_q H, d_p H)`` on the grid nodes."""
        self._check_grid(grid)
        if self.is_quadratic:
            hq, hp = self.gradient_at(grid.Q, grid.P)
            z = np.zeros(grid.shape)
            return hq + z, hp + z
        return grid.gradient(self.samples)

    def lagrangian(self, grid):
        """``p d_p H - H``, the phase generator of the prequantum operator."""
        _, hp = self.gradient(grid)
        return grid.P * hp - self.values(grid)

    def max_speed(self, grid):
        """``max |X_H|`` over the nodes."""
        hq, hp = self.gradient(grid)
        return float(np.max(np.sqrt(np.abs(hq) ** 2 + np.abs(hp) ** 2)))

    # -- exact flow (quadratic, real) ---------------------------------------
    def _require_real_quadratic(self):
        if not self.is_quadratic:
            raise HamiltonianError("exact flow needs a quadratic Hamiltonian")
        if not self.is_real:
            raise HamiltonianError("exact flow needs real coefficients")
        return self.coeffs.real

    def flow_generator(self):
        """3x3 matrix G with ``d/dt (q, p, 1) = G (q, p, 1)``."""
        a, b, c, d, e, _ = self._require_real_quadratic()
        return np.array([[c, 2 * b, e], [-2 * a, -c, -d], [0.0, 0.0, 0.0]])

    def flow(self, t):
        """Affine Hamiltonian flow map at time ``t`` as a 3x3 matrix."""
        return expm(self.flow_generator() * t)

    def lagrangian_form(self):
        """Symmetric Q with ``L(q, p) = w^T Q w``, ``w = (q, p, 1)``."""
        a, b, _, d, _, f = self._require_real_quadratic()
        # L = p H_p - H = b p^2 - a q^2 - d q - f
        return np.array([[-a, 0.0, -d / 2], [0.0, b, 0.0], [-d / 2, 0.0, -f]])


class HybridHamiltonian:
    """Hermitian n x n matrix of phase-space functions.

    ``commuting`` holds ``(H0, HI, Sigma, eigvals, eigvecs)`` when the matrix
    has the form ``H0 * 1 + HI * Sigma`` with Sigma a constant Hermitian
    matrix; solvers then evolve the Sigma eigen-channels independently.
    """

    def __init__(self, entries, commuting=None):
        n = len(entries)
        if n == 0 or any(len(row) != n for row in entries):
            raise HamiltonianError("entries must form a square matrix")
        self.entries = [[e if isinstance(e, HamiltonianFunction) else HamiltonianFunction.constant(e)
                         for e in row] for row in entries]
        self.n = n
        self.commuting = commuting
        self._cache = {}
        for j in range(n):
            for k in range(j, n):
                a, b = self.entries[j][k], self.entries[k][j]
                if a.is_quadratic and b.is_quadratic:
                    if np.max(np.abs(a.coeffs - np.conj(b.coeffs))) > 1e-12:
                        raise HamiltonianError(f"entries ({j},{k}) and ({k},{j}) are not conjugate")

    @classmethod
    def scalar(cls, H):
        return cls([[H]])

    @classmethod
    def from_commuting(cls, H0, HI, sigma):
        """``H0 * 1 + HI * sigma`` with a constant Hermitian ``sigma``."""
        sigma = np.asarray(sigma, dtype=complex)
        n = sigma.shape[0]
        if sigma.shape != (n, n) or np.max(np.abs(sigma - sigma.conj().T)) > 1e-12:
            raise HamiltonianError("sigma must be a square Hermitian matrix")
        lam, U = np.linalg.eigh(sigma)
        if np.max(np.abs(U @ np.diag(lam) @ U.conj().T - sigma)) > 1e-12:
            raise HamiltonianError("sigma eigendecomposition is inaccurate")
        entries = [[H0 * (1.0 if j == k else 0.0) + HI * sigma[j, k] for k in range(n)]
                   for j in range(n)]
        return cls(entries, commuting=(H0, HI, sigma, lam, U))

    @classmethod
    def pauli(cls, h0=None, hx=None, hy=None, hz=None):
        """``h0 * 1 + hx sx + hy sy + hz sz`` for phase-space functions hi."""
        zero = HamiltonianFunction.constant(0.0)
        h0, hx, hy, hz = (h if h is not None else zero for h in (h0, hx, hy, hz))
        entries = [[h0 + hz, hx + hy * (-1j)], [hx + hy * 1j, h0 - hz]]
        return cls(entries)

    @property
    def is_commuting(self):
        return self.commuting is not None

    def entry_list(self):
        return [e for row in self.entries for e in row]

    @property
    def is_quadratic(self):
        return all(e.is_quadratic for e in self.entry_list())

    def channels(self):
        """Scalar channel Hamiltonians ``H0 + lambda_j HI`` in the Sigma eigenbasis."""
        if not self.is_commuting:
            raise HamiltonianError("Hamiltonian has no commuting (diagonal-basis) structure")
        H0, HI, _, lam, _ = self.commuting
        return [H0 + HI * float(l) for l in lam]

    def arrays(self, grid):
        """``(H, d_q H, d_p H, L)`` each shaped ``(n, n, nq, np)``; cached per grid."""
        if grid in self._cache:
            return self._cache[grid]
        n = self.n
        H = np.zeros((n, n) + grid.shape, dtype=complex)
        Hq = np.zeros_like(H)
        Hp = np.zeros_like(H)
        for j in range(n):
            for k in range(n):
                e = self.entries[j][k]
                H[j, k] = e.values(grid)
                Hq[j, k], Hp[j, k] = e.gradient(grid)
        herm = np.max(np.abs(H - np.conj(np.swapaxes(H, 0, 1)))) if n > 1 else \
            np.max(np.abs(H.imag))
        if herm > 1e-12:
            raise HamiltonianError(f"Hamiltonian is not Hermitian on the grid (defect {herm:.2e})")
        L = grid.P * Hp - H
        out = (H, Hq, Hp, L)
        self._cache[grid] = out
        return out

    def max_speed(self, grid):
        _, Hq, Hp, _ = self.arrays(grid)
        return float(np.max(np.sqrt(np.abs(Hq) ** 2 + np.abs(Hp) ** 2)))

    def at(self, q, p):
        """Matrix value and gradients at one phase-space point (quadratic entries)."""
        n = self.n
        H = np.empty((n, n), dtype=complex)
        Hq = np.empty_like(H)
        Hp = np.empty_like(H)
        for j in range(n):
            for k in range(n):
                e = self.entries[j][k]
                H[j, k] = e(q, p)
                Hq[j, k], Hp[j, k] = e.gradient_at(q, p)
        return H, Hq, Hp
