import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from kvhsim.grid import make_grid
from kvhsim.koopman import momentum_map_density
from kvhsim.states import (GaussianState, HybridState, MatchedState, matched_density, normalized,
                           smooth_window, window_radii)

q, p = sp.symbols("q p", real=True)


def test_matched_state_momentum_map_symbolic():
    """The unwindowed matched state has momentum-map density exp(-r^2)/pi."""
    u = q**2 + p**2
    D = (1 - (1 + u) * sp.exp(-u)) / (sp.pi * u**2)
    S = q * p / 2
    rho = D + sp.diff(p * D, p) + sp.diff(D, q) * sp.diff(S, p) - sp.diff(D, p) * sp.diff(S, q)
    diff = rho - sp.exp(-u) / sp.pi
    pts = [("3/10", "1/10"), ("6/5", "-7/10"), ("-5/2", "19/10"), ("1/20", "33/10")]
    for qq, pp in pts:
        val = diff.subs({q: sp.Rational(qq), p: sp.Rational(pp)})
        assert abs(float(sp.N(val, 40))) < 1e-25


def test_matched_density_series_branch():
    r2 = np.array([1e-6, 5e-4, 9.99e-4, 1.001e-3, 0.5])
    u = sp.symbols("u")
    exact = [(1 - (1 + u) * sp.exp(-u)) / (sp.pi * u**2)]
    want = [float(exact[0].subs(u, sp.Float(x, 40)).evalf(30)) for x in r2]
    assert np.allclose(matched_density(r2), want, rtol=1e-9)


def test_matched_state_density_on_grid():
    g = make_grid(128, 128, (-16, 16))
    r1, r2 = window_radii(g, inner=0.5)
    chi = normalized(MatchedState(r1, r2), g)(g.Q, g.P)
    rho = momentum_map_density(g, chi)
    core = np.hypot(g.Q, g.P) < 3
    assert np.max(np.abs(rho - np.exp(-g.Q**2 - g.P**2) / np.pi)[core]) < 0.015
    assert g.integrate(rho) == pytest.approx(1.0, abs=1e-12)


def test_window():
    r = np.linspace(0, 10, 1001)
    w = smooth_window(r, 4.0, 8.0)
    assert np.all(w[r <= 4] == 1.0) and np.all(w[r >= 8] == 0.0)
    assert np.all(np.diff(w) <= 0)
    assert smooth_window(6.0, 4.0, 8.0) == pytest.approx(0.5)


def test_window_radii():
    g = make_grid(64, 64, (-10, 10))
    r1, r2 = window_radii(g, stretch=2.0, inner=0.5, outer=0.8)
    assert r2 == pytest.approx(4.0) and r1 == pytest.approx(2.0)


def test_gaussian_is_root_of_ground_density(grid64):
    X = GaussianState()(grid64.Q, grid64.P)
    assert np.allclose(np.abs(X) ** 2, np.exp(-grid64.Q**2 - grid64.P**2) / np.pi)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 2.0))
def test_normalized(q0, p0, w):
    g = make_grid(64, 64, (-12, 12))
    s = normalized(GaussianState(q0, p0, w, alpha=0.3), g)
    assert g.norm2(s(g.Q, g.P)) == pytest.approx(1.0, abs=1e-12)


def test_hybrid_state_shape(grid64):
    s = HybridState(GaussianState(), (1.0, 1j))
    U = s(grid64.Q, grid64.P)
    assert U.shape == (2, 64, 64) and s.n == 2
    assert np.allclose(U[1], 1j * U[0])
