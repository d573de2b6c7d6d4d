import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aclab.ansatz import build_ansatz
from aclab.experiments import flat_state, saddle_state
from aclab.field import Rect, ScalarField2D
from aclab.geometry import InterfaceCurve
from aclab.profile1d import cutoff_profile
from aclab.spectrum import (
    assemble_linearized,
    count_nodal_domains,
    lowest_eigenpairs,
    morse_index,
    reduced_stability_check,
    stability_Q,
)

EPS = 0.1


@pytest.fixture(scope="module")
def ones():
    return ScalarField2D.from_function(lambda X, Y: 1.0 + 0 * X, (-1, 1), (-1, 1), 0.025, EPS)


@pytest.fixture(scope="module")
def saddle(quartic):
    u, rep = saddle_state(quartic, EPS, 2 * round(10 / EPS) + 1)
    assert rep.converged
    return u


def test_constant_well_state_spectrum(quartic, ones):
    L = assemble_linearized(ones, quartic, Rect(-0.5, 0.5, -0.5, 0.5))
    rep = lowest_eigenpairs(L, 3)
    nr, nc = L.shape
    hx, hy = ones.hx, ones.hy
    # discrete Dirichlet Laplacian: 4/h^2 sin^2(k pi / (2 (n + 1)))
    lap = lambda k, n, h: 4 / h**2 * math.sin(k * math.pi / (2 * (n + 1))) ** 2
    lowest = 2 / EPS + EPS * (lap(1, nc, hx) + lap(1, nr, hy))
    assert rep.eigenvalues[0] == pytest.approx(lowest, rel=1e-10)
    second = 2 / EPS + EPS * (lap(2, nc, hx) + lap(1, nr, hy))
    assert rep.eigenvalues[1] == pytest.approx(second, rel=1e-10)
    assert rep.morse_index == 0 and not rep.flagged
    assert np.all(rep.residuals <= 1e-8)


def test_operator_is_symmetric(quartic, saddle):
    L = assemble_linearized(saddle, quartic, Rect(-0.5, 0.5, -0.5, 0.5))
    d = L.matrix - L.matrix.T
    assert (abs(d).max() if d.nnz else 0.0) <= 1e-12 * abs(L.matrix).max()


def test_embedding_round_trip(quartic, saddle):
    L = assemble_linearized(saddle, quartic, Rect(-0.5, 0.5, -0.5, 0.5))
    v = np.random.default_rng(0).standard_normal(L.size)
    assert np.array_equal(L.from_grid(L.to_grid(v)), v)


def test_flat_layer_is_stable(quartic):
    u, rep = flat_state(quartic, EPS, EPS / 10)
    assert rep.converged
    assert morse_index(u, quartic, u.bounds.shrink(0.3)) == 0


def test_saddle_has_one_unstable_direction(quartic, saddle):
    L = assemble_linearized(saddle, quartic, Rect(-0.5, 0.5, -0.5, 0.5))
    rep = lowest_eigenpairs(L, 4)
    assert rep.morse_index == 1
    assert rep.eigenvalues[0] < -rep.tol_neg < rep.eigenvalues[1]
    phi = L.to_grid(rep.eigenvectors[:, 0])
    Q = stability_Q(saddle, quartic, phi, L.window)
    assert Q < 0
    assert Q == pytest.approx(rep.eigenvalues[0] * saddle.hx * saddle.hy, rel=1e-8)


def test_window_too_small(quartic, saddle):
    with pytest.raises(ValueError):
        assemble_linearized(saddle, quartic, Rect(-0.02, 0.02, -0.02, 0.02))
    with pytest.raises(ValueError):
        lowest_eigenpairs(assemble_linearized(saddle, quartic, Rect(-0.5, 0.5, -0.5, 0.5)), 11)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_quadratic_form_matches_operator(quartic, saddle, seed):
    L = assemble_linearized(saddle, quartic, Rect(-0.5, 0.5, -0.5, 0.5))
    v = np.random.default_rng(seed).standard_normal(L.size)
    Q = stability_Q(saddle, quartic, L.to_grid(v), L.window)
    assert Q == pytest.approx(float(v @ (L.matrix @ v)) * saddle.hx * saddle.hy, rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_quadratic_form_bounded_below_at_the_well(quartic, ones, seed):
    L = assemble_linearized(ones, quartic, Rect(-0.5, 0.5, -0.5, 0.5))
    phi = L.to_grid(np.random.default_rng(seed).standard_normal(L.size))
    Q = stability_Q(ones, quartic, phi)
    assert Q >= (2 / EPS) * np.sum(phi**2) * ones.hx * ones.hy * (1 - 1e-12)


def test_quadratic_form_support_checks(quartic, ones):
    phi = np.zeros(ones.shape)
    phi[0, 5] = 1.0
    with pytest.raises(ValueError):
        stability_Q(ones, quartic, phi)
    phi = np.zeros(ones.shape)
    phi[ones.ny // 2, 2] = 1.0
    with pytest.raises(ValueError):
        stability_Q(ones, quartic, phi, Rect(-0.5, 0.5, -0.5, 0.5))
    with pytest.raises(ValueError):
        stability_Q(ones, quartic, np.zeros((3, 3)))


@pytest.fixture(scope="module")
def pair(long_profile):
    xs = np.linspace(-0.6, 0.6, 121)
    grid = ScalarField2D.from_function(lambda X, Y: 0 * X, (-0.5, 0.5), (-1, 1), EPS / 10, EPS)
    ifs = [InterfaceCurve.from_graph(xs, np.full_like(xs, y0)) for y0 in (-0.25, 0.25)]
    return build_ansatz(ifs, None, cutoff_profile(long_profile, EPS), grid)


def test_reduced_stability_flat_pair(long_profile, pair):
    eta = lambda x: np.cos(np.pi * x) ** 2
    r = reduced_stability_check(pair, long_profile, eta, x1=np.linspace(-0.5, 0.5, 2001))
    xs = np.linspace(-0.5, 0.5, 2001)
    # each layer feels exp(-sqrt2 * 0.5 / eps) from the other
    expected = 2 * math.exp(-math.sqrt(2) * 0.5 / EPS) * np.trapezoid(eta(xs) ** 2, xs) / EPS
    assert r.lhs == pytest.approx(expected, rel=1e-6)
    assert r.gradient_term == pytest.approx(EPS * np.pi**2 / 2, rel=1e-4)
    assert not r.flagged
    r2 = reduced_stability_check(pair, long_profile, lambda x: 2 * eta(x), x1=xs, morse=1)
    assert r2.ratio == pytest.approx(r.ratio, rel=1e-12)
    assert r2.flagged


def test_reduced_stability_single_layer(long_profile):
    xs = np.linspace(-0.6, 0.6, 121)
    grid = ScalarField2D.from_function(lambda X, Y: 0 * X, (-0.5, 0.5), (-1, 1), EPS / 10, EPS)
    a = build_ansatz([InterfaceCurve.from_graph(xs, 0 * xs)], None, cutoff_profile(long_profile, EPS), grid)
    assert reduced_stability_check(a, long_profile, lambda x: 1 + 0 * x).lhs == 0.0


def test_nodal_domains(saddle):
    assert count_nodal_domains(saddle) == 4
    one = ScalarField2D.from_function(lambda X, Y: np.tanh(Y / 0.1), (-1, 1), (-1, 1), 0.05, EPS)
    assert count_nodal_domains(one) == 2
