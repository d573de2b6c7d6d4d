import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aclab.ansatz import (
    blow_down,
    blow_up_rescale,
    build_ansatz,
    error_field,
    fit_shifts,
    min_vertical_gap,
    parity_constant,
    separation_scan,
    toda_residual,
)
from aclab.field import Rect, ScalarField2D, ac_residual
from aclab.geometry import InterfaceCurve
from aclab.profile1d import cutoff_profile
from aclab.toda import default_coefficients, solve_symmetric_bvp, toda_rhs

SQRT2 = math.sqrt(2.0)
EPS = 0.1
XS = np.linspace(-0.6, 0.6, 121)


@pytest.fixture(scope="module")
def cp(long_profile):
    return cutoff_profile(long_profile, EPS)


@pytest.fixture(scope="module")
def grid():
    return ScalarField2D.from_function(lambda X, Y: 0 * X, (-0.5, 0.5), (-1, 1), EPS / 10, EPS)


def flat(y0):
    return InterfaceCurve.from_graph(XS, np.full_like(XS, y0))


def test_parity_constant():
    assert parity_constant(1) == 0.0
    assert parity_constant(2) == -1.0
    assert parity_constant(3) == 0.0
    assert parity_constant(2, sign=-1) == 1.0


def test_single_flat_layer_is_the_cutoff_profile(cp, grid):
    a = build_ansatz([flat(0.0)], None, cp, grid)
    Y = grid.mesh()[1]
    expected = cp.evaluate((Y / EPS).ravel())[0].reshape(Y.shape)
    assert np.max(np.abs(a.g_star.values - expected)) <= 1e-15


def test_two_layers_reach_minus_one_outside(cp, grid):
    a = build_ansatz([flat(-0.5), flat(0.5)], None, cp, grid)
    y = grid.y[[0, grid.ny // 2, -1]]
    g = lambda t: cp.evaluate(np.atleast_1d(t))[0]
    # sum of alternating profiles plus the parity constant -1
    expected = g((y + 0.5) / EPS) - g((y - 0.5) / EPS) - 1.0
    got = a.g_star.values[[0, grid.ny // 2, -1]]
    assert np.max(np.abs(got - expected[:, None])) <= 1e-14


def test_rejects_bad_interfaces(cp, grid):
    with pytest.raises(ValueError):
        build_ansatz([flat(0.5), flat(-0.5)], None, cp, grid)
    with pytest.raises(ValueError):
        build_ansatz([flat(0.0), flat(0.0)], None, cp, grid)
    short = InterfaceCurve.from_graph(np.linspace(-0.2, 0.2, 11), np.zeros(11))
    with pytest.raises(ValueError):
        build_ansatz([short], None, cp, grid)


def test_residual_decays_with_separation(quartic, cp, grid):
    base = np.abs(ac_residual(build_ansatz([flat(0.0)], None, cp, grid).g_star, quartic).values[10:-10, 10:-10]).max()
    res = []
    for gap in (0.5, 0.75, 1.0):
        a = build_ansatz([flat(-gap / 2), flat(gap / 2)], None, cp, grid)
        res.append(np.abs(ac_residual(a.g_star, quartic).values[10:-10, 10:-10]).max())
    assert res[0] > res[1] > res[2]
    assert res[2] <= 2 * base


def test_round_trip_recovers_planted_shifts(cp, grid):
    ifs = [flat(-0.3), flat(0.3)]
    h0 = np.array([0.02 * EPS * np.sin(3 * grid.x), -0.01 * EPS * np.cos(2 * grid.x)])
    a = build_ansatz(ifs, h0, cp, grid)
    fit = fit_shifts(a.g_star, ifs, cp)
    assert fit.converged
    assert np.max(np.abs(fit.shifts - h0)) <= 1e-8
    assert fit.defect <= 1e-8


def test_profile_field_needs_no_shift(cp, grid):
    u = grid.with_values(np.tanh(grid.mesh()[1] / (SQRT2 * EPS)))
    fit = fit_shifts(u, [flat(0.0)], cp)
    assert np.max(np.abs(fit.shifts)) <= 1e-8


@pytest.mark.parametrize("delta", [1e-3, 1e-2])
def test_derivative_perturbation_is_a_shift(cp, grid, delta):
    a = build_ansatz([flat(0.0)], None, cp, grid)
    Y = grid.mesh()[1]
    gp = cp.evaluate((Y / EPS).ravel())[1].reshape(Y.shape)
    fit = fit_shifts(a.g_star.with_values(a.g_star.values + delta * gp), [flat(0.0)], cp)
    # g(t - h/eps) ~ g - (h/eps) g', so adding delta g' is the shift h = -eps delta
    assert np.mean(fit.shifts) == pytest.approx(-EPS * delta, rel=0.02)


def test_error_field_of_the_ansatz_is_zero(cp, grid):
    a = build_ansatz([flat(-0.3), flat(0.3)], None, cp, grid)
    rep = error_field(a.g_star, a)
    assert rep.sup == 0.0 and rep.max_defect == 0.0


def test_toda_residual_single_flat_layer(long_profile, cp, grid):
    r = toda_residual(build_ansatz([flat(0.0)], None, cp, grid), long_profile)
    assert np.all(r.lhs == 0.0) and np.all(r.rhs == 0.0)


def test_toda_rhs_follows_exponential_law(long_profile, cp, grid):
    rhs = []
    for gap in (0.5, 1.0):
        r = toda_residual(build_ansatz([flat(-gap / 2), flat(gap / 2)], None, cp, grid), long_profile)
        rhs.append(r.rhs)
        assert np.all(r.rhs[0] < 0) and np.all(r.rhs[1] > 0)
    ratio = rhs[1][1].mean() / rhs[0][1].mean()
    assert ratio == pytest.approx(math.exp(-SQRT2 * 0.5 / EPS), rel=0.1)


def test_toda_residual_csv(long_profile, cp, grid, tmp_path):
    r = toda_residual(build_ansatz([flat(-0.3), flat(0.3)], None, cp, grid), long_profile)
    r.to_csv(tmp_path / "t.csv")
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 1 + 2 * r.x1.size


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.2), st.integers(1, 3), st.integers(0, 1000))
def test_blow_up_round_trip(eps, alpha0, seed):
    rng = np.random.default_rng(seed)
    y = np.linspace(-3, 3, 61)
    F = np.cumsum(rng.uniform(0.5, 1.5, size=(2, 1)), axis=0) + 0.1 * np.sin(y)[None, :]
    curves = blow_down(y, F, eps, alpha0)
    y2, F2 = blow_up_rescale(curves, eps, alpha0, y)
    assert np.max(np.abs(F2 - F)) <= 1e-12 * max(1.0, np.max(np.abs(F)))


def test_rescaling_preserves_toda_residual(long_profile):
    A1, A2 = default_coefficients(long_profile)
    s = solve_symmetric_bvp(2, 3.0, 6.0, A1, A2, step=1e-3)
    eps = 0.05
    y, F = blow_up_rescale(blow_down(s.y, s.f.T, eps), eps, 1, s.y)
    dy = s.y[1] - s.y[0]
    res = lambda G: (G[:, 2:] - 2 * G[:, 1:-1] + G[:, :-2]) / dy**2 - toda_rhs(G.T, A1, A2).T[:, 1:-1]
    # only rounding of F, amplified by the second difference, separates the two
    rounding = 64 * np.finfo(float).eps * np.max(np.abs(F)) / dy**2
    assert np.max(np.abs(res(F) - res(s.f.T))) <= rounding
    assert np.max(np.abs(res(s.f.T))) <= 1e-5


def test_min_vertical_gap_of_parallel_lines():
    assert min_vertical_gap(flat(-0.2), flat(0.3), XS) == pytest.approx(0.5, abs=1e-15)


def test_separation_scan_needs_two_layers():
    u = ScalarField2D.from_function(lambda X, Y: np.tanh(Y / (SQRT2 * EPS)), (-0.5, 0.5), (-1, 1), EPS / 10, EPS)
    with pytest.raises(ValueError):
        separation_scan([(EPS, u), (EPS, u)], [Rect(-0.3, 0.3, -0.8, 0.8)] * 2, morse_indices=[0, 0])


def test_separation_scan_fits_planted_law():
    a_true, b_true = 0.7, 1.5
    states = []
    for eps in (0.1, 0.05, 0.025):
        gap = a_true * eps * abs(math.log(eps)) + b_true * eps
        u = ScalarField2D.from_function(
            lambda X, Y: np.tanh((Y + gap / 2) / (SQRT2 * eps)) - np.tanh((Y - gap / 2) / (SQRT2 * eps)) - 1 + 0 * X,
            (-0.5, 0.5), (-0.5, 0.5), eps / 10, eps,
        )
        states.append((eps, u))
    wins = [Rect(-0.3, 0.3, -0.4, 0.4)] * 3
    sc = separation_scan(states, wins, morse_indices=[0, 0, 0])
    assert sc.a == pytest.approx(a_true, abs=0.05)
    assert sc.b == pytest.approx(b_true, abs=0.2)
    sc2 = separation_scan(states, wins, morse_indices=[0, 1, 0])
    assert len(sc2.rows) == 2 and len(sc2.excluded) == 1
