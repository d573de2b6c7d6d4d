import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aclab.toda import (
    TodaState,
    cosh_solution,
    default_coefficients,
    hamiltonian,
    integrate,
    momentum,
    project_to_interfaces,
    solve_symmetric_bvp,
    toda_rhs,
)

SQRT2 = math.sqrt(2.0)


@pytest.fixture(scope="module")
def coeffs(profile):
    return default_coefficients(profile)


def test_default_coefficients(profile, coeffs):
    expected = 4 * 2.0**2 / (2 * SQRT2 / 3)
    assert coeffs[0] == pytest.approx(expected, rel=1e-6)
    assert coeffs[1] == pytest.approx(expected, rel=1e-6)


def test_rhs_signs_and_single_layer():
    assert np.all(toda_rhs(np.array([0.3]), 1.0, 2.0) == 0.0)
    w = 0.7
    acc = toda_rhs(np.array([0.0, w]), 3.0, 5.0)
    assert acc[0] == pytest.approx(-5.0 * math.exp(-SQRT2 * w))
    assert acc[1] == pytest.approx(3.0 * math.exp(-SQRT2 * w))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6), st.floats(-100, 100))
def test_rhs_translation_invariance_and_telescoping(f, c):
    f = np.sort(np.array(f))
    a = toda_rhs(f, 2.0, 2.0)
    assert np.allclose(toda_rhs(f + c, 2.0, 2.0), a, rtol=1e-14, atol=1e-14 * max(1.0, np.max(np.abs(a))))
    assert abs(np.sum(a)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


def test_cosh_closed_form(coeffs):
    A1, A2 = coeffs
    s = solve_symmetric_bvp(2, 3.0, 20.0, A1, A2, step=1e-3)
    w, wp = cosh_solution(s.y, 3.0, A1, A2)
    assert np.max(np.abs(s.gaps[:, 0] - w)) <= 1e-6
    assert np.max(np.abs(np.diff(s.fp, axis=1)[:, 0] - wp)) <= 1e-6


def test_conservation_and_order_two(coeffs):
    A1, A2 = coeffs
    drift = []
    for step in (1e-3, 5e-4):
        s = solve_symmetric_bvp(2, 3.0, 20.0, A1, A2, step=step)
        E, P = hamiltonian(s), momentum(s)
        drift.append(np.max(np.abs(E - E[0])))
        assert np.max(np.abs(P - P[0])) <= 1e-10
    assert drift[0] <= 1e-8
    assert drift[1] / drift[0] == pytest.approx(0.25, abs=0.05)


def test_wide_gap_decouples(coeffs):
    A1, A2 = coeffs
    s = solve_symmetric_bvp(2, 40.0, 10.0, A1, A2)
    assert np.max(np.abs(toda_rhs(s.f, A1, A2))) <= 1e-12
    assert np.max(np.abs(s.fp)) <= 1e-11


def test_three_layers_symmetric(coeffs):
    A1, A2 = coeffs
    s = solve_symmetric_bvp(3, 3.0, 10.0, A1, A2)
    assert np.max(np.abs(s.f[:, 1])) <= 1e-12
    assert np.max(np.abs(s.gaps[:, 0] - s.gaps[:, 1])) <= 1e-12


def test_ordering_preserved_and_collision_guard():
    s = integrate(TodaState.initial([0.0, 1.0, 2.5], [0.3, -0.2, 0.1], 1.0, 1.0), 10.0, 1e-3)
    assert np.all(np.diff(s.f, axis=1) > 0)
    crash = integrate(TodaState.initial([0.0, 0.5], [20.0, -20.0], 1e-6, 1e-6), 1.0, 1e-3)
    assert crash.flagged and "collision" in crash.note
    assert np.all(np.diff(crash.f, axis=1) > 0)


def test_state_validation():
    with pytest.raises(ValueError):
        TodaState.initial([1.0, 0.0], [0.0, 0.0], 1.0, 1.0)
    with pytest.raises(ValueError):
        TodaState.initial([0.0, 1.0], [0.0, 0.0], -1.0, 1.0)
    with pytest.raises(ValueError):
        solve_symmetric_bvp(4, 3.0, 10.0, 1.0, 1.0)


def test_projected_gap_scale(coeffs):
    A1, A2 = coeffs
    eps, b = 0.05, 3.0
    s = solve_symmetric_bvp(2, b, 4.0, A1, A2)
    lo, hi = project_to_interfaces(s, eps)
    gap = np.min(hi.y - lo.y)
    assert gap == pytest.approx(eps * (SQRT2 / 2) * abs(math.log(eps)) + eps * b, rel=1e-12)


def test_flat_state_projects_to_parallel_lines():
    s = TodaState(np.linspace(-1, 1, 5), np.tile([0.0, 30.0], (5, 1)), np.zeros((5, 2)), 1.0, 1.0)
    lo, hi = project_to_interfaces(s, 0.1)
    assert np.allclose(hi.y - lo.y, 0.1 * (30.0 + SQRT2 / 2 * abs(math.log(0.1))))
    assert np.allclose(np.diff(lo.y), 0.0)


def test_trajectory_csv(coeffs, tmp_path):
    s = solve_symmetric_bvp(2, 3.0, 1.0, *coeffs, step=0.01)
    s.to_csv(tmp_path / "t.csv")
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "y,f_1,f_2" and len(rows) == s.y.size + 1
