import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aclab.experiments import concentric_pair
from aclab.field import ScalarField2D
from aclab.geometry import (
    InterfaceCurve,
    curvature_B,
    curvature_H_and_tangential,
    curvature_terms,
    distance_comparison_check,
    extract_levelset,
    fermi_metric,
    max_B,
    nearest_points,
    read_curves_csv,
    signed_distance,
    write_curves_csv,
)

SQRT2 = math.sqrt(2.0)
EPS = 0.05


def tilted_profile(angle, h=EPS / 10):
    n = (-math.sin(angle), math.cos(angle))
    return ScalarField2D.from_function(
        lambda X, Y: np.tanh((n[0] * X + n[1] * Y) / (SQRT2 * EPS)), (-0.5, 0.5), (-0.5, 0.5), h, EPS
    )


def radial(R=0.5, h=EPS / 10):
    return ScalarField2D.from_function(
        lambda X, Y: np.tanh((np.hypot(X, Y) - R) / (SQRT2 * EPS)), (-1, 1), (-1, 1), h, EPS
    )


def test_flat_profile_level_set_is_midline():
    h = EPS / 10
    f = ScalarField2D.from_function(lambda X, Y: np.tanh(Y / (SQRT2 * EPS)), (0, 1), (-0.5, 0.5), h, EPS, periodic_x=True)
    ls = extract_levelset(f, 0.0)
    assert len(ls) == 1
    c = ls[0]
    assert c.is_graph and np.max(np.abs(c.y)) <= h
    assert c.x[0] == pytest.approx(0.0) and c.x[-1] == pytest.approx(1.0)


def test_saddle_level_set_splits_into_two_curves():
    h = 2 / 401
    f = ScalarField2D.from_function(
        lambda X, Y: np.tanh(X / (SQRT2 * EPS)) * np.tanh(Y / (SQRT2 * EPS)), (-1, 1), (-1, 1), h, EPS
    )
    ls = extract_levelset(f, 0.0)
    assert len(ls) == 2 and ls.crossing_cells == 1
    for c in ls:
        assert c.is_simple()
        assert np.min(np.hypot(c.x, c.y)) <= h
        ends = c.points[[0, -1]]
        assert np.allclose(np.max(np.abs(ends), axis=1), 1.0)


def test_constant_field_has_empty_level_set():
    f = ScalarField2D.from_function(lambda X, Y: 0.5 + 0 * X, (0, 1), (0, 1), 0.1, 0.1)
    assert len(extract_levelset(f, 0.0)) == 0


def test_circle_level_set_is_closed():
    ls = extract_levelset(radial())
    assert len(ls) == 1 and ls[0].closed
    r = np.hypot(ls[0].x, ls[0].y)
    assert np.max(np.abs(r - 0.5)) <= EPS / 10


def test_curves_csv_round_trip(tmp_path):
    ls = extract_levelset(radial())
    write_curves_csv(ls, tmp_path / "c.csv")
    back = read_curves_csv(tmp_path / "c.csv")
    assert len(back) == 1 and np.allclose(back[0].points, ls[0].points)


@pytest.mark.parametrize("angle", [0.0, 0.3, 0.9])
def test_B_vanishes_for_tilted_profiles(angle):
    f = tilted_profile(angle)
    assert max_B(f, 0.5, f.bounds.shrink(0.1)) <= 1e-4
    assert curvature_B(f, (0.0, 0.0), 0.1) <= 1e-4


def test_B_and_H_for_radial_field():
    f = radial()
    R = 0.5
    assert curvature_B(f, (R, 0.0), 0.1) == pytest.approx(1 / R, rel=0.05)
    H, tang = curvature_H_and_tangential(f, (R * math.cos(0.3), R * math.sin(0.3)))
    assert H == pytest.approx(1 / R, rel=0.05)
    assert abs(tang) <= 1e-4


def test_curvature_B_domain_and_degenerate_gradient():
    f = tilted_profile(0.0)
    y = SQRT2 * EPS * math.atanh(0.97)
    with pytest.raises(ValueError):
        curvature_B(f, (0.0, y), 0.1)
    flat = ScalarField2D.from_function(lambda X, Y: 0 * X, (0, 1), (0, 1), 0.05, EPS)
    assert math.isnan(curvature_B(flat, (0.5, 0.5), 0.1))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_B_identity_holds_algebraically(seed):
    rng = np.random.default_rng(seed)
    k = rng.uniform(-3, 3, size=(3, 2))
    f = ScalarField2D.from_function(
        lambda X, Y: X + 0.3 * Y + sum(0.2 * np.sin(a * X + b * Y) for a, b in k), (-1, 1), (-1, 1), 0.02, 0.5
    )
    x, y = rng.uniform(-0.8, 0.8, size=(2, 50))
    ct = curvature_terms(f, x, y)
    ok = ct.grad > 0.1
    assert np.allclose(ct.B[ok] ** 2, ct.H[ok] ** 2 + ct.tangential[ok] ** 2, rtol=1e-8, atol=1e-10)


def test_signed_distance_flat_line():
    c = InterfaceCurve.from_graph(np.linspace(-1, 1, 201), np.zeros(201))
    z, foot = signed_distance(c, (0.3, 0.2))
    assert z == pytest.approx(0.2, abs=1e-14) and foot == pytest.approx(0.3, abs=1e-14)
    assert signed_distance(c, (0.3, -0.2))[0] == pytest.approx(-0.2, abs=1e-14)
    assert abs(signed_distance(c, (0.37, 0.0))[0]) <= 1e-12


def test_signed_distance_circle_arc():
    R, n = 1.0, 2001
    th = np.linspace(1.1 * np.pi, 1.9 * np.pi, n)
    arc = InterfaceCurve(np.column_stack([R * np.cos(th), R * np.sin(th)]))
    chord_err = R * (1 - math.cos(0.4 * np.pi / (n - 1)))
    for d in (0.1, -0.2):
        z, _ = signed_distance(arc, (0.0, -(R + d)))
        assert abs(abs(z) - abs(d)) <= chord_err + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nearest_points_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(-2, 2, 400)
    c = InterfaceCurve.from_graph(x, 0.3 * np.sin(rng.uniform(1, 4) * x) + rng.uniform(-0.2, 0.2) * x**2)
    pts = rng.uniform([-2, -1.5], [2, 1.5], size=(200, 2))
    got = nearest_points(c, pts)
    a, d = c.points[:-1], np.diff(c.points, axis=0)
    tau = np.clip(np.einsum("pij,ij->pi", pts[:, None, :] - a[None], d) / np.einsum("ij,ij->i", d, d), 0, 1)
    dist = np.linalg.norm(pts[:, None, :] - (a[None] + tau[..., None] * d[None]), axis=2).min(axis=1)
    assert np.allclose(np.abs(got.z), dist, atol=1e-12)


def test_parallel_lines_comparison_is_exact():
    x = np.linspace(-5, 5, 101)
    ca = InterfaceCurve.from_graph(x, np.zeros_like(x))
    cb = InterfaceCurve.from_graph(x, np.full_like(x, 1.5))
    rep = distance_comparison_check(ca, cb, (0.7, 0.4), 0.05)
    assert max(rep.residuals.values()) <= 1e-12
    assert rep.residuals["normal mismatch"] == 0.0
    assert not rep.flagged


def test_concentric_circles_comparison_bounded():
    for eps in (0.1, 0.05, 0.025):
        ca, cb = concentric_pair(eps)
        pt = (1.0, 0.5 * (ca(1.0) + cb(1.0)))
        rep = distance_comparison_check(ca, cb, pt, eps)
        assert max(rep.normalized.values()) <= 1e-6


def test_comparison_flags_far_points():
    x = np.linspace(-5, 5, 101)
    ca = InterfaceCurve.from_graph(x, np.zeros_like(x))
    cb = InterfaceCurve.from_graph(x, np.full_like(x, 1.0))
    assert distance_comparison_check(ca, cb, (0.0, 50.0), 0.1, K=2).flagged


def test_fermi_metric():
    x = np.linspace(-1, 1, 201)
    line = InterfaceCurve.from_graph(x, 0.2 * x)
    assert fermi_metric(line, 0.3, 0.4) == pytest.approx(fermi_metric(line, 0.3, 0.0), rel=1e-12)
    R = 2.0
    xs = np.linspace(-1, 1, 4001)
    cap = InterfaceCurve.from_graph(xs, np.sqrt(R**2 - xs**2))  # concave down, kappa = -1/R
    lam0 = fermi_metric(cap, 0.1, 0.0)
    for z in (0.2, -0.3):
        assert fermi_metric(cap, 0.1, z) / lam0 == pytest.approx((1 + z / R) ** 2, rel=0.01)
    with pytest.raises(ValueError):
        fermi_metric(cap, 0.1, 0.95 * R)
