"""Multi-layer approximations g_*, their optimal shifts, and the reduced Toda residual."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .field import Rect, ScalarField2D
from .geometry import InterfaceCurve, discrete_curvature, extract_levelset, nearest_points
from .profile1d import CutoffProfile, Profile

SQRT2 = math.sqrt(2.0)


def parity_constant(Q: int, sign: int = 1) -> float:
    """Constant making sum_a g_a + c equal -sign below the first layer."""
    return -sign * ((-1) ** Q + 1) / 2.0


def _hat(xs: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left node index and right weight of piecewise-linear interpolation on xs (clamped)."""
    q = np.clip(q, xs[0], xs[-1])
    k = np.clip(np.searchsorted(xs, q, side="right") - 1, 0, len(xs) - 2)
    w = (q - xs[k]) / (xs[k + 1] - xs[k])
    return k, w


@dataclass
class _Layer:
    d: np.ndarray  # signed distance (domain units) at grid nodes
    k: np.ndarray  # hat index of the foot abscissa
    w: np.ndarray  # hat weight of the foot abscissa
    sgn: int  # (-1)^(a-1) times the field's sign convention


@dataclass
class LayerAnsatz:
    """Composite g_* = sum_a gbar(s_a (d_a - h_a(Pi_a X)) / eps) + c on a grid.

    ``shifts[a]`` holds h_a at the grid abscissae (domain units);
    s_a = sign (-1)^(a-1) with ``sign`` = +1 when u < 0 below the first layer.
    """

    interfaces: list[InterfaceCurve]
    shifts: np.ndarray
    cutoff: CutoffProfile
    grid: ScalarField2D
    sign: int
    g_star: ScalarField2D
    layers: list[_Layer] = field(repr=False)

    @property
    def Q(self) -> int:
        return len(self.interfaces)

    @property
    def epsilon(self) -> float:
        return self.grid.epsilon

    @property
    def x1(self) -> np.ndarray:
        return self.grid.x

    def arguments(self, shifts: np.ndarray) -> list[np.ndarray]:
        """Profile-unit arguments s_a (d_a - h_a(Pi_a X)) / eps at the grid nodes."""
        out = []
        for a, L in enumerate(self.layers):
            h = shifts[a]
            hf = (1.0 - L.w) * h[L.k] + L.w * h[L.k + 1]
            out.append(L.sgn * (L.d - hf) / self.epsilon)
        return out

    def evaluate(self, shifts: np.ndarray) -> np.ndarray:
        vals = np.full(self.grid.shape, parity_constant(self.Q, self.sign))
        for t in self.arguments(shifts):
            vals += self.cutoff.evaluate(t.ravel())[0].reshape(t.shape)
        return vals

    def with_shifts(self, shifts: np.ndarray) -> "LayerAnsatz":
        shifts = np.array(shifts, dtype=float)
        return LayerAnsatz(
            self.interfaces, shifts, self.cutoff, self.grid, self.sign, self.grid.with_values(self.evaluate(shifts)).with_own_boundary(), self.layers
        )


def _check_order(interfaces: list[InterfaceCurve], xs: np.ndarray) -> float:
    for c in interfaces:
        if not c.is_graph:
            raise ValueError("interfaces must be graphs over x1")
        if c.x[0] > xs[0] + 1e-12 or c.x[-1] < xs[-1] - 1e-12:
            raise ValueError("interfaces must span the grid's x1 range")
    if len(interfaces) < 2:
        return math.inf
    F = np.array([c(xs) for c in interfaces])
    gaps = np.diff(F, axis=0)
    if np.any(gaps <= 0):
        raise ValueError("interfaces must be strictly ordered bottom to top and must not touch")
    return float(gaps.min())


def _shift_array(shifts, Q: int, xs: np.ndarray) -> np.ndarray:
    if shifts is None:
        return np.zeros((Q, xs.size))
    if callable(shifts):
        shifts = [shifts] * Q
    if isinstance(shifts, (list, tuple)) and shifts and callable(shifts[0]):
        return np.array([np.asarray(h(xs), dtype=float) * np.ones_like(xs) for h in shifts])
    arr = np.array(shifts, dtype=float)
    if arr.shape != (Q, xs.size):
        raise ValueError(f"shifts must have shape (Q, nx) = {(Q, xs.size)}")
    return arr


def build_ansatz(
    interfaces: list[InterfaceCurve],
    shifts,
    cp: CutoffProfile,
    grid: ScalarField2D,
    sign: int = 1,
) -> LayerAnsatz:
    """Evaluate g_* at the nodes of ``grid`` (its values are ignored).

    ``shifts`` is None (zero), a (Q, nx) array on the grid abscissae, or one
    callable of x1 per layer.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if not math.isclose(cp.epsilon, grid.epsilon, rel_tol=1e-12):
        raise ValueError("cutoff profile and grid use different epsilon")
    xs = grid.x
    min_gap = _check_order(interfaces, xs)
    Q = len(interfaces)
    h = _shift_array(shifts, Q, xs)
    if Q > 1 and np.max(np.abs(h)) > 0.1 * min_gap:
        raise ValueError("shifts must stay below a tenth of the smallest layer gap")
    X, Y = grid.mesh()
    pts = np.column_stack([X.ravel(), Y.ravel()])
    layers = []
    for a, c in enumerate(interfaces):
        n = nearest_points(c, pts)
        k, w = _hat(xs, n.foot[:, 0])
        layers.append(_Layer(n.z.reshape(grid.shape), k.reshape(grid.shape), w.reshape(grid.shape), sign * (-1) ** a))
    a = LayerAnsatz(list(interfaces), h, cp, grid, sign, grid, layers)
    return a.with_shifts(h)


def detect_sign(f: ScalarField2D) -> int:
    """+1 when u < 0 along the bottom row, -1 otherwise."""
    return 1 if np.median(f.values[0]) < 0 else -1


@dataclass
class ShiftFit:
    shifts: np.ndarray
    iterations: int
    converged: bool
    last_update: float
    defect: float
    flagged_columns: np.ndarray


def _orthogonality(a: LayerAnsatz, u: np.ndarray, shifts: np.ndarray):
    """Column integrals F[a, i] = sum_j (u - g_*) gbar'(t_a) hy and the pieces of their Jacobian."""
    ts = a.arguments(shifts)
    evals = [a.cutoff.evaluate(t.ravel()) for t in ts]
    g = np.full(a.grid.shape, parity_constant(a.Q, a.sign))
    for gb, _, _ in evals:
        g += gb.reshape(a.grid.shape)
    phi = u - g
    hy = a.grid.hy
    F = np.array([np.sum(phi * gp.reshape(phi.shape), axis=0) * hy for _, gp, _ in evals])
    return F, phi, evals


def _jacobian(a: LayerAnsatz, phi: np.ndarray, evals) -> sp.csr_matrix:
    """dF[a, i] / dh[b, k] with h interpolated at the feet by hat functions."""
    eps, hy = a.epsilon, a.grid.hy
    ny, nx = a.grid.shape
    Q = a.Q
    cols = np.broadcast_to(np.arange(nx), (ny, nx))
    rows_all, cols_all, vals_all = [], [], []
    for al in range(Q):
        w_al = evals[al][1].reshape(ny, nx)
        for be in range(Q):
            Lb = a.layers[be]
            gp_b = evals[be][1].reshape(ny, nx)
            # d g_b / d h_b(foot) = -s_b gbar'(t_b) / eps
            contrib = -(-Lb.sgn * gp_b / eps) * w_al * hy
            if be == al:
                # derivative of the weight gbar'(t_a): -s_a gbar''(t_a) / eps
                contrib = contrib + phi * (-Lb.sgn * evals[al][2].reshape(ny, nx) / eps) * hy
            m = contrib != 0.0
            if not np.any(m):
                continue
            r = al * nx + cols[m]
            for kk, ww in ((Lb.k[m], 1.0 - Lb.w[m]), (Lb.k[m] + 1, Lb.w[m])):
                rows_all.append(r)
                cols_all.append(be * nx + kk)
                vals_all.append(contrib[m] * ww)
    n = Q * nx
    J = sp.coo_matrix((np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))), shape=(n, n))
    return J.tocsr()


def fit_shifts(
    f: ScalarField2D,
    interfaces: list[InterfaceCurve],
    cp: CutoffProfile,
    h0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 50,
    sign: int | None = None,
) -> ShiftFit:
    """Shifts h_a (at the grid abscissae) making u - g_* orthogonal to every gbar'(t_a).

    The orthogonality integrals run down grid columns. Because h_a is read at
    the foot point of each node, neighboring columns couple; the system is
    solved by damped Newton with the exact sparse Jacobian. Iteration stops
    when the largest update falls below ``tol``. Columns whose defect stays
    above tolerance after ``max_iter`` iterations are flagged.
    """
    sign = detect_sign(f) if sign is None else sign
    a = build_ansatz(interfaces, None, cp, f, sign)
    h = np.zeros((a.Q, f.nx)) if h0 is None else np.array(h0, dtype=float)
    u = f.values
    F, phi, evals = _orthogonality(a, u, h)
    it, upd = 0, math.inf
    while it < max_iter:
        it += 1
        J = _jacobian(a, phi, evals)
        step = spla.spsolve(J.tocsc(), -F.ravel()).reshape(h.shape)
        fn = np.max(np.abs(F))
        for lam in (1.0, 0.5, 0.25, 0.125, 0.0625):
            trial = h + lam * step
            Ft, phit, evt = _orthogonality(a, u, trial)
            if np.max(np.abs(Ft)) <= fn or lam == 0.0625:
                break
        upd = float(np.max(np.abs(trial - h)))
        h, F, phi, evals = trial, Ft, phit, evt
        if upd < tol:
            break
    defect_cols = np.max(np.abs(F), axis=0) / f.epsilon
    converged = upd < tol
    flagged = np.nonzero(defect_cols > 1e-8)[0] if not converged else np.array([], dtype=int)
    return ShiftFit(h, it, converged, upd, float(defect_cols.max()), flagged)


@dataclass
class ErrorReport:
    phi: ScalarField2D
    sup: float
    sup_core: float
    orthogonality_defect: np.ndarray

    @property
    def max_defect(self) -> float:
        return float(np.max(self.orthogonality_defect))


def error_field(f: ScalarField2D, a: LayerAnsatz, b: float = 0.1) -> ErrorReport:
    """phi = u - g_*, its sup norms (whole grid and {|u| <= 1 - b}), and the
    per-column orthogonality defect max_a |F_a| / eps."""
    if not f.same_grid(a.grid):
        raise ValueError("field and ansatz live on different grids")
    phi = f.values - a.g_star.values
    core = np.abs(f.values) <= 1.0 - b
    F, _, _ = _orthogonality(a, f.values, a.shifts)
    return ErrorReport(
        f.with_values(phi),
        float(np.max(np.abs(phi))),
        float(np.max(np.abs(phi[core]))) if np.any(core) else 0.0,
        np.max(np.abs(F), axis=0) / f.epsilon,
    )


# -- reduced Toda system ---------------------------------------------------------------------


@dataclass
class TodaResidualReport:
    """Per-layer arrays over x1 in profile units: lhs = eps (H_a + h_a''),
    rhs = (4/sigma0)[A^2 e^{-sqrt2 d_{a-1}} - A^2 e^{sqrt2 d_{a+1}}]."""

    x1: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def residual(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def residual_sup(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def rhs_sup(self) -> float:
        return float(np.max(np.abs(self.rhs)))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x1", "alpha", "lhs", "rhs", "residual"])
            for al in range(self.lhs.shape[0]):
                for x, l, r in zip(self.x1, self.lhs[al], self.rhs[al]):
                    w.writerow([repr(float(x)), al + 1, repr(float(l)), repr(float(r)), repr(float(l - r))])


def _second_difference(v: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / dx**2
    out[0], out[-1] = out[1], out[-2]
    return out


def toda_residual(a: LayerAnsatz, prof: Profile, x1: np.ndarray | None = None) -> TodaResidualReport:
    """Reduced Toda residual of the ansatz's interfaces and shifts.

    H_a is the signed discrete curvature of the polyline (upward normal),
    h_a'' the second difference of the shifts on the grid abscissae, and
    d_{a +- 1} the signed distance from (x1, f_a(x1)) to the neighbor layers
    divided by eps. Missing neighbors contribute nothing.
    """
    eps = a.epsilon
    xs = a.x1 if x1 is None else np.asarray(x1, dtype=float)
    dx = xs[1] - xs[0]
    Q = a.Q
    lhs = np.zeros((Q, xs.size))
    rhs = np.zeros((Q, xs.size))
    a_of = {1: prof.A_plus, -1: prof.A_minus}
    c = 4.0 / prof.sigma0
    for al in range(Q):
        curve = a.interfaces[al]
        H = np.interp(xs, curve.x, discrete_curvature(curve))
        hpp = _second_difference(np.interp(xs, a.x1, a.shifts[al]), dx)
        lhs[al] = eps * (H + hpp)
        pts = np.column_stack([xs, curve(xs)])
        alpha = al + 1  # paper indexing starts at 1
        if al > 0:
            d = nearest_points(a.interfaces[al - 1], pts).z / eps
            rhs[al] += c * a_of[(-1) ** alpha] ** 2 * np.exp(-SQRT2 * d)
        if al < Q - 1:
            d = nearest_points(a.interfaces[al + 1], pts).z / eps
            rhs[al] -= c * a_of[(-1) ** (alpha - 1)] ** 2 * np.exp(SQRT2 * d)
    return TodaResidualReport(xs, lhs, rhs)


# -- blow-up rescaling -------------------------------------------------------------------------


def blow_up_rescale(
    interfaces: list[InterfaceCurve], epsilon: float, alpha0: int = 1, y: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """f~_a(y) = f_a(sqrt(eps) y) / eps - (sqrt2 a / 2)|log eps| on a uniform y grid.

    Row k of the result belongs to layer a = alpha0 + k. Without ``y`` the
    grid spans the common x1 range of the interfaces at the finest sampling.
    """
    se = math.sqrt(epsilon)
    L = abs(math.log(epsilon))
    lo = max(c.x[0] for c in interfaces)
    hi = min(c.x[-1] for c in interfaces)
    if y is None:
        dx = min(np.min(np.diff(c.x)) for c in interfaces)
        n = int(math.floor((hi - lo) / dx + 1e-9)) + 1
        y = (lo + dx * np.arange(n)) / se
    y = np.asarray(y, dtype=float)
    if se * y.min() < lo - 1e-12 or se * y.max() > hi + 1e-12:
        raise ValueError("interfaces do not cover the requested rescaled range")
    F = np.array([c(se * y) / epsilon - SQRT2 * (alpha0 + k) / 2 * L for k, c in enumerate(interfaces)])
    return y, F


def blow_down(y: np.ndarray, F: np.ndarray, epsilon: float, alpha0: int = 1) -> list[InterfaceCurve]:
    """Inverse of :func:`blow_up_rescale`: f_a(x) = eps [f~_a(x / sqrt eps) + (sqrt2 a / 2)|log eps|]."""
    L = abs(math.log(epsilon))
    x = math.sqrt(epsilon) * np.asarray(y, dtype=float)
    return [InterfaceCurve.from_graph(x, epsilon * (np.asarray(Fk) + SQRT2 * (alpha0 + k) / 2 * L)) for k, Fk in enumerate(F)]


# -- separation scan -----------------------------------------------------------------------------


@dataclass
class SeparationScan:
    rows: list[tuple[float, float, float]]  # (eps, min gap, gap / (eps |log eps|))
    a: float
    b: float
    excluded: list[str]


def min_vertical_gap(lower: InterfaceCurve, upper: InterfaceCurve, x: np.ndarray) -> float:
    return float(np.min(upper(x) - lower(x)))


def separation_scan(
    states: list[tuple[float, ScalarField2D]],
    windows: list[Rect] | None = None,
    morse_indices: list[int] | None = None,
    p=None,
) -> SeparationScan:
    """Fit min gap = a eps |log eps| + b eps over converged two-layer states.

    Each window defaults to the grid minus a 10 eps margin. Stability comes
    from ``morse_indices`` or, given the potential ``p``, from an eigensolve on
    the window; unstable states are excluded with a note.
    """
    rows, excluded = [], []
    for k, (eps, f) in enumerate(states):
        win = windows[k] if windows else f.bounds.shrink(10 * eps)
        if morse_indices is not None:
            idx = morse_indices[k]
        elif p is not None:
            from .spectrum import morse_index

            idx = morse_index(f, p, win)
        else:
            idx = 0
        curves = [c for c in extract_levelset(f, 0.0) if c.is_graph]
        if len(curves) != 2:
            raise ValueError(f"separation scan needs exactly two layers, found {len(curves)} at eps = {eps}")
        if idx != 0:
            excluded.append(f"eps = {eps}: Morse index {idx} on the window")
            continue
        x = f.x[(f.x >= win.xmin) & (f.x <= win.xmax)]
        gap = min_vertical_gap(curves[0], curves[1], x)
        rows.append((eps, gap, gap / (eps * abs(math.log(eps)))))
    if len(rows) < 2:
        raise ValueError("fit needs at least two stable states")
    E = np.array([r[0] for r in rows])
    G = np.array([r[1] for r in rows])
    M = np.column_stack([E * np.abs(np.log(E)), E])
    (a, b), *_ = np.linalg.lstsq(M, G, rcond=None)
    return SeparationScan(rows, float(a), float(b), excluded)
