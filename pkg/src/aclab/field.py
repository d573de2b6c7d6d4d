"""Gridded solutions of eps Lap u = W'(u) / eps and their classical diagnostics."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RectBivariateSpline

from .potential import Potential

MAGIC = b"ACF1"


class Rect(NamedTuple):
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def shrink(self, margin: float) -> "Rect":
        return Rect(self.xmin + margin, self.xmax - margin, self.ymin + margin, self.ymax - margin)

    def contains(self, x, y) -> np.ndarray:
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)


class ScalarField2D:
    """Node values u[j, i] at (x0 + i hx, y0 + j hy); rows are y.

    Dirichlet data lives in ``bc_data`` (only boundary nodes are read). With
    ``periodic_x`` the left and right edges wrap and only the bottom and top
    rows carry Dirichlet data.
    """

    _SPLINE_PAD = 8

    def __init__(
        self,
        values: np.ndarray,
        hx: float,
        hy: float,
        epsilon: float,
        x0: float = 0.0,
        y0: float = 0.0,
        periodic_x: bool = False,
        bc_data: np.ndarray | None = None,
    ):
        values = np.array(values, dtype=float)
        if values.ndim != 2 or min(values.shape) < 3:
            raise ValueError("field must be a 2D array of at least 3x3 nodes")
        if hx <= 0 or hy <= 0:
            raise ValueError("grid spacings must be positive")
        if not (0.0 < epsilon <= 0.5):
            raise ValueError(f"epsilon must lie in (0, 0.5], got {epsilon}")
        self.values = values
        self.hx, self.hy, self.epsilon = float(hx), float(hy), float(epsilon)
        self.x0, self.y0 = float(x0), float(y0)
        self.periodic_x = bool(periodic_x)
        self.bc_data = values.copy() if bc_data is None else np.array(bc_data, dtype=float)

    # -- construction -------------------------------------------------------------

    @classmethod
    def from_function(
        cls,
        func: Callable[[np.ndarray, np.ndarray], np.ndarray],
        x_range: tuple[float, float],
        y_range: tuple[float, float],
        h: float | tuple[float, float],
        epsilon: float,
        periodic_x: bool = False,
    ) -> "ScalarField2D":
        """Sample ``func(x, y)`` on a box; boundary data are the sampled edge values.

        For a periodic x-direction the box length must be a multiple of hx and
        the right end is not a node.
        """
        hx, hy = (h, h) if np.isscalar(h) else h
        nx = int(round((x_range[1] - x_range[0]) / hx)) + (0 if periodic_x else 1)
        ny = int(round((y_range[1] - y_range[0]) / hy)) + 1
        x = x_range[0] + hx * np.arange(nx)
        y = y_range[0] + hy * np.arange(ny)
        X, Y = np.meshgrid(x, y)
        vals = np.broadcast_to(np.asarray(func(X, Y), dtype=float), X.shape)
        return cls(vals, hx, hy, epsilon, x[0], y[0], periodic_x)

    def with_values(self, values: np.ndarray) -> "ScalarField2D":
        return ScalarField2D(values, self.hx, self.hy, self.epsilon, self.x0, self.y0, self.periodic_x, self.bc_data)

    def with_own_boundary(self) -> "ScalarField2D":
        """Copy whose Dirichlet data are its current boundary values."""
        return ScalarField2D(self.values, self.hx, self.hy, self.epsilon, self.x0, self.y0, self.periodic_x, self.values)

    def with_dirichlet(self, bottom=None, top=None, left=None, right=None) -> "ScalarField2D":
        """Replace edge data; each edge is a constant, an array, or a function of arclength.

        Arclength runs from the bottom-left corner along bottom and left edges
        and from the top-left / bottom-right corner along top / right edges.
        """
        data = self.bc_data.copy()
        ny, nx = self.shape
        sx = self.hx * np.arange(nx)
        sy = self.hy * np.arange(ny)

        def resolve(bc, s):
            if bc is None:
                return None
            if callable(bc):
                return np.asarray(bc(s), dtype=float) * np.ones_like(s)
            return np.broadcast_to(np.asarray(bc, dtype=float), s.shape)

        for bc, idx, s in ((bottom, (0, slice(None)), sx), (top, (-1, slice(None)), sx)):
            v = resolve(bc, s)
            if v is not None:
                data[idx] = v
        if self.periodic_x and (left is not None or right is not None):
            raise ValueError("left/right data are meaningless for a periodic x-direction")
        for bc, idx in ((left, (slice(None), 0)), (right, (slice(None), -1))):
            v = resolve(bc, sy)
            if v is not None:
                data[idx] = v
        vals = self.values.copy()
        mask = self.boundary_mask
        vals[mask] = data[mask]
        return ScalarField2D(vals, self.hx, self.hy, self.epsilon, self.x0, self.y0, self.periodic_x, data)

    # -- grid ---------------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.hy * np.arange(self.ny)

    @property
    def bounds(self) -> Rect:
        xmax = self.x0 + self.hx * (self.nx if self.periodic_x else self.nx - 1)
        return Rect(self.x0, xmax, self.y0, self.y0 + self.hy * (self.ny - 1))

    def same_grid(self, other: "ScalarField2D") -> bool:
        return (
            self.shape == other.shape
            and self.periodic_x == other.periodic_x
            and np.allclose([self.hx, self.hy, self.x0, self.y0], [other.hx, other.hy, other.x0, other.y0], rtol=0, atol=1e-12)
        )

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[0, :] = m[-1, :] = True
        if not self.periodic_x:
            m[:, 0] = m[:, -1] = True
        return m

    @property
    def unknown_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    def window_mask(self, window: Rect | None) -> np.ndarray:
        if window is None:
            return np.ones(self.shape, dtype=bool)
        X, Y = self.mesh()
        return window.contains(X, Y)

    # -- operators ----------------------------------------------------------------

    def laplacian(self) -> np.ndarray:
        """5-point Laplacian at unknown nodes (zero on Dirichlet nodes)."""
        u = self.values
        out = np.zeros_like(u)
        if self.periodic_x:
            uxx = (np.roll(u, -1, axis=1) - 2 * u + np.roll(u, 1, axis=1)) / self.hx**2
            out[1:-1, :] = uxx[1:-1, :] + (u[2:, :] - 2 * u[1:-1, :] + u[:-2, :]) / self.hy**2
        else:
            out[1:-1, 1:-1] = (u[1:-1, 2:] - 2 * u[1:-1, 1:-1] + u[1:-1, :-2]) / self.hx**2 + (
                u[2:, 1:-1] - 2 * u[1:-1, 1:-1] + u[:-2, 1:-1]
            ) / self.hy**2
        return out

    def laplacian_matrix(self, rows: slice | None = None, cols: slice | None = None, periodic: bool | None = None) -> sp.csr_matrix:
        """Sparse 5-point Laplacian on a block of nodes with zero Dirichlet data
        outside it, ordered row-major like ``values[rows, cols].ravel()``."""
        nyb = len(range(*(rows or slice(1, self.ny - 1)).indices(self.ny)))
        ncols = cols or (slice(None) if self.periodic_x else slice(1, self.nx - 1))
        nxb = len(range(*ncols.indices(self.nx)))
        periodic = self.periodic_x and nxb == self.nx if periodic is None else periodic
        Dx = sp.diags([np.ones(nxb - 1), -2 * np.ones(nxb), np.ones(nxb - 1)], [-1, 0, 1], format="lil")
        if periodic:
            Dx[0, -1] = Dx[-1, 0] = 1.0
        Dy = sp.diags([np.ones(nyb - 1), -2 * np.ones(nyb), np.ones(nyb - 1)], [-1, 0, 1])
        return (sp.kron(sp.identity(nyb), Dx.tocsr() / self.hx**2) + sp.kron(Dy / self.hy**2, sp.identity(nxb))).tocsr()

    # -- sampling -----------------------------------------------------------------

    @cached_property
    def _spline(self) -> RectBivariateSpline:
        x, vals = self.x, self.values
        if self.periodic_x:
            k = self._SPLINE_PAD
            vals = np.hstack([vals[:, -k:], vals, vals[:, :k]])
            x = self.x0 + self.hx * np.arange(-k, self.nx + k)
        return RectBivariateSpline(self.y, x, vals, kx=5, ky=5, s=0)

    def _wrap(self, x):
        if not self.periodic_x:
            return x
        L = self.hx * self.nx
        return self.x0 + np.mod(np.asarray(x, dtype=float) - self.x0, L)

    def sample(self, x, y, dx: int = 0, dy: int = 0) -> np.ndarray:
        """Quintic-spline interpolant (or its derivative) at arbitrary points."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = self._spline.ev(y.ravel(), self._wrap(x).ravel(), dx=dy, dy=dx)
        return out.reshape(x.shape)

    def derivatives(self, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(u_x, u_y, u_xx, u_xy, u_yy) of the spline interpolant."""
        return (
            self.sample(x, y, dx=1),
            self.sample(x, y, dy=1),
            self.sample(x, y, dx=2),
            self.sample(x, y, dx=1, dy=1),
            self.sample(x, y, dy=2),
        )

    def gradient_nodes(self, order: int = 6) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Central-difference gradient at nodes; returns (u_x, u_y, valid mask)."""
        coef = {2: [1 / 2], 4: [2 / 3, -1 / 12], 6: [3 / 4, -3 / 20, 1 / 60]}[order]
        m = len(coef)
        u = self.values
        ux = np.zeros_like(u)
        uy = np.zeros_like(u)
        for k, c in enumerate(coef, start=1):
            ux += c * (np.roll(u, -k, axis=1) - np.roll(u, k, axis=1)) / self.hx
            uy += c * (np.roll(u, -k, axis=0) - np.roll(u, k, axis=0)) / self.hy
        valid = np.zeros(self.shape, dtype=bool)
        if self.periodic_x:
            valid[m:-m, :] = True
        else:
            valid[m:-m, m:-m] = True
        return ux, uy, valid

    # -- io -----------------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Binary snapshot: b'ACF1', nx, ny (int64), hx, hy, eps (float64), values."""
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<qqddd", self.nx, self.ny, self.hx, self.hy, self.epsilon))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "ScalarField2D":
        raw = Path(path).read_bytes()
        if raw[:4] != MAGIC:
            raise ValueError(f"{path}: not an ACF1 field snapshot")
        nx, ny, hx, hy, eps = struct.unpack("<qqddd", raw[4:44])
        vals = np.frombuffer(raw[44:], dtype="<f8")
        if vals.size != nx * ny:
            raise ValueError(f"{path}: expected {nx * ny} values, found {vals.size}")
        return cls(vals.reshape(ny, nx).copy(), hx, hy, eps)

    def to_csv(self, path: str | Path) -> None:
        X, Y = self.mesh()
        np.savetxt(path, np.column_stack([X.ravel(), Y.ravel(), self.values.ravel()]), delimiter=",", header="x,y,u", comments="", fmt="%.17g")


# -- residual and solvers -------------------------------------------------------------


def ac_residual(f: ScalarField2D, p: Potential) -> ScalarField2D:
    """eps Lap_h u - W'(u)/eps at unknown nodes, u - data on Dirichlet nodes."""
    r = f.epsilon * f.laplacian() - p.dW(f.values) / f.epsilon
    bm = f.boundary_mask
    r[bm] = f.values[bm] - f.bc_data[bm]
    return f.with_values(r)


def residual_norm(f: ScalarField2D, p: Potential) -> float:
    r = ac_residual(f, p).values
    return float(np.max(np.abs(r)))


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    tol: float
    damping_history: list[float] = field(default_factory=list)

    @property
    def gradient_flow_steps(self) -> int:
        return sum(1 for d in self.damping_history if d < 0)


def _jacobian(f: ScalarField2D, p: Potential, lap: sp.csr_matrix) -> sp.csc_matrix:
    w2 = p.d2W(f.values[f.unknown_mask])
    return (f.epsilon * lap - sp.diags(w2 / f.epsilon)).tocsc()


def solve_newton(
    f: ScalarField2D,
    p: Potential,
    tol: float = 1e-10,
    max_iter: int = 60,
    dt0: float | None = None,
) -> tuple[ScalarField2D, SolveReport]:
    """Damped Newton for the discrete steady state, with implicit gradient-flow
    fallback steps whenever no damped Newton step lowers the residual.

    ``damping_history`` holds the accepted Newton damping factor per iteration,
    or ``-dt`` for a gradient-flow step. Non-convergence is reported, not raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    f = f.with_dirichlet()  # boundary nodes take their data
    mask = f.unknown_mask
    lap = f.laplacian_matrix()
    dt = f.epsilon if dt0 is None else dt0
    history: list[float] = []

    def res_vec(field_):
        return ac_residual(field_, p).values[mask]

    r = res_vec(f)
    rn = float(np.max(np.abs(r)))
    it = 0
    while rn > tol and it < max_iter:
        it += 1
        J = _jacobian(f, p, lap)
        step = spla.spsolve(J, -r)
        accepted = False
        for alpha in (1.0, 0.5, 0.25, 0.125):
            vals = f.values.copy()
            vals[mask] += alpha * step
            trial = f.with_values(vals)
            r_t = res_vec(trial)
            rn_t = float(np.max(np.abs(r_t)))
            if rn_t < rn:
                f, r, rn = trial, r_t, rn_t
                history.append(alpha)
                accepted = True
                break
        if not accepted:
            # linearized implicit Euler step of u_t = eps Lap u - W'(u)/eps
            A = (sp.identity(J.shape[0]) / dt - J).tocsc()
            vals = f.values.copy()
            vals[mask] += spla.spsolve(A, r)
            f = f.with_values(vals)
            r = res_vec(f)
            rn = float(np.max(np.abs(r)))
            history.append(-dt)
            dt *= 2.0
    return f, SolveReport(iterations=it, residual=rn, converged=rn <= tol, tol=tol, damping_history=history)


def _max_curvature(f: ScalarField2D, p: Potential) -> float:
    r = max(1.0, float(np.max(np.abs(f.values)))) * 1.05
    return float(max(np.max(p.d2W(np.linspace(-r, r, 2001))), 0.0))


def stable_dt(f: ScalarField2D, p: Potential) -> float:
    """Largest explicit step allowed; for hx = hy it equals hx^2 eps / (4 eps^2 + hx^2 max W'') / 2."""
    M = _max_curvature(f, p)
    eps = f.epsilon
    return 0.5 / (eps * (2 / f.hx**2 + 2 / f.hy**2) + M / eps)


def gradient_flow(f: ScalarField2D, p: Potential, dt: float, steps: int) -> ScalarField2D:
    """Explicit Euler steps of u_t = eps Lap u - W'(u)/eps with fixed boundary data."""
    bound = stable_dt(f, p)
    if dt > bound:
        raise ValueError(f"dt = {dt:.3e} exceeds the explicit stability bound {bound:.3e}")
    f = f.with_dirichlet()
    mask = f.unknown_mask
    for _ in range(steps):
        rate = f.epsilon * f.laplacian() - p.dW(f.values) / f.epsilon
        vals = f.values.copy()
        vals[mask] += dt * rate[mask]
        f = f.with_values(vals)
    return f


# -- energies ---------------------------------------------------------------------------


def discrete_energy(f: ScalarField2D, p: Potential) -> float:
    """The functional whose nodal gradient is the 5-point scheme:
    sum over edges of eps/2 (difference quotient)^2 + sum over unknown nodes of W/eps,
    both weighted by hx hy."""
    u, eps = f.values, f.epsilon
    dy = np.diff(u, axis=0) / f.hy
    if f.periodic_x:
        dx = (np.roll(u, -1, axis=1) - u)[1:-1, :] / f.hx
    else:
        dx = np.diff(u[1:-1, :], axis=1) / f.hx
        dy = dy[:, 1:-1]
    grad = 0.5 * eps * (np.sum(dx**2) + np.sum(dy**2))
    pot = np.sum(p.W(u[f.unknown_mask])) / eps
    return float((grad + pot) * f.hx * f.hy)


def energy(f: ScalarField2D, p: Potential, region: Rect | None = None) -> float:
    """Midpoint-rule integral of eps |grad u|^2 / 2 + W(u) / eps over the cells
    whose centers lie in ``region`` (whole grid by default)."""
    u, eps = f.values, f.epsilon
    if f.periodic_x:
        u = np.hstack([u, u[:, :1]])
    ux = 0.5 * (np.diff(u[:-1, :], axis=1) + np.diff(u[1:, :], axis=1)) / f.hx
    uy = 0.5 * (np.diff(u[:, :-1], axis=0) + np.diff(u[:, 1:], axis=0)) / f.hy
    um = 0.25 * (u[:-1, :-1] + u[1:, :-1] + u[:-1, 1:] + u[1:, 1:])
    dens = 0.5 * eps * (ux**2 + uy**2) + p.W(um) / eps
    if region is not None:
        xc = f.x0 + f.hx * (np.arange(dens.shape[1]) + 0.5)
        yc = f.y0 + f.hy * (np.arange(dens.shape[0]) + 0.5)
        XC, YC = np.meshgrid(xc, yc)
        dens = np.where(region.contains(XC, YC), dens, 0.0)
    return float(np.sum(dens) * f.hx * f.hy)


# -- Modica and Pohozaev ------------------------------------------------------------------


def modica_field(f: ScalarField2D, p: Potential, order: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """W(u) - eps^2 |grad u|^2 / 2 at nodes (gradient by ``order``-th order central
    differences) and the mask of nodes where the stencil fits."""
    ux, uy, valid = f.gradient_nodes(order)
    P = p.W(f.values) - 0.5 * f.epsilon**2 * (ux**2 + uy**2)
    return P, valid


def modica_deficit(f: ScalarField2D, p: Potential, window: Rect | None = None, order: int = 6) -> float:
    """Minimum of the scaled Modica quantity W(u) - eps^2 |grad u|^2 / 2 over interior nodes.

    The quantity is dimensionless; multiply by 1/eps for the energy-density
    normalization W/eps - eps |grad u|^2 / 2.
    """
    P, valid = modica_field(f, p, order)
    m = valid & f.window_mask(window)
    return float(np.min(P[m]))


def modica_deficit_extrapolated(
    coarse: ScalarField2D, fine: ScalarField2D, p: Potential, window: Rect | None = None, order: int = 6
) -> float:
    """Richardson estimate (4 P_fine - P_coarse) / 3 of the continuum Modica minimum.

    ``fine`` must cover the same box with half the spacing, so that every
    coarse node is a fine node. The 5-point scheme's O(h^2) error in P is
    removed; what remains is O(h^4).
    """
    if not (np.isclose(fine.hx * 2, coarse.hx) and np.isclose(fine.hy * 2, coarse.hy)):
        raise ValueError("fine grid must have exactly half the coarse spacing")
    if not (np.isclose(fine.x0, coarse.x0) and np.isclose(fine.y0, coarse.y0)):
        raise ValueError("grids must share their origin")
    Pc, vc = modica_field(coarse, p, order)
    Pf, vf = modica_field(fine, p, order)
    Pf_on_c = Pf[::2, ::2][: coarse.ny, : coarse.nx]
    vf_on_c = vf[::2, ::2][: coarse.ny, : coarse.nx]
    m = vc & vf_on_c & coarse.window_mask(window)
    return float(np.min(((4.0 * Pf_on_c - Pc) / 3.0)[m]))


def modica_discretization_estimate(f: ScalarField2D, window: Rect | None = None) -> float:
    """Size of the leading 5-point truncation term in P, from second differences:
    eps^2 / 12 * sum over axes of h^2 |u' u''' - u''^2 / 2|."""
    u = f.values
    est = np.zeros_like(u)
    for axis, h in ((1, f.hx), (0, f.hy)):
        r = lambda k: np.roll(u, -k, axis=axis)
        d1 = (r(1) - r(-1)) / (2 * h)
        d2 = (r(1) - 2 * u + r(-1)) / h**2
        d3 = (r(2) - 2 * r(1) + 2 * r(-1) - r(-2)) / (2 * h**3)
        est += h**2 * np.abs(d1 * d3 - 0.5 * d2**2)
    _, _, valid = f.gradient_nodes(6)
    m = valid & f.window_mask(window)
    return float(f.epsilon**2 / 12.0 * np.max(est[m]))


def pohozaev_residual(
    f: ScalarField2D,
    p: Potential,
    r: float,
    center: tuple[float, float],
    n_radial: int | None = None,
    n_angular: int | None = None,
) -> float:
    """|LHS - RHS| of the scaled Pohozaev identity on the disc B_r(center):

    int_B 2 W(u)/eps = r int_{dB} [eps |grad u|^2 / 2 + W(u)/eps - eps (d_r u)^2] ds.

    The area integral uses Gauss-Legendre in the radius and the midpoint rule
    in angle; the boundary integral uses the arclength midpoint rule; u is
    sampled through the field's spline.
    """
    cx, cy = center
    b = f.bounds
    if not f.periodic_x and (cx - r < b.xmin or cx + r > b.xmax):
        raise ValueError("disc leaves the grid")
    if cy - r < b.ymin or cy + r > b.ymax:
        raise ValueError("disc leaves the grid")
    h = min(f.hx, f.hy)
    n_theta = n_angular or max(64, int(4 * math.pi * r / h))
    n_rho = n_radial or max(16, int(2 * r / h))
    eps = f.epsilon
    theta = 2 * math.pi * (np.arange(n_theta) + 0.5) / n_theta

    xg, wg = np.polynomial.legendre.leggauss(n_rho)
    rho = 0.5 * r * (xg + 1.0)
    wr = 0.5 * r * wg
    R, TH = np.meshgrid(rho, theta, indexing="ij")
    u = f.sample(cx + R * np.cos(TH), cy + R * np.sin(TH))
    lhs = np.sum((2.0 * p.W(u) / eps) * R * wr[:, None]) * (2 * math.pi / n_theta)

    bx, by = cx + r * np.cos(theta), cy + r * np.sin(theta)
    ub = f.sample(bx, by)
    ux, uy = f.sample(bx, by, dx=1), f.sample(bx, by, dy=1)
    ur = ux * np.cos(theta) + uy * np.sin(theta)
    dens = 0.5 * eps * (ux**2 + uy**2) + p.W(ub) / eps - eps * ur**2
    rhs = r * np.sum(dens) * (2 * math.pi * r / n_theta)
    return float(abs(lhs - rhs))


def gradient_floor(f: ScalarField2D, b: float, window: Rect | None = None) -> float:
    """Minimum of eps |grad u| over nodes with |u| <= 1 - b (nan if there are none)."""
    ux, uy, valid = f.gradient_nodes(4)
    m = valid & f.window_mask(window) & (np.abs(f.values) <= 1.0 - b)
    if not np.any(m):
        return math.nan
    return float(f.epsilon * np.min(np.hypot(ux, uy)[m]))
