"""Level sets, curvature of level curves, and Fermi-coordinate utilities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .field import Rect, ScalarField2D

# cell average below this fraction of the corner values marks a crossing cell
CROSSING_TOL = 1e-6
FOCAL_GUARD = 0.9


@dataclass(frozen=True)
class GraphForm:
    x: np.ndarray
    f: np.ndarray
    valid: bool


class InterfaceCurve:
    """An ordered polyline. Graph-like curves run left to right.

    ``u_above`` records whether the field exceeds the level on the left of the
    direction of travel (above, for a graph); None when unknown.
    """

    def __init__(self, points: np.ndarray, u_above: bool | None = None, closed: bool = False):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("a curve needs at least two (x, y) points")
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.any(np.abs(np.diff(pts, axis=0)) > 1e-14, axis=1)
        self.points = pts[keep]
        if len(self.points) < 2:
            raise ValueError("curve collapses to a point")
        self.u_above = u_above
        self.closed = closed

    @classmethod
    def from_graph(cls, x: np.ndarray, f: np.ndarray) -> "InterfaceCurve":
        x = np.asarray(x, dtype=float)
        if np.any(np.diff(x) <= 0):
            raise ValueError("graph abscissae must increase strictly")
        return cls(np.column_stack([x, f]), u_above=True)

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"InterfaceCurve(n={len(self)}, graph={self.is_graph}, mean_y={self.mean_y:.4g})"

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def mean_y(self) -> float:
        return float(np.mean(self.y))

    @property
    def is_graph(self) -> bool:
        return bool(np.all(np.diff(self.x) > 0))

    def graph(self, x_grid: np.ndarray | None = None) -> GraphForm:
        if not self.is_graph:
            return GraphForm(self.x.copy(), self.y.copy(), False)
        if x_grid is None:
            return GraphForm(self.x.copy(), self.y.copy(), True)
        x_grid = np.asarray(x_grid, dtype=float)
        if x_grid.min() < self.x[0] - 1e-12 or x_grid.max() > self.x[-1] + 1e-12:
            raise ValueError("x grid leaves the curve's range")
        return GraphForm(x_grid, np.interp(x_grid, self.x, self.y), True)

    def __call__(self, x) -> np.ndarray:
        """Graph value f(x) by linear interpolation."""
        if not self.is_graph:
            raise ValueError("curve is not a graph over x")
        return np.interp(x, self.x, self.y)

    @property
    def arclength(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(self.points, axis=0), axis=1))])

    def translated(self, dx: float = 0.0, dy: float = 0.0) -> "InterfaceCurve":
        return InterfaceCurve(self.points + [dx, dy], self.u_above, self.closed)

    def is_simple(self) -> bool:
        """No two non-adjacent segments intersect."""
        a, b = self.points[:-1], self.points[1:]
        n = len(a)
        hits = _segments_cross(a, b, a, b)
        idx = np.arange(n)
        near = np.abs(idx[:, None] - idx[None, :]) <= 1
        if self.closed:
            near |= np.abs(idx[:, None] - idx[None, :]) == n - 1
        return not np.any(hits & ~near)


def _segments_cross(a1, b1, a2, b2) -> np.ndarray:
    """Pairwise proper intersection of segments [a1,b1] (rows) and [a2,b2] (cols)."""

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0])

    P, Qp = a1[:, None, :], b1[:, None, :]
    R, S = a2[None, :, :], b2[None, :, :]
    o1, o2 = orient(P, Qp, R), orient(P, Qp, S)
    o3, o4 = orient(R, S, P), orient(R, S, Qp)
    return (o1 * o2 < 0) & (o3 * o4 < 0)


def curves_intersect(c1: InterfaceCurve, c2: InterfaceCurve) -> bool:
    return bool(np.any(_segments_cross(c1.points[:-1], c1.points[1:], c2.points[:-1], c2.points[1:])))


class LevelSet(list):
    """List of curves plus marching-squares diagnostics."""

    def __init__(self, curves, ambiguous_cells: int = 0, crossing_cells: int = 0, min_gradient: float = math.nan):
        super().__init__(curves)
        self.ambiguous_cells = ambiguous_cells
        self.crossing_cells = crossing_cells
        self.min_gradient = min_gradient


# -- marching squares ------------------------------------------------------------------


def extract_levelset(f: ScalarField2D, t: float = 0.0) -> LevelSet:
    """Marching squares for {u = t} with linear interpolation along cell edges.

    Ambiguous cells (diagonal corners of equal sign) are resolved by the sign
    of the cell average. When that average vanishes to relative precision the
    cell holds a crossing: its four branches meet at the bilinear saddle point
    and each branch continues through to the opposite edge. On an x-periodic
    grid curves are cut at the seam x = x0. ``min_gradient`` is the smallest
    eps |grad u| met along the curves (small values flag degenerate points).
    """
    if not (-1.0 < t < 1.0):
        raise ValueError("level must lie in (-1, 1)")
    s = f.values - t
    x = f.x
    if f.periodic_x:
        s = np.hstack([s, s[:, :1]])
        x = np.append(x, f.x0 + f.hx * f.nx)
    y = f.y
    pos = s >= 0.0
    ny, nx = s.shape

    corners = np.stack([pos[:-1, :-1], pos[:-1, 1:], pos[1:, 1:], pos[1:, :-1]])  # bl, br, tr, tl
    active = ~(np.all(corners, axis=0) | np.all(~corners, axis=0))
    coords: dict[tuple, tuple[float, float]] = {}

    def edge_point(key):
        if key in coords:
            return
        kind, j, i = key
        if kind == "h":
            sa, sb = s[j, i], s[j, i + 1]
            tau = sa / (sa - sb)
            coords[key] = (x[i] + tau * (x[i + 1] - x[i]), y[j])
        else:
            sa, sb = s[j, i], s[j + 1, i]
            tau = sa / (sa - sb)
            coords[key] = (x[i], y[j] + tau * (y[j + 1] - y[j]))

    segments: list[tuple[tuple, tuple]] = []
    crossing_side: dict[int, tuple[tuple, int]] = {}
    ambiguous = crossings = 0
    for j, i in zip(*np.nonzero(active)):
        c = [s[j, i], s[j, i + 1], s[j + 1, i + 1], s[j + 1, i]]
        p = [v >= 0 for v in c]
        edges = [("h", j, i), ("v", j, i + 1), ("h", j + 1, i), ("v", j, i)]  # bottom, right, top, left
        ends = [(0, 1), (1, 2), (3, 2), (0, 3)]  # corner pairs of each edge
        cut = [k for k, (a, b) in enumerate(ends) if p[a] != p[b]]
        for k in cut:
            edge_point(edges[k])
        if len(cut) == 2:
            segments.append((edges[cut[0]], edges[cut[1]]))
            continue
        ambiguous += 1
        mean = 0.25 * sum(c)
        if abs(mean) <= CROSSING_TOL * max(abs(v) for v in c):
            crossings += 1
            # bilinear saddle: s = a + b xi + c eta + d xi eta on the unit cell
            a0, b0, c0 = c[0], c[1] - c[0], c[3] - c[0]
            d0 = c[2] - c[1] - c[3] + c[0]
            xi = min(max(-c0 / d0, 0.0), 1.0)
            eta = min(max(-b0 / d0, 0.0), 1.0)
            node = ("c", j, i)
            coords[node] = (x[i] + xi * (x[i + 1] - x[i]), y[j] + eta * (y[j + 1] - y[j]))
            for k in range(4):
                crossing_side[len(segments)] = (node, k)
                segments.append((edges[k], node))
        elif (mean >= 0) == p[0]:
            # bl and tr connect through the center; cut off br and tl
            segments.append((edges[0], edges[1]))
            segments.append((edges[2], edges[3]))
        else:
            segments.append((edges[3], edges[0]))
            segments.append((edges[1], edges[2]))

    chains = _chain(segments, crossing_side)
    curves = []
    for keys, closed in chains:
        pts = np.array([coords[k] for k in keys])
        if len(pts) < 2:
            continue
        curves.append(_orient(f, InterfaceCurve(pts, closed=closed), t))
    curves.sort(key=lambda c: (not c.is_graph, c.mean_y))

    min_grad = math.nan
    if curves:
        allp = np.vstack([c.points for c in curves])
        gx, gy = f.sample(allp[:, 0], allp[:, 1], dx=1), f.sample(allp[:, 0], allp[:, 1], dy=1)
        min_grad = float(f.epsilon * np.min(np.hypot(gx, gy)))
    return LevelSet(curves, ambiguous, crossings, min_grad)


def _chain(segments, crossing_side) -> list[tuple[list, bool]]:
    incident: dict[tuple, list[int]] = {}
    for k, (a, b) in enumerate(segments):
        incident.setdefault(a, []).append(k)
        incident.setdefault(b, []).append(k)
    side_seg: dict[tuple[tuple, int], int] = {v: k for k, v in crossing_side.items()}
    used = np.zeros(len(segments), dtype=bool)

    def step(node, via):
        if node[0] == "c":
            _, side = crossing_side[via]
            nxt = side_seg[(node, (side + 2) % 4)]
            return None if used[nxt] else nxt
        for k in incident[node]:
            if not used[k]:
                return k
        return None

    def walk(start, first):
        keys = [start]
        node, seg = start, first
        while seg is not None:
            used[seg] = True
            a, b = segments[seg]
            node = b if a == node else a
            keys.append(node)
            seg = step(node, seg)
        return keys

    chains = []
    # open chains start at boundary edge points; whatever is left forms loops
    for n, segs in incident.items():
        if len(segs) == 1 and n[0] != "c" and not used[segs[0]]:
            chains.append((walk(n, segs[0]), False))
    for k in range(len(segments)):
        if not used[k]:
            a, b = segments[k]
            keys = walk(a if a[0] != "c" else b, k)
            chains.append((keys, keys[0] == keys[-1]))
    return chains


def _orient(f: ScalarField2D, c: InterfaceCurve, t: float) -> InterfaceCurve:
    pts = c.points
    dx = pts[-1, 0] - pts[0, 0]
    dy = pts[-1, 1] - pts[0, 1]
    if (dx < 0) or (abs(dx) < 1e-12 and dy < 0) or (not c.closed and abs(dx) < abs(dy) and dy < 0 and dx <= 0):
        pts = pts[::-1]
    m = len(pts) // 2
    d = pts[min(m + 1, len(pts) - 1)] - pts[max(m - 1, 0)]
    nrm = np.array([-d[1], d[0]]) / np.hypot(*d)
    h = min(f.hx, f.hy)
    mid = 0.5 * (pts[min(m + 1, len(pts) - 1)] + pts[max(m - 1, 0)])
    probe = mid + h * nrm
    above = bool(f.sample(probe[0], probe[1]) > t)
    return InterfaceCurve(pts, u_above=above, closed=c.closed)


def write_curves_csv(curves: list[InterfaceCurve], path: str | Path) -> None:
    """x,y per row, blank line between curves."""
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for k, c in enumerate(curves):
            if k:
                fh.write("\n")
            for px, py in c.points:
                fh.write(f"{float(px)!r},{float(py)!r}\n")


def read_curves_csv(path: str | Path) -> list[InterfaceCurve]:
    blocks, cur = [], []
    for line in Path(path).read_text().splitlines()[1:]:
        if not line.strip():
            if cur:
                blocks.append(cur)
            cur = []
            continue
        cur.append([float(v) for v in line.split(",")])
    if cur:
        blocks.append(cur)
    return [InterfaceCurve(np.array(b)) for b in blocks]


# -- curvature of level curves ---------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureTerms:
    B: np.ndarray
    H: np.ndarray
    tangential: np.ndarray
    grad: np.ndarray


def curvature_terms(f: ScalarField2D, x, y) -> CurvatureTerms:
    """B, H and the tangential log-gradient from spline derivatives.

    B^2 = (|D^2u|^2 - |grad |grad u||^2) / |grad u|^2,
    H = div(grad u / |grad u|), tangential = tau . grad log |grad u|.
    """
    ux, uy, uxx, uxy, uyy = f.derivatives(x, y)
    g2 = ux**2 + uy**2
    g = np.sqrt(g2)
    hess2 = uxx**2 + 2 * uxy**2 + uyy**2
    with np.errstate(divide="ignore", invalid="ignore"):  # critical points give nan
        # grad |grad u| = D^2u grad u / |grad u|
        gx = (uxx * ux + uxy * uy) / g
        gy = (uxy * ux + uyy * uy) / g
        B2 = (hess2 - gx**2 - gy**2) / g2
        H = (uxx * uy**2 - 2 * uxy * ux * uy + uyy * ux**2) / g**3
        tang = (-uy * gx + ux * gy) / g2
    return CurvatureTerms(np.sqrt(np.maximum(B2, 0.0)), H, tang, g)


def _floor(f: ScalarField2D, min_grad: float | None) -> float:
    return 1e-6 / f.epsilon if min_grad is None else min_grad


def curvature_B(f: ScalarField2D, pt, b: float, min_grad: float | None = None) -> float:
    """|B(u)| at ``pt``; nan flags a point whose gradient is below the floor."""
    px, py = pt
    if abs(float(f.sample(px, py))) > 1.0 - b:
        raise ValueError(f"|u(pt)| exceeds 1 - b = {1 - b}")
    ct = curvature_terms(f, px, py)
    if ct.grad < _floor(f, min_grad):
        return math.nan
    return float(ct.B)


def curvature_H_and_tangential(f: ScalarField2D, pt, min_grad: float | None = None) -> tuple[float, float]:
    ct = curvature_terms(f, *pt)
    if ct.grad < _floor(f, min_grad):
        return math.nan, math.nan
    return float(ct.H), float(ct.tangential)


def max_B(f: ScalarField2D, level: float = 0.5, window: Rect | None = None) -> float:
    """Largest |B| over grid nodes in ``window`` with |u| <= level."""
    X, Y = f.mesh()
    m = f.window_mask(window) & (np.abs(f.values) <= level)
    if not np.any(m):
        return math.nan
    return float(np.max(curvature_terms(f, X[m], Y[m]).B))


# -- nearest points and Fermi coordinates ----------------------------------------------------


@dataclass(frozen=True)
class Nearest:
    z: np.ndarray  # signed distance, positive on the left of the direction of travel
    foot: np.ndarray  # (N, 2)
    s: np.ndarray  # arclength of the foot
    normal: np.ndarray  # unit left normal at the foot, = grad z
    segment: np.ndarray


class _SegmentIndex:
    def __init__(self, c: InterfaceCurve):
        self.a = c.points[:-1]
        self.d = np.diff(c.points, axis=0)
        self.len2 = np.einsum("ij,ij->i", self.d, self.d)
        self.s0 = c.arclength[:-1]
        self.lmax = float(np.sqrt(self.len2.max()))
        self.tree = cKDTree(c.points)
        ln = self.d / np.sqrt(self.len2)[:, None]
        self.seg_normal = np.column_stack([-ln[:, 1], ln[:, 0]])
        # vertex pseudo-normals for feet landing on a vertex
        vn = np.zeros_like(c.points)
        vn[:-1] += self.seg_normal
        vn[1:] += self.seg_normal
        self.vertex_normal = vn / np.linalg.norm(vn, axis=1)[:, None]
        with np.errstate(divide="ignore"):
            self.max_slope = float(np.max(np.abs(self.d[:, 1]) / np.abs(self.d[:, 0]))) if len(self.d) else 0.0
        if len(self.d) > 1:
            cosang = np.clip(np.einsum("ij,ij->i", ln[:-1], ln[1:]), -1.0, 1.0)
            short = np.sqrt(np.minimum(self.len2[:-1], self.len2[1:]))
            self.max_turning = float(np.max(np.arccos(cosang) / short))
        else:
            self.max_turning = 0.0


def _project(idx: _SegmentIndex, pts: np.ndarray, segs: np.ndarray):
    """Best projection of each point onto its candidate segments (N, k)."""
    a = idx.a[segs]
    d = idx.d[segs]
    rel = pts[:, None, :] - a
    tau = np.clip(np.einsum("nkj,nkj->nk", rel, d) / idx.len2[segs], 0.0, 1.0)
    foot = a + tau[..., None] * d
    dist2 = np.sum((pts[:, None, :] - foot) ** 2, axis=-1)
    best = np.argmin(dist2, axis=1)
    r = np.arange(len(pts))
    return segs[r, best], tau[r, best], foot[r, best], np.sqrt(dist2[r, best])


def nearest_points(c: InterfaceCurve, pts, k: int = 8, chunk: int = 16384) -> Nearest:
    """Exact nearest point on the polyline for each query point.

    Candidate segments touch the k nearest vertices (k-d tree). Any segment
    closer than the best candidate has a vertex within dist + lmax/2; points
    whose candidate set does not cover that ball are redone with a larger k.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    idx = getattr(c, "_segment_index", None)
    if idx is None:
        idx = _SegmentIndex(c)
        c._segment_index = idx
    if c.is_graph and len(c.points) > 64:
        seg, tau, foot, dist, D = _nearest_on_graph(c, idx, pts)
        bad = ~_certified(idx, D)
        if np.any(bad):
            seg[bad], tau[bad], foot[bad], dist[bad] = _nearest_kd(idx, pts[bad], k, chunk)
        return _finish(idx, pts, seg, tau, foot, dist)
    return _finish(idx, pts, *_nearest_kd(idx, pts, k, chunk))


def _nearest_kd(idx: _SegmentIndex, pts: np.ndarray, k: int, chunk: int):
    nv = len(idx.a) + 1
    nseg = len(idx.a)
    n = len(pts)
    seg = np.empty(n, dtype=int)
    tau = np.empty(n)
    foot = np.empty((n, 2))
    dist = np.empty(n)
    todo = np.arange(n)
    kk = min(k, nv)
    while todo.size:
        redo = []
        for start in range(0, todo.size, max(1, chunk * 8 // kk)):
            sel = todo[start : start + max(1, chunk * 8 // kk)]
            dv, iv = idx.tree.query(pts[sel], k=kk)
            dv, iv = dv.reshape(len(sel), kk), iv.reshape(len(sel), kk)
            cand = np.concatenate([np.clip(iv - 1, 0, nseg - 1), np.clip(iv, 0, nseg - 1)], axis=1)
            s_, t_, f_, d_ = _project(idx, pts[sel], cand)
            seg[sel], tau[sel], foot[sel], dist[sel] = s_, t_, f_, d_
            if kk < nv:
                redo.append(sel[dv[:, -1] < d_ + 0.5 * idx.lmax])
        todo = np.concatenate(redo) if redo else np.array([], dtype=int)
        kk = min(4 * kk, nv)
    return seg, tau, foot, dist


def _certified(idx: _SegmentIndex, D: np.ndarray) -> np.ndarray:
    """Points whose ternary-search answer is provably the global nearest point.

    Every curve point in the search window lies within R = D hypot(1, 1 + s)
    of the query (s the largest segment slope). With R kappa < 1, kappa the
    largest turning angle per adjacent segment length, the squared distance
    along the polyline has a single minimum over the window.
    """
    return D * math.hypot(1.0, 1.0 + idx.max_slope) * idx.max_turning < 0.9


def _nearest_on_graph(c: InterfaceCurve, idx: _SegmentIndex, pts: np.ndarray):
    """Nearest point on a graph polyline.

    The vertical projection bounds the distance by D = |y - f(x)|, so the foot
    lies in [x - D, x + D]; inside that window the vertex distance is searched
    by integer ternary search and the segments around the winner are projected
    exactly. The search assumes unimodality, which holds inside the focal tube;
    the caller certifies each answer and redoes the rest.
    """
    vx = c.x
    n = len(vx)
    D = np.abs(pts[:, 1] - np.interp(pts[:, 0], vx, c.y))
    lo = np.clip(np.searchsorted(vx, pts[:, 0] - D, side="left") - 1, 0, n - 1)
    hi = np.clip(np.searchsorted(vx, pts[:, 0] + D, side="right"), 0, n - 1)

    def d2(i):
        return np.sum((c.points[i] - pts) ** 2, axis=1)

    while True:
        act = hi - lo > 2
        if not np.any(act):
            break
        third = (hi - lo) // 3
        m1, m2 = lo + third, hi - third
        left = d2(m1) < d2(m2)
        hi = np.where(act & left, m2, hi)
        lo = np.where(act & ~left, m1, lo)
    nseg = len(idx.a)
    first = np.clip(lo - 1, 0, max(nseg - 4, 0))
    cand = np.minimum(first[:, None] + np.arange(4)[None, :], nseg - 1)
    return (*_project(idx, pts, cand), D)


def _finish(idx: _SegmentIndex, pts, seg, tau, foot, dist) -> Nearest:
    normal = idx.seg_normal[seg].copy()
    at0, at1 = tau <= 0.0, tau >= 1.0
    normal[at0] = idx.vertex_normal[seg[at0]]
    normal[at1] = idx.vertex_normal[seg[at1] + 1]
    sign = np.sign(np.einsum("ij,ij->i", pts - foot, normal))
    z = np.where(dist == 0.0, 0.0, sign * dist)
    s = idx.s0[seg] + tau * np.sqrt(idx.len2[seg])
    return Nearest(z, foot, s, normal, seg)


def signed_distance(c: InterfaceCurve, pt) -> tuple[float, float]:
    """(z, foot x) for a single point; z > 0 above a left-to-right graph."""
    n = nearest_points(c, np.asarray(pt, dtype=float)[None, :])
    return float(n.z[0]), float(n.foot[0, 0])


def discrete_curvature(c: InterfaceCurve) -> np.ndarray:
    """Signed Menger curvature at vertices, positive when turning counterclockwise.

    Endpoint values copy their neighbors.
    """
    p = c.points
    if len(p) < 3:
        return np.zeros(len(p))
    a, b, q = p[:-2], p[1:-1], p[2:]
    u, v = b - a, q - b
    cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    k = 2.0 * cross / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1) * np.linalg.norm(q - a, axis=1))
    return np.concatenate([[k[0]], k, [k[-1]]])


def fermi_metric(c: InterfaceCurve, y: float, z: float) -> float:
    """Metric factor g_11 = (1 + f'(y)^2) (1 - z kappa(y))^2 of X(y, z) = (y, f(y)) + z n(y).

    ``y`` is the graph abscissa of the foot point, n the upward unit normal
    and kappa the signed curvature. Queries with |z| max|kappa| >= 0.9 are
    rejected as too close to the focal set.
    """
    if not c.is_graph:
        raise ValueError("Fermi metric needs a graph curve")
    kappa = discrete_curvature(c)
    kmax = float(np.max(np.abs(kappa)))
    if abs(z) * kmax >= FOCAL_GUARD:
        raise ValueError(f"|z| = {abs(z):.4g} too close to the focal distance {1 / kmax:.4g}")
    if not (c.x[0] <= y <= c.x[-1]):
        raise ValueError("y outside the curve's range")
    slope = np.gradient(c.y, c.x)
    fp = float(np.interp(y, c.x, slope))
    k = float(np.interp(y, c.x, kappa))
    return (1.0 + fp**2) * (1.0 - z * k) ** 2


@dataclass
class DistanceComparison:
    residuals: dict[str, float]
    scale: float
    flagged: bool
    note: str = ""

    @property
    def normalized(self) -> dict[str, float]:
        return {k: v / self.scale for k, v in self.residuals.items()}


def distance_comparison_check(
    ca: InterfaceCurve, cb: InterfaceCurve, pt, epsilon: float, K: float = 2.0
) -> DistanceComparison:
    """The five distance-comparison residuals at X = ``pt`` for curves a and b:

    foot drift       dist_b(P_b(P_a X), P_b X), measured along b
    cross distance   |d_b(P_a X) + d_a(P_b X)|
    a-side defect    |d_a X - d_b X + d_b(P_a X)|
    b-side defect    |d_a X - d_b X - d_a(P_b X)|
    normal mismatch  1 - grad d_a(X) . grad d_b(X)

    Everything is in the units of the caller; ``scale`` = eps^(1/2)|log eps|^(3/2).
    The report is flagged when |d_a(X)| or |d_b(X)| exceeds K |log eps|.
    """
    X = np.asarray(pt, dtype=float)[None, :]
    na = nearest_points(ca, X)
    nb = nearest_points(cb, X)
    Pa, Pb = na.foot, nb.foot
    nb_of_pa = nearest_points(cb, Pa)
    na_of_pb = nearest_points(ca, Pb)
    da, db = float(na.z[0]), float(nb.z[0])
    res = {
        "foot drift": float(abs(nb_of_pa.s[0] - nb.s[0])),
        "cross distance": float(abs(nb_of_pa.z[0] + na_of_pb.z[0])),
        "a-side defect": float(abs(da - db + nb_of_pa.z[0])),
        "b-side defect": float(abs(da - db - na_of_pb.z[0])),
        "normal mismatch": float(1.0 - np.dot(na.normal[0], nb.normal[0])),
    }
    L = abs(math.log(epsilon))
    bound = K * L
    flagged = abs(da) > bound or abs(db) > bound
    note = f"|d_a|={abs(da):.3g}, |d_b|={abs(db):.3g} vs K|log eps|={bound:.3g}" if flagged else ""
    return DistanceComparison(res, math.sqrt(epsilon) * L**1.5, flagged, note)
