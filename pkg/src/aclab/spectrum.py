"""Linearized operator -eps Lap + W''(u)/eps on windows: eigenpairs, Morse index, stability forms."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import ndimage

from .ansatz import LayerAnsatz
from .field import Rect, ScalarField2D
from .geometry import nearest_points
from .potential import Potential
from .profile1d import Profile

SQRT2 = math.sqrt(2.0)
MAX_K = 10
RESIDUAL_TOL = 1e-8


def _block(f: ScalarField2D, window: Rect) -> tuple[slice, slice]:
    """Row and column ranges of unknown nodes strictly inside ``window``."""
    X, Y = f.x, f.y
    rows = np.nonzero((Y > window.ymin) & (Y < window.ymax))[0]
    rows = rows[(rows > 0) & (rows < f.ny - 1)]
    if f.periodic_x and window.xmin <= f.x0 and window.xmax >= f.bounds.xmax:
        cols = np.arange(f.nx)
    else:
        cols = np.nonzero((X > window.xmin) & (X < window.xmax))[0]
        if not f.periodic_x:
            cols = cols[(cols > 0) & (cols < f.nx - 1)]
    if rows.size < 5 or cols.size < 5:
        raise ValueError("window holds fewer than 5x5 interior nodes")
    return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)


@dataclass
class LinearizedOperator:
    """v -> -eps Lap_h v + W''(u) v / eps on the window's nodes, zero outside."""

    field: ScalarField2D
    window: Rect
    rows: slice
    cols: slice
    matrix: sp.csr_matrix

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows.stop - self.rows.start, self.cols.stop - self.cols.start)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def to_grid(self, v: np.ndarray) -> np.ndarray:
        """Embed a window vector into a full-grid array (zero outside)."""
        out = np.zeros(self.field.shape)
        out[self.rows, self.cols] = np.asarray(v).reshape(self.shape)
        return out

    def from_grid(self, arr: np.ndarray) -> np.ndarray:
        return np.asarray(arr)[self.rows, self.cols].ravel()


def assemble_linearized(f: ScalarField2D, p: Potential, window: Rect | None = None) -> LinearizedOperator:
    """Window defaults to the grid minus a 10 eps margin."""
    window = f.bounds.shrink(10 * f.epsilon) if window is None else window
    rows, cols = _block(f, window)
    periodic = f.periodic_x and (cols.stop - cols.start) == f.nx
    lap = f.laplacian_matrix(rows, cols, periodic)
    w2 = p.d2W(f.values[rows, cols].ravel())
    M = (-f.epsilon * lap + sp.diags(w2 / f.epsilon)).tocsr()
    return LinearizedOperator(f, window, rows, cols, M)


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    morse_index: int
    window: Rect
    residuals: np.ndarray
    iterations: int
    tol_neg: float
    flagged: bool = False
    note: str = ""

    def to_json(self, path: str | Path, operator: LinearizedOperator | None = None, snapshot_dir: str | Path | None = None) -> None:
        """Eigenvalues, Morse index, window and residuals; eigenvectors optionally as ACF1 snapshots."""
        data = {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "morse_index": int(self.morse_index),
            "window": list(map(float, self.window)),
            "residuals": [float(r) for r in self.residuals],
            "iterations": int(self.iterations),
            "tol_neg": float(self.tol_neg),
            "flagged": bool(self.flagged),
            "note": self.note,
        }
        if operator is not None and snapshot_dir is not None:
            snap = Path(snapshot_dir)
            snap.mkdir(parents=True, exist_ok=True)
            names = []
            for k in range(self.eigenvectors.shape[1]):
                name = snap / f"eigvec_{k}.acf"
                operator.field.with_values(operator.to_grid(self.eigenvectors[:, k])).save(name)
                names.append(str(name))
            data["eigenvector_snapshots"] = names
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def lowest_eigenpairs(L: LinearizedOperator, k: int = MAX_K, tol_neg: float | None = None, max_polish: int = 5) -> SpectralReport:
    """The k lowest eigenpairs by shift-invert Lanczos below the spectrum,
    polished by shifted inverse iteration until ||Lv - lam v|| <= 1e-8 ||v||."""
    if not (1 <= k <= MAX_K):
        raise ValueError(f"k must lie in [1, {MAX_K}]")
    eps = L.field.epsilon
    tol_neg = 1e-6 / eps if tol_neg is None else tol_neg
    A = L.matrix
    k = min(k, A.shape[0] - 2)
    # -eps Lap_h is positive, so every eigenvalue exceeds min W''(u) / eps
    w_min = float(A.diagonal().min()) - 2.0 * eps * (1 / L.field.hx**2 + 1 / L.field.hy**2)
    sigma = w_min - 1.0 / eps
    lu = spla.splu((A - sigma * sp.identity(A.shape[0])).tocsc())
    op = spla.LinearOperator(A.shape, matvec=lu.solve, dtype=float)
    rng = np.random.default_rng(12345)
    v0 = rng.standard_normal(A.shape[0])
    mu, V = spla.eigsh(op, k=k, which="LM", v0=v0, tol=0.0)
    lam = sigma + 1.0 / mu
    order = np.argsort(lam)
    lam, V = lam[order], V[:, order]
    iters = 0
    res = np.linalg.norm(A @ V - V * lam, axis=0) / np.linalg.norm(V, axis=0)
    for _ in range(max_polish):
        if np.all(res <= RESIDUAL_TOL):
            break
        iters += 1
        # one block inverse-iteration sweep with the common shift, then Rayleigh-Ritz
        W = lu.solve(V)
        W, _ = np.linalg.qr(W)
        Hs = W.T @ (A @ W)
        lam, S = np.linalg.eigh(0.5 * (Hs + Hs.T))
        V = W @ S
        res = np.linalg.norm(A @ V - V * lam, axis=0) / np.linalg.norm(V, axis=0)
    V = V / np.linalg.norm(V, axis=0)
    index = int(np.sum(lam < -tol_neg))
    flagged = bool(np.any(res > RESIDUAL_TOL))
    note = "eigenvector residual above 1e-8" if flagged else ""
    if k == MAX_K and lam[-1] < -tol_neg:
        flagged, note = True, "all computed eigenvalues are negative: Morse index >= 10 is not resolved"
    return SpectralReport(lam, V, index, L.window, res, iters, tol_neg, flagged, note)


def morse_index(
    f: ScalarField2D, p: Potential, window: Rect | None = None, tol_neg: float | None = None, k: int = MAX_K
) -> int:
    """Number of eigenvalues below -tol_neg (default 1e-6 / eps) among the lowest k."""
    L = assemble_linearized(f, p, window)
    rep = lowest_eigenpairs(L, k, tol_neg)
    if rep.flagged and rep.note.startswith("all computed"):
        warnings.warn(rep.note, RuntimeWarning, stacklevel=2)
    return rep.morse_index


def stability_Q(f: ScalarField2D, p: Potential, testfn, window: Rect | None = None) -> float:
    """Discrete quadratic form sum_edges eps (difference quotient)^2 + sum_nodes W''(u) phi^2 / eps,
    weighted by hx hy. It equals <L phi, phi> hx hy for the window operator.

    ``testfn`` (grid array or field) must vanish on the boundary ring and,
    when ``window`` is given, outside it.
    """
    phi = np.asarray(testfn.values if isinstance(testfn, ScalarField2D) else testfn, dtype=float)
    if phi.shape != f.shape:
        raise ValueError("test function must live on the field's grid")
    if np.any(phi[f.boundary_mask] != 0.0):
        raise ValueError("test function must vanish on the boundary ring")
    if window is not None:
        rows, cols = _block(f, window)
        inside = np.zeros(f.shape, dtype=bool)
        inside[rows, cols] = True
        if np.any(phi[~inside] != 0.0):
            raise ValueError("test function is not supported in the window")
    eps = f.epsilon
    dy = np.diff(phi, axis=0) / f.hy
    dx = (np.roll(phi, -1, axis=1) - phi) / f.hx if f.periodic_x else np.diff(phi, axis=1) / f.hx
    grad = eps * (np.sum(dx**2) + np.sum(dy**2))
    pot = np.sum(p.d2W(f.values) * phi**2) / eps
    return float((grad + pot) * f.hx * f.hy)


@dataclass
class ReducedStability:
    lhs: float
    gradient_term: float
    mass_term: float
    flagged: bool = False
    note: str = ""

    @property
    def ratio(self) -> float:
        return self.lhs / (self.gradient_term + self.mass_term)


def reduced_stability_check(
    a: LayerAnsatz,
    prof: Profile,
    eta: Callable[[np.ndarray], np.ndarray],
    eta_prime: Callable[[np.ndarray], np.ndarray] | None = None,
    morse: int | None = None,
    x1: np.ndarray | None = None,
) -> ReducedStability:
    """Both sides of the reduced stability inequality in profile units (y = x1 / eps):

    lhs  = sum_a int eta^2 [e^{-sqrt2 d_{a-1}} + e^{sqrt2 d_{a+1}}] dy,
    rhs  = int eta'(y)^2 dy  and  eps^(4/3) int eta^2 dy,

    with d the profile-unit signed distance from (x1, f_a(x1)) to the neighbor
    layers. ``eta`` is a function of x1 in domain units. A state known to be
    unstable (``morse`` > 0) is flagged.
    """
    eps = a.epsilon
    xs = a.x1 if x1 is None else np.asarray(x1, dtype=float)
    e = np.asarray(eta(xs), dtype=float) * np.ones_like(xs)
    ep = np.gradient(e, xs) if eta_prime is None else np.asarray(eta_prime(xs), dtype=float) * np.ones_like(xs)
    weight = np.zeros_like(xs)
    for al in range(a.Q):
        curve = a.interfaces[al]
        pts = np.column_stack([xs, curve(xs)])
        if al > 0:
            weight += np.exp(-SQRT2 * nearest_points(a.interfaces[al - 1], pts).z / eps)
        if al < a.Q - 1:
            weight += np.exp(SQRT2 * nearest_points(a.interfaces[al + 1], pts).z / eps)
    lhs = float(np.trapezoid(e**2 * weight, xs) / eps)
    grad = float(eps * np.trapezoid(ep**2, xs))
    mass = float(eps ** (4.0 / 3.0) * np.trapezoid(e**2, xs) / eps)
    flagged = morse is not None and morse > 0
    return ReducedStability(lhs, grad, mass, flagged, f"Morse index {morse} on the window" if flagged else "")


def count_nodal_domains(f: ScalarField2D, window: Rect | None = None) -> int:
    """Connected components of {u > 0} and {u < 0} (4-connectivity) inside the window.

    A diagnostic only: near-degenerate fields make the count unstable.
    """
    m = f.window_mask(window)
    pos, _ = ndimage.label((f.values > 0) & m)
    neg, _ = ndimage.label((f.values < 0) & m)
    return int(pos.max() + neg.max())
