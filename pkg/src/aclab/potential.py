"""Double-well potentials W with wells at -1 and +1, normalized so W''(+-1) = 2."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy.interpolate import BPoly

ArrayFn = Callable[[np.ndarray], np.ndarray]

# Gauss-Legendre rule on [0, 1] for the Taylor-remainder integrals near the wells.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W

# Below this distance to a well, W and W' are rebuilt from W'' to keep relative accuracy.
NEAR_WELL = 1e-3


@dataclass(frozen=True)
class Potential:
    """A double-well potential given by exact evaluators for W, W' and W''.

    The wells sit at u = -1 and u = +1. Derivatives are supplied rather than
    differenced so that W'' stays exact for the spectral computations.
    """

    W: ArrayFn
    dW: ArrayFn
    d2W: ArrayFn
    kind: str = "custom"
    wells: tuple[float, float] = (-1.0, 1.0)
    meta: dict = field(default_factory=dict, compare=False)

    def curvature_at_well(self, well: int) -> float:
        return float(self.d2W(np.array([float(well)]))[0])

    def decay_rate(self, well: int) -> float:
        """Exponential rate sqrt(W''(well)) at which the profile approaches a well."""
        return float(np.sqrt(self.curvature_at_well(well)))

    def _taylor_weights(self, delta: np.ndarray, well: int) -> tuple[np.ndarray, np.ndarray]:
        # u = well - sign(well) * tau * delta sampled on the Gauss nodes, shape (..., 12)
        d = np.asarray(delta, dtype=float)[..., None]
        u = well - np.sign(well) * _GL_X * d
        w2 = self.d2W(u)
        return w2, d

    def root_ratio(self, delta: np.ndarray, well: int) -> np.ndarray:
        """sqrt(2 W(u)) / delta at distance ``delta`` from ``well`` (+1 or -1).

        For small delta the value comes from the integral Taylor remainder
        W(well -+ delta) = delta^2 * int_0^1 (1 - tau) W''(well -+ tau delta) dtau,
        which stays accurate after ``well -+ delta`` rounds to the well itself.
        """
        delta = np.asarray(delta, dtype=float)
        out = np.empty_like(delta)
        small = delta < NEAR_WELL
        if np.any(small):
            w2, _ = self._taylor_weights(delta[small], well)
            out[small] = np.sqrt(2.0 * (w2 * (1.0 - _GL_X) * _GL_W).sum(axis=-1))
        big = ~small
        if np.any(big):
            d = delta[big]
            u = well - np.sign(well) * d
            out[big] = np.sqrt(2.0 * np.maximum(self.W(u), 0.0)) / d
        return out

    def W_near(self, delta: np.ndarray, well: int) -> np.ndarray:
        """W at distance ``delta`` from ``well``, accurate in relative terms."""
        delta = np.asarray(delta, dtype=float)
        r = self.root_ratio(delta, well)
        return 0.5 * (r * delta) ** 2

    def dW_near(self, delta: np.ndarray, well: int) -> np.ndarray:
        """W' at distance ``delta`` from ``well``, accurate in relative terms."""
        delta = np.asarray(delta, dtype=float)
        out = np.empty_like(delta)
        small = delta < NEAR_WELL
        if np.any(small):
            w2, d = self._taylor_weights(delta[small], well)
            # W'(well - s delta) - W'(well) = -s delta int_0^1 W''(...) dtau, s = sign(well)
            out[small] = -np.sign(well) * d[..., 0] * (w2 * _GL_W).sum(axis=-1)
        big = ~small
        if np.any(big):
            out[big] = self.dW(well - np.sign(well) * delta[big])
        return out


def make_quartic() -> Potential:
    """The standard model W(u) = (1 - u^2)^2 / 4."""
    return Potential(
        W=lambda u: 0.25 * (1.0 - np.asarray(u) ** 2) ** 2,
        dW=lambda u: np.asarray(u) ** 3 - np.asarray(u),
        d2W=lambda u: 3.0 * np.asarray(u) ** 2 - 1.0,
        kind="quartic",
    )


@dataclass
class ValidationReport:
    violations: dict[str, float]
    tol: float
    grid_step: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.violations.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.violations.items() if v > self.tol]


MAX_VALIDATION_STEP = 0.5


def validate(p: Potential, grid_step: float, tol: float = 1e-8) -> ValidationReport:
    """Sample ``p`` on [-1, 1] and report the worst violation of each invariant.

    Reported invariants: ``well value`` |W(+-1)|, ``well slope`` |W'(+-1)|,
    ``well curvature`` |W''(+-1) - 2|, ``interior positivity`` (how far the
    minimum of W over interior samples falls below zero, or 1 if it is exactly
    zero), ``critical points`` (|W'(0)| plus the number of extra sign changes of
    W' among interior samples).
    """
    if not (0.0 < grid_step <= MAX_VALIDATION_STEP):
        raise ValueError(f"grid_step must lie in (0, {MAX_VALIDATION_STEP}], got {grid_step}")
    n = int(round(2.0 / grid_step))
    u = np.linspace(-1.0, 1.0, n + 1)
    ends = np.array([-1.0, 1.0])
    v = {
        "well value": float(np.max(np.abs(p.W(ends)))),
        "well slope": float(np.max(np.abs(p.dW(ends)))),
        "well curvature": float(np.max(np.abs(p.d2W(ends) - 2.0))),
    }
    inner = u[1:-1]
    if inner.size:
        wmin = float(np.min(p.W(inner)))
        v["interior positivity"] = max(0.0, -wmin) if wmin != 0.0 else 1.0
        dw = p.dW(inner)
        signs = np.sign(dw[np.abs(dw) > tol])
        changes = int(np.count_nonzero(np.diff(signs)))
        v["critical points"] = float(abs(p.dW(np.array([0.0]))[0])) + max(0, changes - 1)
    else:
        v["interior positivity"] = 0.0
        v["critical points"] = float(abs(p.dW(np.array([0.0]))[0]))
    return ValidationReport(violations=v, tol=tol, grid_step=grid_step)


def _from_table(u, W, Wp, Wpp) -> Potential:
    poly = BPoly.from_derivatives(u, np.column_stack([W, Wp, Wpp]))
    d1 = poly.derivative(1)
    d2 = poly.derivative(2)
    return Potential(
        W=lambda x: poly(np.asarray(x, dtype=float)),
        dW=lambda x: d1(np.asarray(x, dtype=float)),
        d2W=lambda x: d2(np.asarray(x, dtype=float)),
        kind="table",
        meta={"nodes": len(u)},
    )


def _from_poly(u, W, Wp, Wpp, deg: int | None) -> Potential:
    n = len(u)
    deg = min(3 * n - 1, 12) if deg is None else deg
    eye = np.eye(deg + 1)
    rows = []
    for k in range(3):
        rows.append(np.column_stack([cheb.chebval(u, cheb.chebder(eye[j], k) if k else eye[j]) for j in range(deg + 1)]))
    A = np.vstack(rows)
    b = np.concatenate([W, Wp, Wpp])
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    misfit = float(np.max(np.abs(A @ coef - b)))
    if misfit > 1e-8 * max(1.0, float(np.max(np.abs(b)))):
        raise ValueError(f"poly potential: rows are not samples of a degree-{deg} polynomial (misfit {misfit:.2e})")
    c1 = cheb.chebder(coef, 1)
    c2 = cheb.chebder(coef, 2)
    return Potential(
        W=lambda x: cheb.chebval(np.asarray(x, dtype=float), coef),
        dW=lambda x: cheb.chebval(np.asarray(x, dtype=float), c1),
        d2W=lambda x: cheb.chebval(np.asarray(x, dtype=float), c2),
        kind="poly",
        meta={"degree": deg},
    )


def load_potential(path: str | Path) -> Potential:
    """Read a potential from a text file.

    The first line is ``kind=table`` or ``kind=poly`` (optionally followed by
    ``deg=<n>`` for poly); every further non-blank, non-``#`` line holds
    ``u W Wp Wpp``. ``table`` builds a piecewise quintic Hermite interpolant
    through the rows; ``poly`` recovers the polynomial the rows were sampled from.
    """
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty potential file")
    header = dict(tok.split("=", 1) for tok in lines[0].split() if "=" in tok)
    kind = header.get("kind")
    if kind not in ("table", "poly"):
        raise ValueError(f"{path}: header must be kind=table|poly, got {lines[0]!r}")
    data = np.array([[float(x) for x in ln.split()] for ln in lines[1:]])
    if data.ndim != 2 or data.shape[1] != 4 or data.shape[0] < 2:
        raise ValueError(f"{path}: expected at least two rows of 'u W Wp Wpp'")
    data = data[np.argsort(data[:, 0])]
    u, W, Wp, Wpp = data.T
    if kind == "table":
        return _from_table(u, W, Wp, Wpp)
    return _from_poly(u, W, Wp, Wpp, int(header["deg"]) if "deg" in header else None)
