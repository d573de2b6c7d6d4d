"""The 1D heteroclinic profile g'' = W'(g), its constants, and its cutoff version.

The profile is computed from the first integral g' = sqrt(2 W(g)) written in the
log-distance variable s = -log(1 - |g|), where dt/ds = 1 / q(e^{-s}) with
q(d) = sqrt(2 W) / d is smooth and bounded away from zero on every half line.
The samples keep the distance to the nearest well, ``gap = 1 - |g|``, so tail
quantities keep full relative precision long after g itself rounds to +-1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .potential import Potential

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_PANEL = 0.05


@dataclass(frozen=True)
class Profile:
    """Samples of the heteroclinic g on the uniform grid t_k = -T_max + k h_t."""

    potential: Potential
    t: np.ndarray
    g: np.ndarray
    gp: np.ndarray
    gpp: np.ndarray
    gap: np.ndarray
    T_max: float
    h_t: float
    sigma0: float | None = None
    A_plus: float | None = None
    A_minus: float | None = None
    mu: float | None = None

    @property
    def center(self) -> int:
        return (len(self.t) - 1) // 2

    def first_integral_residual(self) -> float:
        return float(np.max(np.abs(self.gp - np.sqrt(2.0 * np.maximum(self.potential.W(self.g), 0.0)))))

    def gap_at(self, t) -> np.ndarray:
        """1 - |g(t)| at arbitrary points, with relative accuracy in the tails."""
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        pos = t >= 0.0
        out[pos] = self._branch_gap(t[pos], +1)
        out[~pos] = self._branch_gap(t[~pos], -1)
        return out

    def _branch_gap(self, t: np.ndarray, side: int) -> np.ndarray:
        c = self.center
        if side > 0:
            nodes = self.t[c:]
            d, dp, dpp = self.gap[c:], -self.gp[c:], -self.gpp[c:]
            s = t
        else:
            # mirror the negative half onto increasing abscissae
            nodes = -self.t[c::-1]
            d, dp, dpp = self.gap[c::-1], -self.gp[c::-1], self.gpp[c::-1]
            s = -t
        out = np.empty_like(s)
        inside = s <= nodes[-1]
        out[inside] = _quintic_hermite(nodes[0], self.h_t, d, dp, dpp, s[inside])
        if np.any(~inside):
            rate = self.potential.decay_rate(side)
            out[~inside] = d[-1] * np.exp(-rate * (s[~inside] - nodes[-1]))
        return out

    def evaluate(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """g, g', g'' at arbitrary t.

        Only the well distance is interpolated; g' and g'' are then rebuilt from
        the first integral and the equation, so they satisfy both exactly.
        """
        t = np.asarray(t, dtype=float)
        d = self.gap_at(t)
        g = np.empty_like(t)
        gp = np.empty_like(t)
        gpp = np.empty_like(t)
        for side, mask in ((+1, t >= 0.0), (-1, t < 0.0)):
            dm = d[mask]
            g[mask] = side * (1.0 - dm)
            gp[mask] = dm * self.potential.root_ratio(dm, side)
            gpp[mask] = self.potential.dW_near(dm, side)
        return g, gp, gpp


def _quintic_hermite(x0: float, h: float, y, dy, d2y, x) -> np.ndarray:
    """Piecewise quintic Hermite interpolation on the uniform grid x0 + k h."""
    y, dy, d2y = np.asarray(y), np.asarray(dy), np.asarray(d2y)
    u = (np.asarray(x, dtype=float) - x0) / h
    i = np.clip(np.floor(u).astype(int), 0, len(y) - 2)
    s = u - i
    s2, s3 = s * s, s * s * s
    s4, s5 = s3 * s, s3 * s2
    h00 = 1 - 10 * s3 + 15 * s4 - 6 * s5
    h01 = 10 * s3 - 15 * s4 + 6 * s5
    h10 = s - 6 * s3 + 8 * s4 - 3 * s5
    h11 = -4 * s3 + 7 * s4 - 3 * s5
    h20 = 0.5 * (s2 - 3 * s3 + 3 * s4 - s5)
    h21 = 0.5 * (s3 - 2 * s4 + s5)
    return (
        y[i] * h00 + y[i + 1] * h01
        + h * (dy[i] * h10 + dy[i + 1] * h11)
        + h * h * (d2y[i] * h20 + d2y[i + 1] * h21)
    )


def _half_line(p: Potential, well: int, targets: np.ndarray) -> np.ndarray:
    """Log-distances s_k with |t(s_k)| = targets_k on the half line towards ``well``."""

    def speed(s):
        return 1.0 / p.root_ratio(np.exp(-s), well)

    rate = p.decay_rate(well)
    s_max = rate * (targets[-1] + 1.0) + 10.0
    edges = np.arange(0.0, s_max + _PANEL, _PANEL)
    a, b = edges[:-1], edges[1:]
    nodes = 0.5 * (b - a)[:, None] * _GL_X + 0.5 * (a + b)[:, None]
    v = speed(nodes)
    if not np.all(np.isfinite(v)):
        raise ValueError("W vanishes inside (-1, 1): the first integral is singular away from the wells")
    cum = np.concatenate([[0.0], np.cumsum(0.5 * _PANEL * (v @ _GL_W))])
    if cum[-1] < targets[-1]:
        raise ValueError("profile quadrature did not reach T_max")

    s = np.interp(targets, cum, edges)
    for _ in range(12):
        j = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, len(a) - 1)
        lo = edges[j]
        half = 0.5 * (s - lo)
        part = half * (speed(half[:, None] * _GL_X + (lo + half)[:, None]) @ _GL_W)
        res = cum[j] + part - targets
        s = s - res / speed(s)
        if np.max(np.abs(res)) < 1e-15 * max(1.0, targets[-1]):
            break
    return s


def solve_profile(p: Potential, T_max: float = 20.0, h_t: float = 0.01, constants: bool = True) -> Profile:
    """Heteroclinic profile on [-T_max, T_max] with g(0) = 0.

    With ``constants`` the returned profile also carries sigma0, A_plus,
    A_minus and mu.
    """
    if T_max < 10.0:
        raise ValueError(f"T_max must be >= 10, got {T_max}")
    if not (0.0 < h_t <= 0.01):
        raise ValueError(f"h_t must lie in (0, 0.01], got {h_t}")
    m = int(round(T_max / h_t))
    T_max = m * h_t
    targets = h_t * np.arange(m + 1)

    s_pos = _half_line(p, +1, targets)
    s_neg = _half_line(p, -1, targets)
    d_pos, d_neg = np.exp(-s_pos), np.exp(-s_neg)

    gap = np.concatenate([d_neg[:0:-1], d_pos])
    g = np.concatenate([-(1.0 - d_neg[:0:-1]), 1.0 - d_pos])
    gp = np.concatenate([
        (d_neg * p.root_ratio(d_neg, -1))[:0:-1],
        d_pos * p.root_ratio(d_pos, +1),
    ])
    gpp = np.concatenate([p.dW_near(d_neg, -1)[:0:-1], p.dW_near(d_pos, +1)])
    t = h_t * np.arange(-m, m + 1)
    g[m] = 0.0

    prof = Profile(potential=p, t=t, g=g, gp=gp, gpp=gpp, gap=gap, T_max=T_max, h_t=h_t)
    if constants:
        a_plus, a_minus = tail_constants(prof)
        prof = replace(prof, sigma0=energy_sigma0(prof), A_plus=a_plus, A_minus=a_minus, mu=spectral_gap(prof))
    return prof


def energy_sigma0(prof: Profile) -> float:
    """Trapezoid value of int (g'^2 / 2 + W(g)) dt."""
    dens = 0.5 * prof.gp**2 + prof.potential.W(prof.g)
    return float(np.trapezoid(dens, dx=prof.h_t))


def equipartition_defect(prof: Profile) -> float:
    return abs(float(np.trapezoid(prof.gp**2, dx=prof.h_t)) - energy_sigma0(prof))


def tail_constants(prof: Profile, shift: float = 0.0) -> tuple[float, float]:
    """Amplitudes A_plus, A_minus of 1 -+ g ~ A e^{-rate |t|} at the two wells.

    The intercept is fitted with the slope pinned to -sqrt(W''(+-1)) over the
    window |t| in [T_max/2, 3 T_max/4] (moved outwards by ``shift``); a free
    least-squares slope off by more than 1% rejects the fit.
    """
    T = prof.T_max
    if T < 10.0:
        raise ValueError("tail fit needs T_max >= 10")
    lo, hi = T / 2 + shift, 3 * T / 4 + shift
    if hi > T:
        raise ValueError("tail-fit window leaves the profile grid")
    out = []
    for side in (+1, -1):
        tt = side * prof.t
        mask = (tt >= lo - 1e-12) & (tt <= hi + 1e-12)
        x, y = tt[mask], np.log(prof.gap[mask])
        rate = prof.potential.decay_rate(side)
        slope = np.polyfit(x, y, 1)[0]
        if abs(slope + rate) > 0.01 * rate:
            raise ValueError(f"tail fit rejected: slope {slope:.6f} vs expected {-rate:.6f}")
        out.append(float(np.exp(np.mean(y + rate * x))))
    return out[0], out[1]


def linearized_spectrum(prof: Profile, k: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``k`` eigenpairs of -d^2/dt^2 + W''(g) with Dirichlet ends."""
    h = prof.h_t
    gi = prof.g[1:-1]
    diag = 2.0 / h**2 + prof.potential.d2W(gi)
    off = -np.ones(len(gi) - 1) / h**2
    vals, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))
    return vals, vecs


def spectral_gap(prof: Profile, zero_tol: float = 1e-4) -> float:
    """Second eigenvalue of the linearized 1D operator; the first must vanish."""
    vals, vecs = linearized_spectrum(prof, 2)
    if abs(vals[0]) > zero_tol:
        raise ValueError(f"lowest eigenvalue {vals[0]:.3e} is not zero within {zero_tol}: grid too coarse")
    return float(vals[1])


def zero_mode_alignment(prof: Profile) -> tuple[float, float]:
    """(|<v0, g'>|, |<v1, g'>|) for unit eigenvectors and normalized g'."""
    _, vecs = linearized_spectrum(prof, 2)
    w = prof.gp[1:-1] / np.linalg.norm(prof.gp[1:-1])
    return float(abs(vecs[:, 0] @ w)), float(abs(vecs[:, 1] @ w))


# -- cutoff profile ---------------------------------------------------------------


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10 - 15 * x + 6 * x**2), 30 * x**2 * (1 - x) ** 2, 60 * x * (1 - x) * (1 - 2 * x)


def mollifier(x):
    """zeta(x) and its first two derivatives: 1 on |x| <= 1, 0 on |x| >= 2."""
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    S, dS, d2S = _smoothstep(a - 1.0)
    return 1.0 - S, -np.sign(x) * dS, -d2S


@dataclass(frozen=True)
class CutoffProfile:
    """The profile glued to sgn(t) between 3|log eps| and 6|log eps|."""

    profile: Profile
    epsilon: float
    t: np.ndarray
    gbar: np.ndarray
    gbar_p: np.ndarray
    gbar_pp: np.ndarray
    xi: np.ndarray

    @property
    def inner_radius(self) -> float:
        return 3.0 * abs(math.log(self.epsilon))

    @property
    def outer_radius(self) -> float:
        return 6.0 * abs(math.log(self.epsilon))

    def evaluate(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        gb, gbp, gbpp, _ = _cutoff_values(self.profile, np.asarray(t, dtype=float), self.inner_radius)
        return gb, gbp, gbpp

    def energy(self) -> float:
        """Trapezoid value of int gbar'^2 dt."""
        return float(np.trapezoid(self.gbar_p**2, dx=self.profile.h_t))

    def xi_support(self, tol: float = 0.0) -> tuple[float, float]:
        """Smallest and largest |t| where |xi| > tol (nan if xi vanishes)."""
        tt = np.abs(self.t[np.abs(self.xi) > tol])
        if tt.size == 0:
            return math.nan, math.nan
        return float(tt.min()), float(tt.max())


def _cutoff_values(prof: Profile, t: np.ndarray, L: float):
    p = prof.potential
    d = prof.gap_at(t)
    _, gp, gpp = prof.evaluate(t)
    z, dz, d2z = mollifier(t / L)
    sgn = np.where(t >= 0.0, 1.0, -1.0)
    # g - sgn = -sgn * d
    diff = -sgn * d
    gb = sgn + z * diff
    gb[t == 0.0] = 0.0
    gbp = dz / L * diff + z * gp
    gbpp = d2z / L**2 * diff + 2.0 * dz / L * gp + z * gpp
    # W'(gbar) through the distance z*d of gbar to its well
    zd = z * d
    wp = np.empty_like(t)
    for side in (+1, -1):
        m = sgn == side
        wp[m] = p.dW_near(zd[m], side)
    xi = gbpp - wp
    return gb, gbp, gbpp, xi


def cutoff_profile(prof: Profile, epsilon: float) -> CutoffProfile:
    if not (0.0 < epsilon <= 0.2):
        raise ValueError(f"epsilon must lie in (0, 0.2], got {epsilon}")
    if 6.0 * abs(math.log(epsilon)) > prof.T_max:
        raise ValueError(f"6|log eps| = {6 * abs(math.log(epsilon)):.3f} exceeds T_max = {prof.T_max}")
    L = 3.0 * abs(math.log(epsilon))
    gb, gbp, gbpp, xi = _cutoff_values(prof, prof.t, L)
    return CutoffProfile(profile=prof, epsilon=epsilon, t=prof.t, gbar=gb, gbar_p=gbp, gbar_pp=gbpp, xi=xi)
