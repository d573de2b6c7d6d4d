"""The Toda system f_a'' = A1 e^{-sqrt2 (f_a - f_{a-1})} - A2 e^{-sqrt2 (f_{a+1} - f_a)} in one variable."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ansatz import blow_down
from .geometry import InterfaceCurve
from .profile1d import Profile

SQRT2 = math.sqrt(2.0)
COLLISION_GAP = 1e-3


def default_coefficients(prof: Profile) -> tuple[float, float]:
    """A1 = (4/sigma0) A_-^2 and A2 = (4/sigma0) A_+^2 from the profile constants."""
    return 4.0 * prof.A_minus**2 / prof.sigma0, 4.0 * prof.A_plus**2 / prof.sigma0


@dataclass
class TodaState:
    """Samples f[k, a] = f_a(y[k]) and their derivatives; layers ascend in a."""

    y: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    A1: float
    A2: float
    flagged: bool = False
    note: str = ""

    def __post_init__(self):
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        self.f = np.atleast_2d(np.asarray(self.f, dtype=float))
        self.fp = np.atleast_2d(np.asarray(self.fp, dtype=float))
        if self.f.shape != self.fp.shape or self.f.shape[0] != self.y.size:
            raise ValueError("f and fp must have shape (len(y), Q)")
        if self.A1 <= 0 or self.A2 <= 0:
            raise ValueError("Toda coefficients must be positive")
        if self.Q > 1 and np.any(np.diff(self.f, axis=1) <= 0):
            raise ValueError("layers must be strictly ordered f_1 < ... < f_Q")

    @classmethod
    def initial(cls, f0, fp0, A1: float, A2: float, y0: float = 0.0) -> "TodaState":
        return cls(np.array([y0]), np.asarray(f0, dtype=float)[None, :], np.asarray(fp0, dtype=float)[None, :], A1, A2)

    @property
    def Q(self) -> int:
        return self.f.shape[1]

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.f, axis=1)

    def last(self) -> "TodaState":
        return TodaState(self.y[-1:], self.f[-1:], self.fp[-1:], self.A1, self.A2)

    def at(self, y: np.ndarray) -> np.ndarray:
        """Layer values at arbitrary y by cubic Hermite interpolation of (f, f')."""
        from scipy.interpolate import CubicHermiteSpline

        return CubicHermiteSpline(self.y, self.f, self.fp, axis=0)(np.asarray(y, dtype=float))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y"] + [f"f_{a + 1}" for a in range(self.Q)])
            for yk, fk in zip(self.y, self.f):
                w.writerow([repr(float(yk))] + [repr(float(v)) for v in fk])


def toda_rhs(f: np.ndarray, A1: float, A2: float) -> np.ndarray:
    """Accelerations for layer samples f[..., a]; end terms are dropped."""
    f = np.asarray(f, dtype=float)
    acc = np.zeros_like(f)
    if f.shape[-1] < 2:
        return acc
    e = np.exp(-SQRT2 * np.diff(f, axis=-1))
    acc[..., 1:] += A1 * e
    acc[..., :-1] -= A2 * e
    return acc


def hamiltonian(s: TodaState, A: float | None = None) -> np.ndarray:
    """E(y) = sum f_a'^2 / 2 + (A / sqrt2) sum e^{-sqrt2 (f_{a+1} - f_a)}.

    Conserved when A1 = A2 = A (the default uses their mean).
    """
    A = 0.5 * (s.A1 + s.A2) if A is None else A
    return 0.5 * np.sum(s.fp**2, axis=1) + (A / SQRT2) * np.sum(np.exp(-SQRT2 * s.gaps), axis=1)


def momentum(s: TodaState) -> np.ndarray:
    return np.sum(s.fp, axis=1)


def integrate(s: TodaState, y_span: float, step: float) -> TodaState:
    """Velocity Verlet in y from the last sample of ``s`` over a length ``y_span``
    (negative spans integrate backward). Halts and flags the trajectory when a
    gap falls below the collision guard."""
    if step <= 0:
        raise ValueError("step must be positive")
    n = max(1, int(math.ceil(abs(y_span) / step - 1e-9)))
    h = math.copysign(abs(y_span) / n, y_span)
    y0 = s.y[-1]
    f = s.f[-1].copy()
    v = s.fp[-1].copy()
    Q = f.size
    F = np.empty((n + 1, Q))
    V = np.empty((n + 1, Q))
    F[0], V[0] = f, v
    a = toda_rhs(f, s.A1, s.A2)
    flagged, note, last = False, "", n
    for k in range(1, n + 1):
        v_half = v + 0.5 * h * a
        f = f + h * v_half
        a = toda_rhs(f, s.A1, s.A2)
        v = v_half + 0.5 * h * a
        F[k], V[k] = f, v
        if Q > 1 and np.min(np.diff(f)) < COLLISION_GAP:
            flagged, note, last = True, f"layer collision at y = {y0 + k * h:.6g}", k - 1
            break
    y = y0 + h * np.arange(last + 1)
    return TodaState(y, F[: last + 1], V[: last + 1], s.A1, s.A2, flagged, note)


def cosh_solution(y: np.ndarray, b: float, A1: float, A2: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed form gap w = sqrt2 log cosh(a y) + b of w'' = (A1 + A2) e^{-sqrt2 w}, and w'."""
    a = math.sqrt((A1 + A2) * math.exp(-SQRT2 * b) / SQRT2)
    y = np.asarray(y, dtype=float)
    ay = a * y
    # log cosh without overflow
    lc = np.abs(ay) + np.log1p(np.exp(-2 * np.abs(ay))) - math.log(2.0)
    return SQRT2 * lc + b, SQRT2 * a * np.tanh(ay)


def solve_symmetric_bvp(
    Q: int,
    gap_at_origin: float,
    y_span: float,
    A1: float,
    A2: float,
    step: float = 1e-3,
) -> TodaState:
    """The even solution on [-y_span/2, y_span/2] with minimal gap ``gap_at_origin`` at y = 0.

    Evenness fixes f' = 0 at the origin and the layers sit symmetrically about
    zero there, so the solution is an initial value problem integrated
    outward and mirrored; no shooting is needed for Q = 2 or 3.
    """
    if Q not in (2, 3):
        raise ValueError("symmetric solutions are provided for Q = 2 and Q = 3")
    if gap_at_origin <= 0:
        raise ValueError("gap_at_origin must be positive")
    b = gap_at_origin
    f0 = np.array([-b / 2, b / 2]) if Q == 2 else np.array([-b, 0.0, b])
    half = integrate(TodaState.initial(f0, np.zeros(Q), A1, A2), 0.5 * y_span, step)
    y = np.concatenate([-half.y[:0:-1], half.y])
    f = np.concatenate([half.f[:0:-1], half.f])
    fp = np.concatenate([-half.fp[:0:-1], half.fp])
    return TodaState(y, f, fp, A1, A2, half.flagged, half.note)


def project_to_interfaces(s: TodaState, epsilon: float, alpha0: int = 1) -> list[InterfaceCurve]:
    """Inverse blow-up map f_a(x) = eps [f~_a(x / sqrt eps) + (sqrt2 a / 2) |log eps|],
    with a = alpha0, alpha0 + 1, ... for the layers in order."""
    if not (0.0 < epsilon <= 0.2):
        raise ValueError("epsilon must lie in (0, 0.2]")
    return blow_down(s.y, s.f.T, epsilon, alpha0)
