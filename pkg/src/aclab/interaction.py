"""Interaction integrals between a profile and a translated copy of itself."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .profile1d import Profile, tail_constants

SQRT2 = math.sqrt(2.0)
ERROR_RATE = 4.0 * SQRT2 / 3.0


class ExpansionBoundError(RuntimeError):
    """The expansion remainder does not follow the expected exponential envelope."""


@dataclass(frozen=True)
class InteractionReport:
    T: float
    integral_value: float
    leading_term: float
    variant: str = "lower"

    @property
    def absolute_error(self) -> float:
        return abs(self.integral_value - self.leading_term)

    @property
    def relative_error(self) -> float:
        return self.absolute_error / abs(self.leading_term)


def _shifted(prof: Profile, s: np.ndarray, well: int) -> np.ndarray:
    """g(s) - well, computed without cancellation on the side of ``well``."""
    d = prof.gap_at(s)
    if well < 0:
        return np.where(s < 0.0, d, 2.0 - d)
    return np.where(s > 0.0, -d, -2.0 + d)


def interaction_integral(prof: Profile, T: float, variant: str = "lower") -> float:
    """Trapezoid value over the profile grid of

    ``lower``: int [W''(g(t)) - W''(1)] [g(-t - T) + 1] g'(t) dt
    ``upper``: int [W''(g(t)) - W''(1)] [g(T - t) - 1] g'(t) dt
    """
    if not (2.0 <= T <= 0.75 * prof.T_max):
        raise ValueError(f"T = {T} outside [2, 3 T_max / 4 = {0.75 * prof.T_max}]")
    t = prof.t
    w2 = prof.potential.d2W(prof.g) - prof.potential.curvature_at_well(1)
    if variant == "lower":
        shifted = _shifted(prof, -t - T, -1)
    elif variant == "upper":
        shifted = _shifted(prof, T - t, +1)
    else:
        raise ValueError(f"variant must be 'lower' or 'upper', got {variant!r}")
    return float(np.trapezoid(w2 * shifted * prof.gp, dx=prof.h_t))


def leading_term(prof: Profile, T: float, variant: str = "lower") -> float:
    if prof.A_plus is None:
        a_plus, a_minus = tail_constants(prof)
    else:
        a_plus, a_minus = prof.A_plus, prof.A_minus
    if variant == "lower":
        return -4.0 * a_minus**2 * math.exp(-SQRT2 * T)
    return 4.0 * a_plus**2 * math.exp(-SQRT2 * T)


def interaction_report(prof: Profile, T: float, variant: str = "lower") -> InteractionReport:
    return InteractionReport(T, interaction_integral(prof, T, variant), leading_term(prof, T, variant), variant)


def envelope_ratio(reports: list[InteractionReport]) -> float:
    """max/min over the list of absolute_error / e^{-(4 sqrt2 / 3) T}."""
    r = [rep.absolute_error / math.exp(-ERROR_RATE * rep.T) for rep in reports]
    return max(r) / min(r)


def error_slope(reports: list[InteractionReport]) -> float:
    """Least-squares slope of log(absolute_error) against T."""
    T = np.array([r.T for r in reports])
    e = np.log([r.absolute_error for r in reports])
    return float(np.polyfit(T, e, 1)[0])


def expansion_error_scan(
    prof: Profile,
    T_list: Iterable[float],
    variant: str = "lower",
    max_ratio: float | None = 20.0,
) -> list[InteractionReport]:
    """Interaction reports on an ascending list of separations.

    Raises :class:`ExpansionBoundError` when the remainders, divided by
    e^{-(4 sqrt2/3) T}, spread by more than ``max_ratio`` across the list.
    """
    T_list = [float(T) for T in T_list]
    if not T_list:
        return []
    if any(b <= a for a, b in zip(T_list, T_list[1:])):
        raise ValueError("T_list must be strictly ascending")
    if T_list[0] < 4.0 or T_list[-1] > 0.75 * prof.T_max:
        raise ValueError(f"scan separations must lie in [4, {0.75 * prof.T_max}]")
    reports = [interaction_report(prof, T, variant) for T in T_list]
    if max_ratio is not None and len(reports) > 1:
        ratio = envelope_ratio(reports)
        if ratio > max_ratio:
            raise ExpansionBoundError(f"remainder envelope ratio {ratio:.2f} exceeds {max_ratio}")
    return reports


def write_scan_csv(reports: list[InteractionReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["T", "integral", "leading", "abs_err", "rel_err"])
        for r in reports:
            w.writerow([repr(r.T), repr(r.integral_value), repr(r.leading_term), repr(r.absolute_error), repr(r.relative_error)])
