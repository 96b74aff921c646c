"""
Identified sets for the long-regression coefficient under proportional selection.

For a fixed selection ratio delta and R2_long, the identified set is the
root set of a cubic in the omitted variable bias B = beta_med - b, minus the
points where gamma_1,long would vanish. This module builds that cubic,
solves it, inverts it for delta(b), and assembles cumulative sets over
|delta| <= delta_bar as exact interval unions.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import numpy.polynomial.polynomial as poly

from .. import config
from .error_handler import InputError, ModelError
from .intervals import INF, Interval, IntervalUnion
from .moments import RegressionSummary, is_degenerate_r2
from .polynomials import poly_scale, real_roots

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MagnitudeBound:
    """Bound M on |b - beta_med|, absolute or a multiple p of |beta_med|."""

    kind: str = 'none'
    value: float = INF

    @classmethod
    def parse(cls, text: str) -> 'MagnitudeBound':
        """Parse 'inf', '2x' (multiple of |beta_med|) or 'abs:0.5'."""
        raw = str(text).strip().lower()
        try:
            if raw in ('inf', '+inf', 'none'):
                bound = cls()
            elif raw.endswith('x'):
                bound = cls('multiple', float(raw[:-1]))
            elif raw.startswith('abs:'):
                bound = cls('absolute', float(raw[4:]))
            else:
                bound = cls('absolute', float(raw))
        except ValueError:
            bound = None
        if bound is None or math.isnan(bound.value) or bound.value < 0:
            raise InputError(f"bad magnitude bound {text!r}", kind="bad_flag", flag="--m",
                             value=text, expected="inf, a multiple like 2x, or abs:0.5")
        return bound

    def resolve(self, beta_med: float) -> float:
        if self.kind == 'none':
            return INF
        if self.kind == 'multiple':
            return self.value * abs(beta_med)
        return self.value

    def label(self) -> str:
        if self.kind == 'none':
            return "inf"
        if self.kind == 'multiple':
            return f"{self.value:g}x|beta_med|"
        return f"{self.value:g}"


@dataclass(frozen=True)
class SensitivitySpec:
    """The analyst's assumptions: exact delta or a bound delta_bar, R2_long, optional M."""

    r2long: float
    delta: Optional[float] = None
    delta_bar: Optional[float] = None
    m_bound: MagnitudeBound = field(default_factory=MagnitudeBound)

    def __post_init__(self):
        if (self.delta is None) == (self.delta_bar is None):
            raise InputError("give exactly one of delta and delta_bar", kind="bad_flag",
                             flag="--delta/--delta-bar", value=(self.delta, self.delta_bar),
                             expected="one of the two")
        if self.delta is not None and not math.isfinite(self.delta):
            raise InputError("delta must be finite", kind="bad_flag", flag="--delta",
                             value=self.delta, expected="a finite real")
        if self.delta_bar is not None and not (self.delta_bar >= 0 and math.isfinite(self.delta_bar)):
            raise InputError("delta_bar must be finite and >= 0", kind="bad_flag",
                             flag="--delta-bar", value=self.delta_bar, expected="a finite value >= 0")

    @property
    def bounded(self) -> bool:
        return self.delta_bar is not None

    def magnitude(self, summary: RegressionSummary) -> float:
        return self.m_bound.resolve(summary.beta_med)


@dataclass(frozen=True)
class CubicCoeffs:
    """f(B) = c3 B^3 + c2 B^2 + c1 B + c0 for fixed delta and R2_long."""

    c3: float
    c2: float
    c1: float
    c0: float
    delta: float
    r2long: float

    @property
    def ascending(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2, self.c3])

    def __call__(self, bias):
        return poly.polyval(bias, self.ascending)


@dataclass(frozen=True)
class A3FailInfo:
    """Where gamma_1,long = gamma_med + (beta_med - b) pi1 vanishes."""

    proportional: bool
    c_med: Optional[float]
    b_fail: Optional[float]
    rel_residual: float = 0.0


@dataclass(frozen=True)
class IdentifiedSetPoints:
    """Finite identified set for fixed delta and R2_long."""

    roots: Tuple[float, ...]
    excluded: Tuple[float, ...] = ()
    degenerate_medium: bool = False
    delta: Optional[float] = None
    r2long: Optional[float] = None

    @property
    def empty(self) -> bool:
        return not self.roots

    def __str__(self) -> str:
        body = "{" + ", ".join(f"{r:.6g}" for r in self.roots) + "}"
        if self.excluded:
            body += " (excluded: " + ", ".join(f"{b:.6g}" for b in self.excluded) + ")"
        return body


def f0_coefficients(summary: RegressionSummary) -> np.ndarray:
    """Ascending coefficients of f0(B) = -B V (v_pi B^2 + 2 c_g B + v_g)."""
    v = summary.v_x_perp_w1
    return np.array([0.0, -v * summary.v_g, -2.0 * v * summary.c_g, -v * summary.v_pi])


def f1_coefficients(summary: RegressionSummary, r2long: float) -> np.ndarray:
    """Ascending coefficients of f1(B) = (c_g + v_pi B)(V B^2 + dR var_y)."""
    v = summary.v_x_perp_w1
    d = summary.delta_r(r2long)
    return np.array([d * summary.c_g, d * summary.v_pi, v * summary.c_g, v * summary.v_pi])


def _scale(summary: RegressionSummary, r2long: float) -> float:
    return float(max(np.max(np.abs(f0_coefficients(summary))),
                     np.max(np.abs(f1_coefficients(summary, r2long))),
                     np.finfo(float).tiny))


def exclusion_tolerance(summary: RegressionSummary) -> float:
    return config.ROOT_DEDUP_REL * (1.0 + abs(summary.beta_med))


def fit_proportionality(summary: RegressionSummary) -> Tuple[float, float]:
    """
    Var(W1)-weighted least squares fit gamma_med ~ C pi1.

    Returns (C, relative residual norm).
    """
    s = summary.var_w1
    pi1, gamma = summary.pi1, summary.gamma_med
    denom = float(pi1 @ s @ pi1)
    if denom <= 0.0 or not np.any(pi1):
        raise ModelError("pi1 is zero", kind="unexpected")
    c_med = float(pi1 @ s @ gamma) / denom
    resid = gamma - c_med * pi1
    norm_gamma = math.sqrt(max(float(gamma @ s @ gamma), 0.0))
    if summary.dim_w1 == 1:
        return c_med, 0.0
    if norm_gamma == 0.0:
        return c_med, 0.0
    return c_med, math.sqrt(max(float(resid @ s @ resid), 0.0)) / norm_gamma


def a3fail_info(summary: RegressionSummary) -> A3FailInfo:
    """The set of b implying gamma_1,long = 0: a single point when gamma_med is proportional to pi1."""
    if not np.any(summary.pi1):
        return A3FailInfo(False, None, None, 1.0)
    c_med, rel = fit_proportionality(summary)
    if rel <= config.PROPORTIONALITY_TOL:
        return A3FailInfo(True, c_med, summary.beta_med + c_med, rel)
    return A3FailInfo(False, c_med, None, rel)


def cubic_coefficients(summary: RegressionSummary, delta: float, r2long: float) -> CubicCoeffs:
    """Coefficients of f(B, delta, R2_long) = f0(B) + delta f1(B, R2_long)."""
    v = summary.v_x_perp_w1
    d = summary.delta_r(r2long)
    return CubicCoeffs(
        c3=v * summary.v_pi * (delta - 1.0),
        c2=v * summary.c_g * (delta - 2.0),
        c1=delta * d * summary.v_pi - v * summary.v_g,
        c0=delta * d * summary.c_g,
        delta=delta,
        r2long=r2long,
    )


def solve_identified_set(summary: RegressionSummary, delta: float, r2long: float) -> IdentifiedSetPoints:
    """Real roots b of the cubic, with the gamma_1,long = 0 point removed."""
    if is_degenerate_r2(summary, r2long):
        return IdentifiedSetPoints((summary.beta_med,), (), True, delta, r2long)

    coeffs = cubic_coefficients(summary, delta, r2long).ascending
    tol = exclusion_tolerance(summary)
    info = a3fail_info(summary)
    excluded: List[float] = []
    if info.b_fail is not None:
        # the A3-failure point solves the cubic for every delta; divide it out
        fail_bias = summary.beta_med - info.b_fail
        quotient, remainder = poly.polydiv(coeffs, np.array([-fail_bias, 1.0]))
        if abs(remainder[0]) <= config.ROOT_MEMBERSHIP_TOL * poly_scale(coeffs, fail_bias):
            coeffs = quotient
            excluded.append(info.b_fail)

    candidates = sorted(summary.beta_med - bias for bias in real_roots(coeffs, dedup_tol=tol))
    roots = []
    for b in candidates:
        if info.b_fail is not None and abs(b - info.b_fail) <= tol:
            if not excluded:
                excluded.append(info.b_fail)
        else:
            roots.append(b)

    if not roots:
        logger.warning("Identified set is empty at delta=%.6g, R2_long=%.6g", delta, r2long)
    return IdentifiedSetPoints(tuple(roots), tuple(excluded), False, delta, r2long)


def delta_values(summary: RegressionSummary, r2long: float, b) -> Tuple[np.ndarray, np.ndarray]:
    """
    delta(b) = -f0(B) / f1(B) on an array of b.

    Returns (delta, gap) where gap marks poles of f1 and the A3-failure
    point; delta is NaN there.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    bias = summary.beta_med - b
    f0 = poly.polyval(bias, f0_coefficients(summary))
    f1 = poly.polyval(bias, f1_coefficients(summary, r2long))
    scale = _scale(summary, r2long) * np.maximum(1.0, np.abs(bias)) ** 3

    gap = np.abs(f1) <= config.POLE_REL_TOL * scale
    info = a3fail_info(summary)
    if info.b_fail is not None:
        gap |= np.abs(b - info.b_fail) <= exclusion_tolerance(summary)

    with np.errstate(divide='ignore', invalid='ignore'):
        delta = np.where(gap, np.nan, -f0 / np.where(gap, 1.0, f1))
    return delta, gap


def delta_for_beta(summary: RegressionSummary, beta_hypo: float, r2long: float) -> float:
    """The unique delta consistent with beta_long = beta_hypo at this R2_long."""
    movement = abs(summary.beta_short - summary.beta_med)
    if movement <= config.SUMMARY_REL_TOL * (abs(summary.beta_short) + abs(summary.beta_med) + 1.0):
        raise ModelError("beta_short equals beta_med", kind="no_movement")
    if is_degenerate_r2(summary, r2long):
        raise ModelError("R2_long equals R2_med", kind="r2_range", value=r2long, r2_med=summary.r2_med)

    info = a3fail_info(summary)
    if info.b_fail is not None and abs(beta_hypo - info.b_fail) <= exclusion_tolerance(summary):
        raise ModelError("b is in the A3-failure set", kind="a3_fail", b=beta_hypo)

    delta, gap = delta_values(summary, r2long, [beta_hypo])
    if gap[0]:
        raise ModelError("no finite delta", kind="no_finite_delta", b=beta_hypo)
    return float(delta[0])


def restrict_magnitude(points: IdentifiedSetPoints, beta_med: float, M: float) -> IdentifiedSetPoints:
    """Keep roots in the closed interval [beta_med - M, beta_med + M]."""
    if M < 0:
        raise InputError("M must be >= 0", kind="bad_flag", flag="--m", value=M, expected=">= 0")
    if math.isinf(M):
        return points
    kept = tuple(b for b in points.roots if abs(b - beta_med) <= M)
    if points.roots and not kept:
        logger.info("Magnitude bound M=%.6g removes every root: model falsified", M)
    return IdentifiedSetPoints(kept, points.excluded, points.degenerate_medium,
                               points.delta, points.r2long)


def _magnitude_window(beta_med: float, M: Optional[float]) -> Optional[Interval]:
    if M is None or math.isinf(M):
        return None
    return Interval(beta_med - M, beta_med + M, True, True)


def cumulative_set(summary: RegressionSummary, delta_bar: float, r2long: float,
                   M: Optional[float] = None) -> IntervalUnion:
    """
    Union of identified sets over |delta| <= delta_bar.

    Boundary candidates are the real roots of f0 - delta_bar f1, f0 + delta_bar f1
    and f1; every cell between consecutive candidates is classified at its
    midpoint. The A3-failure point is kept inside intervals (flagged, not
    excluded).
    """
    if delta_bar < 0:
        raise InputError("delta_bar must be >= 0", kind="bad_flag", flag="--delta-bar",
                         value=delta_bar, expected=">= 0")
    window = _magnitude_window(summary.beta_med, M)
    if is_degenerate_r2(summary, r2long):
        result = IntervalUnion.point(summary.beta_med)
        return result.intersect(window) if window else result

    f0 = f0_coefficients(summary)
    f1 = f1_coefficients(summary, r2long)
    tol = exclusion_tolerance(summary)

    breaks = []
    for coeffs in (f0 - delta_bar * f1, f0 + delta_bar * f1, f1):
        if np.any(coeffs):
            breaks.extend(summary.beta_med - bias for bias in real_roots(coeffs, dedup_tol=tol))
    info = a3fail_info(summary)
    if info.b_fail is not None:
        breaks.append(info.b_fail)
    breaks = _dedup(sorted(breaks), tol)

    def member(values, slack: float = 0.0) -> np.ndarray:
        delta, gap = delta_values(summary, r2long, values)
        with np.errstate(invalid='ignore'):
            return ~gap & (np.abs(delta) <= delta_bar * (1.0 + slack) + np.finfo(float).tiny)

    if not breaks:
        inside = bool(member([summary.beta_med + 1.0])[0])
        result = IntervalUnion([Interval(-INF, INF, False, False)] if inside else [])
    else:
        tests = [breaks[0] - max(1.0, abs(breaks[0]))]
        tests += [0.5 * (lo + hi) for lo, hi in zip(breaks[:-1], breaks[1:])]
        tests.append(breaks[-1] + max(1.0, abs(breaks[-1])))
        cells = member(np.array(tests))
        edges = [-INF] + breaks + [INF]

        _, point_gap = delta_values(summary, r2long, breaks)
        # break points sit on |delta| = delta_bar up to rounding
        point_in = member(np.array(breaks), slack=1e-9)

        pieces = []
        for i, inside in enumerate(cells):
            if inside:
                pieces.append(Interval(edges[i], edges[i + 1], False, False))
        for j, p in enumerate(breaks):
            if point_gap[j]:
                keep = cells[j] and cells[j + 1]
            else:
                keep = point_in[j]
            if keep:
                pieces.append(Interval.point(p))
        result = IntervalUnion(pieces)

    result = result.union(IntervalUnion.point(summary.beta_med))
    if info.b_fail is not None and info.b_fail in result:
        logger.debug("A3-failure point b = %.6g lies inside the cumulative set (flagged)", info.b_fail)
    if window is not None:
        result = result.intersect(window)
    return result


def _dedup(values: List[float], tol: float) -> List[float]:
    out: List[float] = []
    for v in values:
        if not out or v - out[-1] > tol:
            out.append(v)
    return out


def identified_set(summary: RegressionSummary, spec: SensitivitySpec) -> IntervalUnion:
    """The set one SensitivitySpec implies: roots at an exact delta, or the cumulative set under a bound."""
    M = spec.magnitude(summary)
    if spec.bounded:
        return cumulative_set(summary, spec.delta_bar, spec.r2long, M)
    points = restrict_magnitude(solve_identified_set(summary, spec.delta, spec.r2long), summary.beta_med, M)
    return IntervalUnion(Interval.point(b) for b in points.roots)


def cumulative_hull(
union: IntervalUnion) -> Tuple[float, float]:
    """Convex hull endpoints of a cumulative set."""
    hull = union.hull()
    if hull is None:
        raise ModelError("empty set", kind="empty_set")
    return hull.lo, hull.hi


@dataclass(frozen=True)
class CurvePoint:
    b: float
    delta: float
    gap: bool


def idset_curve(summary: RegressionSummary, r2long: float, b_range: Tuple[float, float],
                n_points: int) -> List[CurvePoint]:
    """(b, delta(b)) pairs over a b grid; poles and the A3-failure point are gaps."""
    if n_points < 2:
        raise InputError("n_points must be >= 2", kind="bad_flag", flag="--points",
                         value=n_points, expected=">= 2")
    lo, hi = b_range
    grid = np.linspace(lo, hi, n_points)
    if lo <= summary.beta_med <= hi:
        # the baseline itself must be on the curve with delta = 0
        nearest = int(np.argmin(np.abs(grid - summary.beta_med)))
        if abs(grid[nearest] - summary.beta_med) <= exclusion_tolerance(summary):
            grid[nearest] = summary.beta_med
    delta, gap = delta_values(summary, r2long, grid)
    return [CurvePoint(float(b), float(d), bool(g)) for b, d, g in zip(grid, delta, gap)]
