"""
Breakdown points and bias adjustments.

Two layers:

* a generic engine over set-valued maps r -> B_I(r) (exact-value,
  directional and sign-change breakdown points by grid scan + bisection);
* closed forms for the proportional-selection model: explain-away and
  sign-change breakdown points of delta, the fixed-R2 approximation kept
  only as a labelled comparison, the delta = 1 adjustment, the bounding-set
  element beta*, and the proportionality diagnostic.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.polynomial.polynomial as poly

from .. import config
from .error_handler import ModelError
from .intervals import INF, Interval, IntervalUnion
from .moments import RegressionSummary, is_degenerate_r2
from .osterset import (
    MagnitudeBound,
    a3fail_info,
    cumulative_set,
    delta_for_beta,
    delta_values,
    exclusion_tolerance,
    f0_coefficients,
    f1_coefficients,
    fit_proportionality,
    solve_identified_set,
)
from .polynomials import real_roots, trim_degree

logger = logging.getLogger(__name__)

SetLike = Union[IntervalUnion, Sequence[float]]


class MapKind(Enum):
    """How the identified sets of a sensitivity parameter relate as it grows."""
    RELAXATION = "relaxation"
    INTERVAL_RELAXATION = "interval-relaxation"
    DEVIATION = "deviation"


class SetValuedMap:
    """A map r >= 0 -> identified set, with a caller-asserted kind."""

    def __init__(self, evaluator: Callable[[float], SetLike], kind: MapKind, name: str = ""):
        self.evaluator = evaluator
        self.kind = kind
        self.name = name

    def __call__(self, r: float) -> IntervalUnion:
        value = self.evaluator(r)
        if isinstance(value, IntervalUnion):
            return value
        return IntervalUnion(Interval.point(float(b)) for b in value)

    @property
    def monotone(self) -> bool:
        return self.kind in (MapKind.RELAXATION, MapKind.INTERVAL_RELAXATION)


@dataclass(frozen=True)
class GridSpec:
    """Log-spaced r grid (plus r = 0) followed by bisection refinement."""

    r_min: float = config.GRID_R_MIN
    r_max: float = config.GRID_R_MAX
    points: int = config.GRID_POINTS
    bisection_steps: int = config.BISECTION_STEPS
    rel_tol: float = config.BISECTION_REL_TOL

    def values(self) -> np.ndarray:
        return np.concatenate([[0.0], np.geomspace(self.r_min, self.r_max, self.points)])


@dataclass(frozen=True)
class BreakdownPoint:
    """An infimum over r; value is +inf when never reached (or precluded by M)."""

    value: float
    attained: bool
    witness: Optional[float] = None
    precluded: bool = False

    def to_dict(self) -> Dict[str, object]:
        return {
            "value": "+inf" if math.isinf(self.value) else self.value,
            "attained": self.attained,
            "witness": self.witness,
            "precluded": self.precluded,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, object]) -> 'BreakdownPoint':
        value = payload["value"]
        return cls(INF if value == "+inf" else float(value), bool(payload["attained"]),
                   payload.get("witness"), bool(payload.get("precluded", False)))


def _first_true(predicate: Callable[[float], bool], grid: GridSpec, monotone: bool) -> Optional[int]:
    """Index of the first grid value where predicate holds."""
    values = grid.values()
    if monotone:
        if not predicate(values[-1]):
            return None
        lo, hi = -1, len(values) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if predicate(values[mid]):
                hi = mid
            else:
                lo = mid
        return hi
    for i, r in enumerate(values):
        if predicate(r):
            return i
    return None


def _bisect(predicate: Callable[[float], bool], lo: float, hi: float, grid: GridSpec) -> float:
    """Shrink [lo, hi] with predicate(lo) false and predicate(hi) true."""
    for _ in range(grid.bisection_steps):
        if hi - lo <= grid.rel_tol * max(hi, 1e-300):
            break
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _scan(predicate: Callable[[float], bool], set_map: SetValuedMap, grid: GridSpec) -> Optional[float]:
    values = grid.values()
    index = _first_true(predicate, grid, set_map.monotone)
    if index is None:
        return None
    if index == 0:
        return 0.0
    return _bisect(predicate, values[index - 1], values[index], grid)


def _position(set_map: SetValuedMap, b: float, r: float) -> Tuple[int, float]:
    """Pieces lying wholly below b, and the distance from b to the set (inf when empty)."""
    below, distance = 0, INF
    for piece in set_map(r):
        if piece.hi < b:
            below += 1
        if piece.lo <= b <= piece.hi:
            distance = 0.0
        else:
            distance = min(distance, abs(piece.lo - b), abs(piece.hi - b))
    return below, distance


def _bisect_crossing(set_map: SetValuedMap, b: float, lo: float, hi: float, below_lo: int,
                     grid: GridSpec) -> Tuple[float, float]:
    """Narrow a change in the count below b; returns (r, distance) at the closer end."""
    dist_lo = dist_hi = INF
    for _ in range(grid.bisection_steps):
        if hi - lo <= grid.rel_tol * max(hi, 1e-300):
            break
        mid = 0.5 * (lo + hi)
        below, distance = _position(set_map, b, mid)
        if distance == 0.0:
            return mid, 0.0
        if below == below_lo:
            lo, dist_lo = mid, distance
        else:
            hi, dist_hi = mid, distance
    if math.isinf(dist_lo):
        dist_lo = _position(set_map, b, lo)[1]
    if math.isinf(dist_hi):
        dist_hi = _position(set_map, b, hi)[1]
    return (lo, dist_lo) if dist_lo < dist_hi else (hi, dist_hi)


def _crossing_scan(set_map: SetValuedMap, b: float, grid: GridSpec) -> BreakdownPoint:
    """
    First r at which a point-valued set passes through b.

    Exact membership almost never holds on a grid, so the scan watches how
    many set elements lie below b. A change whose refined distance to b stays
    large is a root escaping through infinity, not a crossing, and is skipped.
    """
    accept = config.CROSSING_REL_TOL * (1.0 + abs(b))
    prev_r, prev_below = None, None
    for r in grid.values():
        r = float(r)
        below, distance = _position(set_map, b, r)
        if distance == 0.0:
            return BreakdownPoint(r, True, b)
        if prev_below is not None and below != prev_below:
            hit_r, hit_distance = _bisect_crossing(set_map, b, prev_r, r, prev_below, grid)
            if hit_distance <= accept:
                return BreakdownPoint(hit_r, True, b)
            logger.debug("%s: count change near r = %.6g is not a crossing of b = %.6g",
                         set_map.name, hit_r, b)
        prev_r, prev_below = r, below
    return BreakdownPoint(INF, False)


def generic_bp_exact(set_map: SetValuedMap, b: float, grid: GridSpec = GridSpec()) -> BreakdownPoint:
    """
    inf{r >= 0 : b in B_I(r)}.

    Relaxations are scanned on membership. Deviation maps, whose sets are
    usually finite point sets, are scanned for elements crossing b.
    """
    if set_map.kind is MapKind.DEVIATION:
        return _crossing_scan(set_map, b, grid)
    value = _scan(lambda r: b in set_map(r), set_map, grid)
    if value is None:
        return BreakdownPoint(INF, False)
    return BreakdownPoint(value, b in set_map(value), b)


def generic_bp_directional(set_map: SetValuedMap, threshold: float, direction: str,
                           grid: GridSpec = GridSpec(), reference: float = 0.0) -> BreakdownPoint:
    """
    inf{r : B_I(r) meets (-inf, threshold]} for direction 'below', or
    [threshold, +inf) for 'above'.

    The infimum counts as attained unless the nearest witness escapes beyond
    WITNESS_BOUND * (1 + |threshold| + |reference|).
    """
    if direction not in ('below', 'above'):
        raise ValueError("direction must be 'below' or 'above'")

    def witness(r: float) -> Optional[float]:
        found = set_map(r)
        if direction == 'below':
            return found.sup_at_or_below(threshold)
        return found.inf_at_or_above(threshold)

    value = _scan(lambda r: witness(r) is not None, set_map, grid)
    if value is None:
        return BreakdownPoint(INF, False)
    w = witness(value)
    bound = config.WITNESS_BOUND * (1.0 + abs(threshold) + abs(reference))
    attained = w is not None and abs(w) <= bound
    return BreakdownPoint(value, attained, w)


def generic_bp_sign(set_map: SetValuedMap, beta_baseline: float,
                    grid: GridSpec = GridSpec()) -> BreakdownPoint:
    """Smallest r whose set contains a value of weakly opposite sign to the baseline."""
    if beta_baseline == 0:
        raise ModelError("sign change undefined at a zero baseline", kind="baseline_zero")
    direction = 'below' if beta_baseline > 0 else 'above'
    return generic_bp_directional(set_map, 0.0, direction, grid, beta_baseline)


def check_relaxation(set_map: SetValuedMap, r_values: Sequence[float]) -> bool:
    """Spot check that sets nest along an increasing r grid."""
    r_values = sorted(r_values)
    sets = [set_map(r) for r in r_values]
    return all(a.issubset(b) for a, b in zip(sets[:-1], sets[1:]))


def set_from_exact_breakdown(set_map: SetValuedMap, b_values: Sequence[float], r: float,
                             grid: GridSpec = GridSpec()) -> List[float]:
    """The b values whose exact-value breakdown point is at most r."""
    slack = grid.rel_tol * max(abs(r), 1.0)
    kept = []
    for b in b_values:
        bp = generic_bp_exact(set_map, b, grid)
        if bp.value < r - slack or (bp.value <= r + slack and bp.attained):
            kept.append(b)
    return kept


def interval_relaxation_map(beta: float) -> SetValuedMap:
    """r -> [beta - r, beta + r]."""
    return SetValuedMap(lambda r: IntervalUnion([Interval(beta - r, beta + r)]),
                        MapKind.INTERVAL_RELAXATION, "interval")


def cumulative_delta_map(summary: RegressionSummary, r2long: float,
                         M: Optional[float] = None) -> SetValuedMap:
    """delta_bar -> cumulative identified set over |delta| <= delta_bar."""
    return SetValuedMap(lambda r: cumulative_set(summary, r, r2long, M),
                        MapKind.RELAXATION, "cumulative-delta")


def fixed_delta_map(summary: RegressionSummary, r2long: float) -> SetValuedMap:
    """delta -> identified set at exactly that delta (a deviation)."""
    return SetValuedMap(lambda r: solve_identified_set(summary, r, r2long).roots,
                        MapKind.DEVIATION, "fixed-delta")


def bp_explain_away(summary: RegressionSummary, r2long: float) -> Tuple[float, float]:
    """Signed delta making beta_long = 0, and its magnitude."""
    signed = delta_for_beta(summary, 0.0, r2long)
    return signed, abs(signed)


def _limit_at_infinity(f0: np.ndarray, f1: np.ndarray) -> float:
    """lim |delta(B)| as |B| -> inf."""
    n0 = trim_degree(-f0)
    n1 = trim_degree(f1)
    deg0, deg1 = len(n0) - 1, len(n1) - 1
    if deg0 > deg1:
        return INF
    if deg0 < deg1:
        return 0.0
    return abs(n0[-1] / n1[-1])


def _removable_limit(f0: np.ndarray, f1: np.ndarray, root: float) -> Optional[float]:
    """|delta| at a common root of f0 and f1 after cancelling the shared factor."""
    factor = np.array([-root, 1.0])
    q0, r0 = poly.polydiv(f0, factor)
    q1, r1 = poly.polydiv(f1, factor)
    scale = max(np.max(np.abs(f0)), np.max(np.abs(f1))) * max(1.0, abs(root)) ** 3
    if abs(r0[0]) > 1e-8 * scale:
        return None
    d1 = poly.polyval(root, q1)
    if abs(d1) <= config.POLE_REL_TOL * scale:
        return None
    return abs(poly.polyval(root, q0) / d1)


def bp_directional(summary: RegressionSummary, r2long: float, threshold: float, direction: str,
                   M: Optional[float] = None) -> BreakdownPoint:
    """
    inf of |delta(b)| over b <= threshold ('below') or b >= threshold ('above'),
    optionally with |b - beta_med| <= M.

    Candidates are the real roots of f0' f1 - f0 f1' inside the feasible
    bias domain, the finite domain endpoints, removable singularities at the
    A3-failure point, and the limit at infinity when the domain is unbounded.
    """
    if direction not in ('below', 'above'):
        raise ValueError("direction must be 'below' or 'above'")
    if is_degenerate_r2(summary, r2long):
        raise ModelError("R2_long equals R2_med", kind="r2_range", value=r2long, r2_med=summary.r2_med)
    M = INF if M is None else M

    edge = summary.beta_med - threshold
    if direction == 'below':
        lo, hi = max(edge, -M), M
    else:
        lo, hi = -M, min(edge, M)
    if lo > hi:
        logger.info("Magnitude bound M=%.6g precludes reaching b %s %.6g",
                    M, "<=" if direction == 'below' else ">=", threshold)
        return BreakdownPoint(INF, False, None, True)
    if lo <= 0.0 <= hi:
        return BreakdownPoint(0.0, True, summary.beta_med)

    f0 = f0_coefficients(summary)
    f1 = f1_coefficients(summary, r2long)
    tol = exclusion_tolerance(summary)

    candidates = [B for B in (lo, hi) if math.isfinite(B)]
    slope = poly.polysub(poly.polymul(poly.polyder(f0), f1), poly.polymul(f0, poly.polyder(f1)))
    if np.any(slope):
        candidates += [B for B in real_roots(slope, dedup_tol=tol) if lo <= B <= hi]

    best, best_b, attained = INF, None, False
    if candidates:
        values, gap = delta_values(summary, r2long, [summary.beta_med - B for B in candidates])
        for B, d, g in zip(candidates, values, gap):
            if not g and abs(d) < best:
                best, best_b, attained = abs(d), summary.beta_med - B, True

    info = a3fail_info(summary)
    if info.b_fail is not None:
        B_fail = summary.beta_med - info.b_fail
        if lo <= B_fail <= hi:
            limit = _removable_limit(f0, f1, B_fail)
            if limit is not None and limit < best:
                best, best_b, attained = limit, info.b_fail, False

    if math.isinf(lo) or math.isinf(hi):
        limit = _limit_at_infinity(f0, f1)
        if limit < best:
            best, best_b, attained = limit, None, False

    return BreakdownPoint(best, attained, best_b)


def bp_sign_change(summary: RegressionSummary, r2long: float, M: Optional[float] = None) -> BreakdownPoint:
    """Smallest |delta| allowing a weakly opposite-sign beta_long (optionally within M of beta_med)."""
    if summary.beta_med == 0:
        raise ModelError("sign change undefined at beta_med = 0", kind="baseline_zero")
    direction = 'below' if summary.beta_med > 0 else 'above'
    return bp_directional(summary, r2long, 0.0, direction, M)


def _require_movement(summary: RegressionSummary) -> None:
    movement = abs(summary.beta_short - summary.beta_med)
    if movement <= config.SUMMARY_REL_TOL * (abs(summary.beta_short) + abs(summary.beta_med) + 1.0):
        raise ModelError("beta_short equals beta_med", kind="no_movement")


def naive_breakdown(summary: RegressionSummary, r2long: float) -> float:
    """
    The fixed-R2 approximation solved for delta.

    Incorrect as a breakdown point; reported only for comparison.
    """
    _require_movement(summary)
    r2_gap = summary.r2_med - summary.r2_short
    if abs(r2_gap) <= config.R2_TOL or is_degenerate_r2(summary, r2long):
        raise ModelError("R2 values coincide", kind="r2_range", value=r2long, r2_med=summary.r2_med)
    return -summary.beta_med * r2_gap / (
        (summary.beta_med - summary.beta_short) * (r2long - summary.r2_med))


def prop1_adjust(summary: RegressionSummary, r2long: float) -> float:
    """Bias-adjusted coefficient valid at delta = 1 under proportional controls."""
    _require_movement(summary)
    r2_gap = summary.r2_med - summary.r2_short
    if abs(r2_gap) <= config.R2_TOL:
        raise ModelError("R2_med equals R2_short", kind="r2_range", value=r2long, r2_med=summary.r2_med)
    if summary.dim_w1 > 1 and not proportionality_diagnostic(summary).proportional:
        logger.warning("gamma_med is not proportional to pi1: the delta = 1 adjustment is not valid")
    return summary.beta_med + (summary.beta_med - summary.beta_short) * (
        r2long - summary.r2_med) / r2_gap


def beta_star(summary: RegressionSummary, delta: float, r2long: float) -> float:
    """Identified-set element closest to beta_med (ties go to the smaller value)."""
    points = solve_identified_set(summary, delta, r2long)
    if points.empty:
        raise ModelError("empty identified set", kind="empty_set")
    return min(points.roots, key=lambda b: (abs(summary.beta_med - b), b))


@dataclass(frozen=True)
class ProportionalityDiagnostic:
    proportional: bool
    c_med: float
    rel_residual: float

    def to_dict(self) -> Dict[str, object]:
        return {"proportional": self.proportional, "c_med": self.c_med,
                "rel_residual": self.rel_residual}


def proportionality_diagnostic(summary: RegressionSummary) -> ProportionalityDiagnostic:
    """Numeric check of gamma_med = C pi1 (no hypothesis test)."""
    if not np.any(summary.pi1):
        raise ModelError("pi1 = 0", kind="unexpected", details="pi1 is the zero vector")
    c_med, rel = fit_proportionality(summary)
    return ProportionalityDiagnostic(rel <= config.PROPORTIONALITY_TOL, c_med, rel)


@dataclass
class BreakdownReport:
    """Every breakdown output for one (R2_long rule, M list)."""

    r2_label: str
    r2long: float
    beta_short: float
    beta_med: float
    r2_short: float
    r2_med: float
    explain_away: Optional[float] = None
    explain_away_signed: Optional[float] = None
    sign_change: Optional[BreakdownPoint] = None
    sign_change_restricted: Dict[str, BreakdownPoint] = field(default_factory=dict)
    naive_incorrect: Optional[float] = None
    beta_star: Optional[float] = None
    prop1_adjustment: Optional[float] = None
    proportionality: Optional[ProportionalityDiagnostic] = None
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {
            "r2_rule": self.r2_label,
            "r2long": self.r2long,
            "beta_short": self.beta_short,
            "beta_med": self.beta_med,
            "r2_short": self.r2_short,
            "r2_med": self.r2_med,
            "explain_away": self.explain_away,
            "explain_away_signed": self.explain_away_signed,
            "sign_change": self.sign_change.to_dict() if self.sign_change else None,
            "sign_change_restricted": {k: v.to_dict() for k, v in self.sign_change_restricted.items()},
            "naive_incorrect": {
                "value": self.naive_incorrect,
                "authoritative": False,
                "label": config.NAIVE_LABEL,
            },
            "beta_star": {
                "value": self.beta_star,
                "bounding_set_caveat": True,
                "label": config.BETA_STAR_LABEL,
            },
            "prop1_adjustment": self.prop1_adjustment,
            "proportionality": self.proportionality.to_dict() if self.proportionality else None,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, object]) -> 'BreakdownReport':
        prop = payload.get("proportionality")
        sign = payload.get("sign_change")
        return cls(
            r2_label=payload["r2_rule"],
            r2long=payload["r2long"],
            beta_short=payload["beta_short"],
            beta_med=payload["beta_med"],
            r2_short=payload["r2_short"],
            r2_med=payload["r2_med"],
            explain_away=payload.get("explain_away"),
            explain_away_signed=payload.get("explain_away_signed"),
            sign_change=BreakdownPoint.from_dict(sign) if sign else None,
            sign_change_restricted={k: BreakdownPoint.from_dict(v)
                                    for k, v in payload.get("sign_change_restricted", {}).items()},
            naive_incorrect=payload["naive_incorrect"]["value"],
            beta_star=payload["beta_star"]["value"],
            prop1_adjustment=payload.get("prop1_adjustment"),
            proportionality=ProportionalityDiagnostic(**prop) if prop else None,
            notes=list(payload.get("notes", [])),
        )


def _attempt(report: BreakdownReport, label: str, func: Callable, *args):
    try:
        return func(*args)
    except ModelError as e:
        report.notes.append(f"{label}: {e}")
        logger.debug("%s unavailable: %s", label, e)
        return None


def breakdown_report(summary: RegressionSummary, r2long: float, m_bounds: Sequence[MagnitudeBound] = (),
                     r2_label: str = "") -> BreakdownReport:
    """Assemble all breakdown outputs once; tables and JSON both read this object."""
    report = BreakdownReport(r2_label or f"{r2long:g}", r2long, summary.beta_short, summary.beta_med,
                             summary.r2_short, summary.r2_med)

    explain = _attempt(report, "explain_away", bp_explain_away, summary, r2long)
    if explain is not None:
        report.explain_away_signed, report.explain_away = explain
    report.sign_change = _attempt(report, "sign_change", bp_sign_change, summary, r2long)
    for bound in m_bounds:
        if bound.kind == 'none':
            continue
        M = bound.resolve(summary.beta_med)
        result = _attempt(report, f"sign_change[M={bound.label()}]", bp_sign_change, summary, r2long, M)
        if result is not None:
            report.sign_change_restricted[bound.label()] = result
    report.naive_incorrect = _attempt(report, "naive", naive_breakdown, summary, r2long)
    report.beta_star = _attempt(report, "beta_star", beta_star, summary, 1.0, r2long)
    report.prop1_adjustment = _attempt(report, "prop1", prop1_adjust, summary, r2long)
    report.proportionality = _attempt(report, "proportionality", proportionality_diagnostic, summary)
    return report


def batch_breakdown(summary: RegressionSummary, rules: Sequence[Tuple[str, float]],
                    m_bounds: Sequence[MagnitudeBound] = (),
                    max_workers: Optional[int] = None) -> List[BreakdownReport]:
    """Breakdown reports for several R2_long rules, ordered as given."""
    max_workers = max_workers or config.MAX_WORKERS
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [executor.submit(breakdown_report, summary, r2long, m_bounds, label)
                   for label, r2long in rules]
        return [f.result() for f in futures]


__all__ = [
    "MapKind", "SetValuedMap", "GridSpec", "BreakdownPoint", "BreakdownReport",
    "ProportionalityDiagnostic",
    "generic_bp_exact", "generic_bp_directional", "generic_bp_sign", "check_relaxation",
    "set_from_exact_breakdown", "interval_relaxation_map", "cumulative_delta_map",
    "fixed_delta_map", "bp_explain_away", "bp_directional", "bp_sign_change",
    "naive_breakdown", "prop1_adjust", "beta_star", "proportionality_diagnostic",
    "breakdown_report", "batch_breakdown",
]
