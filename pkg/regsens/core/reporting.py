"""
Report emitters: aligned text tables, JSON, CSV plot data and an SVG curve.

Tables round to TABLE_SIGNIFICANT_DIGITS; JSON keeps full precision. Both
read the same report objects.
"""

import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .. import config  # noqa: E402
from .breakdown import BreakdownPoint, BreakdownReport  # noqa: E402
from .intervals import IntervalUnion  # noqa: E402
from .moments import RegressionSummary  # noqa: E402
from .osterset import (  # noqa: E402
    CurvePoint,
    IdentifiedSetPoints,
    MagnitudeBound,
    cumulative_hull,
    cumulative_set,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def fmt(value: Optional[float], digits: int = config.TABLE_SIGNIFICANT_DIGITS) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float) and math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "+inf" if value > 0 else "-inf"
    return f"{value:.{digits}g}"


def fmt_signed(value: Optional[float]) -> str:
    """Signed value and its magnitude, e.g. '-32 (|.| = 32)'."""
    if value is None:
        return "n/a"
    return f"{fmt(value)} (|.| = {fmt(abs(value))})"


def fmt_point(point: Optional[BreakdownPoint]) -> str:
    if point is None:
        return "n/a"
    if point.precluded:
        return "+inf (restriction precludes sign change)"
    text = fmt(point.value)
    return text if point.attained else f"{text} (not attained)"


def render_table(headers: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    rows = [list(map(str, r)) for r in rows]
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(headers)]
    line = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    out = [line, "  ".join("-" * w for w in widths)]
    out += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(out)


def breakdown_table(reports: Sequence[BreakdownReport]) -> str:
    """One row per (R2_long rule, M)."""
    headers = ["R2_long", "M", "explain-away", "sign-change", "naive (incorrect)"]
    rows = []
    for report in reports:
        naive = fmt(report.naive_incorrect)
        explain = fmt_signed(report.explain_away_signed)
        rows.append([report.r2_label, "inf", explain, fmt_point(report.sign_change), naive])
        for label, point in report.sign_change_restricted.items():
            rows.append([report.r2_label, label, explain, fmt_point(point), naive])
    return render_table(headers, rows)


def summary_block(summary: RegressionSummary) -> str:
    return "\n".join([
        f"beta_short = {fmt(summary.beta_short)}   R2_short = {fmt(summary.r2_short)}",
        f"beta_med   = {fmt(summary.beta_med)}   R2_med   = {fmt(summary.r2_med)}",
    ])


def identified_sets_table(rows: Sequence[IdentifiedSetPoints]) -> str:
    return render_table(["delta", "R2_long", "identified set"],
                        [[fmt(p.delta), fmt(p.r2long), str(p)] for p in rows])


def cumulative_table(rows: Sequence[Tuple[float, str, IntervalUnion]]) -> str:
    """Rows of (delta_bar, M label, set) with the convex hull alongside."""
    body = []
    for delta_bar, m_label, union in rows:
        hull = union.hull()
        hull_text = "{}" if hull is None else str(hull)
        body.append([fmt(delta_bar), m_label, str(union), hull_text])
    return render_table(["delta_bar", "M", "cumulative set", "convex hull"], body)


def adjust_panel(report: BreakdownReport, sets: Sequence[IdentifiedSetPoints],
                 cumulative: Sequence[Tuple[float, str, IntervalUnion]]) -> str:
    """Baseline, delta = 1 adjustment, fixed-delta sets and cumulative sets."""
    prop = report.proportionality
    if prop is None:
        diagnostic = "n/a"
    else:
        verdict = "holds" if prop.proportional else "fails"
        diagnostic = f"{verdict} (C = {fmt(prop.c_med)}, rel. residual {prop.rel_residual:.2e})"
    lines = [
        f"Baseline (beta_med):            {fmt(report.beta_med)}",
        f"delta = 1 adjustment:           {fmt(report.prop1_adjustment)}",
        f"  proportionality diagnostic:   {diagnostic}",
        f"beta* (delta = 1):              {fmt(report.beta_star)}  [{config.BETA_STAR_LABEL}]",
        "",
        identified_sets_table(sets),
    ]
    if cumulative:
        lines += ["", cumulative_table(cumulative)]
    return "\n".join(lines)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def dumps(payload: Any) -> str:
    return json.dumps(payload, indent=2, default=_json_default)


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload))
    logger.debug("Wrote %s", path)
    return path


def reports_to_json(reports: Sequence[BreakdownReport]) -> Dict[str, Any]:
    return {"reports": [r.to_dict() for r in reports]}


def reports_from_json(payload: Dict[str, Any]) -> List[BreakdownReport]:
    return [BreakdownReport.from_dict(r) for r in payload["reports"]]


def points_to_json(points: IdentifiedSetPoints) -> Dict[str, Any]:
    return {
        "delta": points.delta,
        "r2long": points.r2long,
        "roots": list(points.roots),
        "excluded": list(points.excluded),
        "degenerate_medium": points.degenerate_medium,
    }


def points_from_json(payload: Dict[str, Any]) -> IdentifiedSetPoints:
    return IdentifiedSetPoints(tuple(payload["roots"]), tuple(payload["excluded"]),
                               bool(payload["degenerate_medium"]), payload["delta"], payload["r2long"])


def union_to_json(delta_bar: float, m_label: str, union: IntervalUnion) -> Dict[str, Any]:
    hull = union.hull()
    return {
        "delta_bar": delta_bar,
        "M": m_label,
        "set": union.to_json(),
        "hull": None if hull is None else hull.to_dict(),
    }


def curve_frame(curve: Sequence[CurvePoint]) -> pd.DataFrame:
    return pd.DataFrame({
        "b": [p.b for p in curve],
        "delta": [p.delta for p in curve],
        "gap_flag": [int(p.gap) for p in curve],
    })


def write_curve_csv(path: PathLike, curve: Sequence[CurvePoint]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    curve_frame(curve).to_csv(path, index=False, float_format="%.17g")
    return path


def read_curve_csv(path: PathLike) -> List[CurvePoint]:
    frame = pd.read_csv(path)
    return [CurvePoint(float(b), float(d), bool(g))
            for b, d, g in zip(frame["b"], frame["delta"], frame["gap_flag"])]


def cumulative_sweep(summary: RegressionSummary, r2long: float, delta_bars: Sequence[float],
                     M: Optional[float] = None) -> pd.DataFrame:
    """(delta_bar, lower, upper, gap) rows; gap marks a set that is not an interval."""
    rows = []
    for delta_bar in delta_bars:
        union = cumulative_set(summary, delta_bar, r2long, M)
        lower, upper = cumulative_hull(union)
        rows.append({"delta_bar": delta_bar, "lower": lower, "upper": upper, "gap": int(len(union) > 1)})
    return pd.DataFrame(rows, columns=["delta_bar", "lower", "upper", "gap"])


def bounded_sweep(summary: RegressionSummary, r2long: float, delta_bars: Sequence[float],
                  bounds: Sequence[MagnitudeBound]) -> pd.DataFrame:
    """One cumulative sweep per magnitude bound, stacked under an `m` column."""
    frames = [cumulative_sweep(summary, r2long, delta_bars, bound.resolve(summary.beta_med))
              .assign(m=bound.label()) for bound in bounds]
    return pd.concat(frames, ignore_index=True)[["m", "delta_bar", "lower", "upper", "gap"]]


def write_sweep_csv(path: PathLike, sweep: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sweep.to_csv(path, index=False, float_format="%.17g")
    return path


def render_curve_svg(curve: Sequence[CurvePoint], r2long: float, delta_limit: float = 10.0,
                     path: Optional[PathLike] = None) -> str:
    """delta(b) against b with the delta = 1 asymptote; breaks the line at gaps."""
    b = np.array([p.b for p in curve])
    delta = np.array([np.nan if p.gap else p.delta for p in curve])
    delta = np.where(np.abs(delta) > delta_limit, np.nan, delta)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    try:
        ax.plot(b, delta, color="black", linewidth=1.2)
        ax.axhline(1.0, color="gray", linestyle="--", linewidth=0.8, label="delta = 1")
        ax.axhline(0.0, color="gray", linewidth=0.5)
        ax.set_xlabel("b")
        ax.set_ylabel("delta(b)")
        ax.set_ylim(-delta_limit, delta_limit)
        ax.set_title(f"R2_long = {fmt(r2long, 4)}")
        ax.legend(loc="best", frameon=False)
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg")
    finally:
        plt.close(fig)

    svg = buffer.getvalue()
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(svg)
    return svg
