"""
Regression moments

Turns a CSV file (or an externally supplied covariance matrix) into the
population-analog regression moments used by every downstream formula:
short regression Y on (1, X), medium regression Y on (1, X, W1), and the
projection of X on (1, W1). Baseline controls W0 are partialled out first.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Any, Optional, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from .. import config
from .error_handler import FileError, InputError, MomentsError, ModelError

logger = logging.getLogger(__name__)

DENOMINATORS = ('n-1', 'n')


@dataclass(frozen=True)
class ColumnRoles:
    """Assignment of data columns to the outcome, treatment and control roles."""

    outcome: str
    treatment: str
    w0: Tuple[str, ...] = ()
    w1: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'w0', tuple(self.w0))
        object.__setattr__(self, 'w1', tuple(self.w1))

    @property
    def columns(self) -> Tuple[str, ...]:
        return (self.outcome, self.treatment) + self.w0 + self.w1

    def validate(self) -> None:
        """Reject overlapping roles and a missing calibration set."""
        seen = set()
        for column in self.columns:
            if column in seen:
                raise InputError(f"duplicate role for column '{column}'",
                                 kind="duplicate_role", column=column)
            seen.add(column)
        if not self.w1:
            raise InputError("calibration controls required", kind="no_calibration")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Validated numeric data with column roles."""

    frame: pd.DataFrame
    roles: ColumnRoles

    @property
    def n(self) -> int:
        return len(self.frame)

    @property
    def columns(self) -> Tuple[str, ...]:
        return self.roles.columns

    def column(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy(dtype=float)


def _validate_frame(frame: pd.DataFrame, roles: ColumnRoles, source: str) -> pd.DataFrame:
    roles.validate()

    missing = [c for c in roles.columns if c not in frame.columns]
    if missing:
        raise InputError(f"missing column '{missing[0]}'", kind="missing_column",
                         column=missing[0], path=source,
                         available=", ".join(map(str, frame.columns)))

    numeric = {}
    for column in roles.columns:
        raw = frame[column]
        values = pd.to_numeric(raw, errors='coerce')
        bad = ~np.isfinite(values.to_numpy(dtype=float))
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            raise InputError(f"non-numeric value in column '{column}'", kind="non_numeric",
                             column=column, value=raw.iloc[row], row=row + 1)
        numeric[column] = values.astype(float)

    result = pd.DataFrame(numeric, columns=list(roles.columns))
    required = len(roles.columns) + 2
    if len(result) < required:
        raise InputError(f"n too small: {len(result)} rows", kind="too_few_rows",
                         n=len(result), columns=len(roles.columns), required=required)
    return result


def load_dataset(path: Union[str, Path], roles: ColumnRoles) -> Dataset:
    """
    Load and validate a CSV file.

    Every cell is read as text and converted explicitly so that missing
    markers such as "NA" are rejected instead of silently dropped.
    """
    path = Path(path)
    if not path.exists():
        raise FileError(f"File not found: {path}", kind="not_found", file_path=str(path))

    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    frame.columns = [c.strip() for c in frame.columns]
    dataset = Dataset(_validate_frame(frame, roles, str(path)), roles)
    logger.debug("Loaded %d rows, %d role columns from %s", dataset.n, len(roles.columns), path)
    return dataset


def dataset_from_frame(frame: pd.DataFrame, roles: ColumnRoles) -> Dataset:
    """Validate an in-memory frame with the same rules as load_dataset."""
    return Dataset(_validate_frame(frame, roles, "<frame>"), roles)


def check_positive_definite(matrix: np.ndarray, block: str) -> None:
    """Scale-free positive definiteness check on a symmetric matrix."""
    eigenvalues = np.linalg.eigvalsh(matrix)
    largest = eigenvalues[-1]
    if largest <= 0 or eigenvalues[0] <= config.PD_EIGEN_RATIO * largest:
        raise MomentsError(f"Var({block}) is not positive definite",
                           kind="not_positive_definite", block=block)


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """Covariance of (Y, X, W1...) after partialling out (1, W0)."""

    names: Tuple[str, ...]
    cov: np.ndarray
    denominator: str = 'n-1'
    n: Optional[int] = None

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        object.__setattr__(self, 'cov', cov)
        object.__setattr__(self, 'names', tuple(self.names))
        cov.setflags(write=False)

        if self.denominator not in DENOMINATORS:
            raise InputError(f"unknown denominator {self.denominator!r}", kind="bad_flag",
                             flag="denominator", value=self.denominator,
                             expected=" or ".join(DENOMINATORS))
        d = len(self.names)
        if d < 3 or cov.shape != (d, d):
            raise InputError(f"covariance must be {d}x{d} over (Y, X, W1...)", kind="bad_flag",
                             flag="cov", value=cov.shape, expected=f"({d}, {d}) with d >= 3")
        scale = max(np.max(np.abs(cov)), np.finfo(float).tiny)
        if np.max(np.abs(cov - cov.T)) > config.SYMMETRY_REL_TOL * scale:
            raise MomentsError("covariance is not symmetric", kind="asymmetric")
        check_positive_definite(cov, "Y, X, W1")

    @property
    def dim_w1(self) -> int:
        return len(self.names) - 2

    def scaled(self, factor: float) -> 'MomentMatrix':
        return MomentMatrix(self.names, self.cov * factor, self.denominator, self.n)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "order": list(self.names),
            "cov": self.cov.tolist(),
            "denominator": self.denominator,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'MomentMatrix':
        try:
            return cls(tuple(payload["order"]), np.asarray(payload["cov"], dtype=float),
                       payload.get("denominator", "n-1"))
        except KeyError as e:
            raise InputError(f"moment JSON lacks field {e}", kind="bad_flag", flag="moments",
                             value=sorted(payload), expected='{"order", "cov", "denominator"}')

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'MomentMatrix':
        path = Path(path)
        if not path.exists():
            raise FileError(f"File not found: {path}", kind="not_found", file_path=str(path))
        return cls.from_dict(json.loads(path.read_text()))


def _sym_solve(a: np.ndarray, b: np.ndarray, block: str) -> np.ndarray:
    """Solve a symmetric system with a pivoted factorization."""
    try:
        return scipy.linalg.solve(a, b, assume_a='sym')
    except np.linalg.LinAlgError:
        raise MomentsError(f"Var({block}) is singular", kind="singular", block=block)


def partial_out_baseline(data: Dataset, denominator: Optional[str] = None) -> MomentMatrix:
    """
    Covariance of (Y, X, W1) after projecting each on (1, W0).

    The residual covariance equals the Schur complement of the W0 block in
    the joint sample covariance, so no residual columns are materialized.
    """
    denominator = denominator or config.DEFAULT_DENOMINATOR
    if denominator not in DENOMINATORS:
        raise InputError(f"unknown denominator {denominator!r}", kind="bad_flag",
                         flag="--cov-denominator", value=denominator,
                         expected=" or ".join(DENOMINATORS))
    roles = data.roles
    kept = [roles.outcome, roles.treatment] + list(roles.w1)
    ordered = kept + list(roles.w0)
    values = data.frame[ordered].to_numpy(dtype=float)
    ddof = 1 if denominator == 'n-1' else 0
    joint = np.atleast_2d(np.cov(values, rowvar=False, ddof=ddof))

    k = len(kept)
    cov = joint[:k, :k]
    if roles.w0:
        s00 = joint[k:, k:]
        check_positive_definite(s00, "W0")
        s0a = joint[k:, :k]
        cov = cov - s0a.T @ _sym_solve(s00, s0a, "W0")
        cov = 0.5 * (cov + cov.T)

    check_positive_definite(cov, "Y, X, W1 after partialling out W0")
    logger.debug("Partialled out %d baseline controls (denominator %s)", len(roles.w0), denominator)
    return MomentMatrix(tuple(kept), cov, denominator, data.n)


@dataclass(frozen=True, eq=False)
class RegressionSummary:
    """Point-identified regression moments and derived scalars."""

    beta_short: float
    beta_med: float
    gamma_med: np.ndarray
    pi1: np.ndarray
    r2_short: float
    r2_med: float
    var_y: float
    var_x: float
    v_x_perp_w1: float
    v_g: float
    c_g: float
    v_pi: float
    var_w1: np.ndarray
    names: Tuple[str, ...] = field(default=())

    @property
    def dim_w1(self) -> int:
        return len(self.pi1)

    def delta_r(self, r2long: float) -> float:
        """(R2_long - R2_med) * Var(Y)."""
        return (r2long - self.r2_med) * self.var_y

    def as_dict(self) -> Dict[str, Any]:
        return {
            "beta_short": self.beta_short,
            "beta_med": self.beta_med,
            "gamma_med": self.gamma_med.tolist(),
            "pi1": self.pi1.tolist(),
            "r2_short": self.r2_short,
            "r2_med": self.r2_med,
            "var_y": self.var_y,
            "var_x": self.var_x,
            "v_x_perp_w1": self.v_x_perp_w1,
            "v_g": self.v_g,
            "c_g": self.c_g,
            "v_pi": self.v_pi,
        }


def _close(a: float, b: float, scale: float) -> bool:
    return abs(a - b) <= config.SUMMARY_REL_TOL * max(scale, np.finfo(float).tiny)


def summarize(m: MomentMatrix) -> RegressionSummary:
    """Short and medium regressions solved on the covariance matrix."""
    s = m.cov
    var_y, var_x, cov_yx = float(s[0, 0]), float(s[1, 1]), float(s[0, 1])
    s_ww = s[2:, 2:]
    s_xw = s[1, 2:]

    medium = _sym_solve(s[1:, 1:], s[1:, 0], "X, W1")
    beta_med = float(medium[0])
    gamma_med = np.asarray(medium[1:], dtype=float)
    pi1 = np.asarray(_sym_solve(s_ww, s_xw, "W1"), dtype=float)

    beta_short = cov_yx / var_x
    r2_short = cov_yx ** 2 / (var_x * var_y)
    r2_med = float(medium @ s[1:, 0]) / var_y
    v_pi = float(pi1 @ s_xw)
    v_g = float(gamma_med @ s_ww @ gamma_med)
    c_g = float(s_xw @ gamma_med)

    summary = RegressionSummary(
        beta_short=beta_short, beta_med=beta_med, gamma_med=gamma_med, pi1=pi1,
        r2_short=r2_short, r2_med=r2_med, var_y=var_y, var_x=var_x,
        v_x_perp_w1=var_x - v_pi, v_g=v_g, c_g=c_g, v_pi=v_pi,
        var_w1=np.array(s_ww), names=m.names,
    )
    _check_identities(summary)
    return summary


def _check_identities(s: RegressionSummary) -> None:
    """Warn when the regression-algebra identities fail numerically."""
    moved = s.beta_short - s.beta_med
    checks = {
        "r2_short <= r2_med": s.r2_short <= s.r2_med + config.SUMMARY_REL_TOL,
        "c_g = (beta_short - beta_med) var_x": _close(
            s.c_g, moved * s.var_x, abs(s.c_g) + abs(moved * s.var_x) + s.var_x),
        "v_g identity": _close(
            s.v_g, (s.r2_med - s.r2_short) * s.var_y + s.var_x * moved ** 2, s.v_g + s.var_y),
        "v_x_perp_w1 = var_x - v_pi": _close(s.v_x_perp_w1, s.var_x - s.v_pi, s.var_x),
    }
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        logger.warning("Regression identities off beyond tolerance (ill-conditioned moments): %s",
                       ", ".join(failed))


@dataclass(frozen=True)
class R2Rule:
    """How R2_long is set: an absolute value, a multiple of R2_med, or exactly one."""

    kind: str
    value: float = 1.0

    @classmethod
    def parse(cls, text: str) -> 'R2Rule':
        """Parse '1', '1.0', '0.9' (absolute) or '1.3x' (multiple of R2_med)."""
        raw = str(text).strip().lower()
        try:
            if raw.endswith('x'):
                rule = cls('multiple', float(raw[:-1]))
            else:
                number = float(raw)
                rule = cls('one') if number == 1.0 else cls('absolute', number)
        except ValueError:
            raise InputError(f"bad R2_long rule {text!r}", kind="bad_flag", flag="--r2long",
                             value=text, expected="a number in (0, 1] or a multiple like 1.3x")
        if not math.isfinite(rule.value) or rule.value <= 0:
            raise InputError(f"bad R2_long rule {text!r}", kind="bad_flag", flag="--r2long",
                             value=text, expected="a positive finite value")
        return rule

    def label(self) -> str:
        if self.kind == 'multiple':
            return f"{self.value:g}x R2_med"
        return f"{self.value:g}"


def resolve_r2long(rule: R2Rule, summary: RegressionSummary) -> float:
    """Resolve an R2_long rule, enforcing R2_long in (R2_med, 1] up to tolerance."""
    if rule.kind == 'one':
        value = 1.0
    elif rule.kind == 'multiple':
        value = rule.value * summary.r2_med
    else:
        value = rule.value

    if value > 1.0 + config.R2_TOL:
        raise ModelError("R²_long exceeds 1", kind="r2_range", value=value, r2_med=summary.r2_med)
    if value < summary.r2_med - config.R2_TOL:
        raise ModelError("R²_long below R²_med", kind="r2_range", value=value, r2_med=summary.r2_med)
    if is_degenerate_r2(summary, value):
        logger.info("R2_long %.6g equals R2_med: the identified set is {beta_med}", value)
    return min(value, 1.0)


def is_degenerate_r2(summary: RegressionSummary, r2long: float) -> bool:
    """True when R2_long does not exceed R2_med beyond tolerance."""
    return r2long <= summary.r2_med + config.R2_TOL
