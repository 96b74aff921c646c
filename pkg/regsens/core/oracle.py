"""
Constructive oracle.

Full data-generating processes over (Y, X, W1..., W2): building them from
structural coefficients, extending an observed moment matrix by an
unobserved W2 so that a chosen identified-set point becomes the true
beta_long, drawing random ground-truth instances, and sampling finite
datasets with W2 withheld.
"""

import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.polynomial.polynomial as poly
import pandas as pd
import scipy.linalg
from scipy.linalg import lapack

from .. import config
from .error_handler import FileError, InputError, ModelError, NumericError
from .moments import (
    ColumnRoles,
    Dataset,
    MomentMatrix,
    RegressionSummary,
    check_positive_definite,
    dataset_from_frame,
    summarize,
)
from .osterset import a3fail_info, cubic_coefficients, exclusion_tolerance
from .polynomials import poly_scale

logger = logging.getLogger(__name__)


def random_stream(seed: int, tag: str) -> np.random.Generator:
    """Counter-based generator for one (seed, purpose) pair."""
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(tag.encode('utf-8'))])
    return np.random.Generator(np.random.Philox(sequence))


def default_names(dim_w1: int) -> Tuple[str, ...]:
    if dim_w1 == 1:
        w1 = ("W1",)
    else:
        w1 = tuple(f"W1_{i + 1}" for i in range(dim_w1))
    return ("Y", "X") + w1 + ("W2",)


@dataclass(frozen=True, eq=False)
class FullDgp:
    """Second moments of (Y, X, W1..., W2) together with their structural reading."""

    names: Tuple[str, ...]
    cov: np.ndarray
    beta_long: float
    gamma1_long: np.ndarray
    gamma2_long: float
    pi1: np.ndarray
    pi2: float
    var_y_perp: float
    var_x_perp: float
    seed: Optional[int] = None
    tag: str = ""
    attempts: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'names', tuple(self.names))
        object.__setattr__(self, 'cov', np.array(self.cov, dtype=float))
        object.__setattr__(self, 'gamma1_long', np.atleast_1d(np.asarray(self.gamma1_long, dtype=float)))
        object.__setattr__(self, 'pi1', np.atleast_1d(np.asarray(self.pi1, dtype=float)))

    @property
    def dim_w1(self) -> int:
        return len(self.pi1)

    @property
    def var_w1(self) -> np.ndarray:
        return self.cov[2:-1, 2:-1]

    def observed(self) -> MomentMatrix:
        """The (Y, X, W1) block an analyst would see."""
        return MomentMatrix(self.names[:-1], self.cov[:-1, :-1])

    def summary(self) -> RegressionSummary:
        return summarize(self.observed())

    def validate(self) -> None:
        """Check W2 normalization and orthogonality to W1, nonzero long coefficients, positive
        definiteness, and agreement of the structural fields with the covariance."""
        k = self.dim_w1
        if self.cov.shape != (k + 3, k + 3) or len(self.names) != k + 3:
            raise InputError("covariance shape does not match the structural fields", kind="bad_flag",
                             flag="dgp", value=self.cov.shape, expected=f"({k + 3}, {k + 3})")
        if np.max(np.abs(self.cov[2:-1, -1])) != 0.0:
            raise ModelError("Cov(W1, W2) != 0", kind="assumption", assumption="Cov(W1, W2) = 0")
        if self.cov[-1, -1] != 1.0:
            raise ModelError("Var(W2) != 1", kind="assumption", assumption="Var(W2) = 1")
        if not np.any(self.gamma1_long) or self.gamma2_long == 0.0:
            raise ModelError("gamma_long has a zero component", kind="assumption",
                             assumption="gamma_1,long != 0 and gamma_2,long != 0")
        check_positive_definite(self.cov[1:, 1:], "X, W1, W2")
        check_positive_definite(self.cov[:-1, :-1], "Y, X, W1")

        implied = structural_covariance(self.var_w1, self.beta_long, self.gamma1_long, self.gamma2_long,
                                        self.pi1, self.pi2, self.var_x_perp, self.var_y_perp)
        scale = max(np.max(np.abs(self.cov)), np.finfo(float).tiny)
        mismatch = float(np.max(np.abs(implied - self.cov)))
        if mismatch > config.STRUCTURE_REL_TOL * scale:
            raise ModelError("covariance disagrees with structural coefficients", kind="assumption",
                             assumption=f"structural consistency (mismatch {mismatch:.3g})")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "order": list(self.names),
            "cov": self.cov.tolist(),
            "beta_long": self.beta_long,
            "gamma1_long": self.gamma1_long.tolist(),
            "gamma2_long": self.gamma2_long,
            "pi1": self.pi1.tolist(),
            "pi2": self.pi2,
            "var_y_perp": self.var_y_perp,
            "var_x_perp": self.var_x_perp,
            "provenance": {"seed": self.seed, "tag": self.tag, "attempts": self.attempts},
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> 'FullDgp':
        provenance = payload.get("provenance", {})
        return cls(
            names=tuple(payload["order"]),
            cov=np.asarray(payload["cov"], dtype=float),
            beta_long=float(payload["beta_long"]),
            gamma1_long=np.asarray(payload["gamma1_long"], dtype=float),
            gamma2_long=float(payload["gamma2_long"]),
            pi1=np.asarray(payload["pi1"], dtype=float),
            pi2=float(payload["pi2"]),
            var_y_perp=float(payload["var_y_perp"]),
            var_x_perp=float(payload["var_x_perp"]),
            seed=provenance.get("seed"),
            tag=provenance.get("tag", ""),
            attempts=int(provenance.get("attempts", 0)),
        )

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'FullDgp':
        path = Path(path)
        if not path.exists():
            raise FileError(f"File not found: {path}", kind="not_found", file_path=str(path))
        return cls.from_dict(json.loads(path.read_text()))


def structural_covariance(var_w1, beta_long: float, gamma1, gamma2: float, pi1, pi2: float,
                          var_x_perp: float, var_y_perp: float) -> np.ndarray:
    """Covariance implied by X = pi1'W1 + pi2 W2 + e_X and Y = b X + g1'W1 + g2 W2 + e_Y."""
    s1 = np.atleast_2d(np.asarray(var_w1, dtype=float))
    g1 = np.atleast_1d(np.asarray(gamma1, dtype=float))
    p1 = np.atleast_1d(np.asarray(pi1, dtype=float))
    k = len(p1)

    var_x = float(p1 @ s1 @ p1) + pi2 ** 2 + var_x_perp
    cov_x_w1 = s1 @ p1
    cross = float(g1 @ s1 @ p1) + gamma2 * pi2  # Cov(X, g1'W1 + g2 W2)
    cov_y_x = beta_long * var_x + cross
    cov_y_w1 = beta_long * cov_x_w1 + s1 @ g1
    var_y = (beta_long ** 2 * var_x + 2.0 * beta_long * cross
             + float(g1 @ s1 @ g1) + gamma2 ** 2 + var_y_perp)

    cov = np.zeros((k + 3, k + 3))
    cov[0, 0] = var_y
    cov[0, 1] = cov[1, 0] = cov_y_x
    cov[1, 1] = var_x
    cov[0, 2:-1] = cov[2:-1, 0] = cov_y_w1
    cov[1, 2:-1] = cov[2:-1, 1] = cov_x_w1
    cov[2:-1, 2:-1] = s1
    cov[0, -1] = cov[-1, 0] = beta_long * pi2 + gamma2
    cov[1, -1] = cov[-1, 1] = pi2
    cov[-1, -1] = 1.0
    return cov


def build_dgp(var_w1, beta_long: float, gamma1, gamma2: float, pi1, pi2: float,
              var_x_perp: float, var_y_perp: float, names: Optional[Sequence[str]] = None,
              seed: Optional[int] = None, tag: str = "", attempts: int = 0) -> FullDgp:
    """Assemble and validate a FullDgp from structural coefficients."""
    pi1 = np.atleast_1d(np.asarray(pi1, dtype=float))
    cov = structural_covariance(var_w1, beta_long, gamma1, gamma2, pi1, pi2, var_x_perp, var_y_perp)
    dgp = FullDgp(tuple(names) if names else default_names(len(pi1)), cov, float(beta_long),
                  gamma1, float(gamma2), pi1, float(pi2), float(var_y_perp), float(var_x_perp),
                  seed, tag, attempts)
    dgp.validate()
    return dgp


def demo_dgp() -> FullDgp:
    """Scalar-W1 fixture: beta_long = 1, delta = 2, R2_long = 15/19."""
    return build_dgp(np.eye(1), beta_long=1.0, gamma1=[1.0], gamma2=0.5, pi1=[0.5], pi2=0.5,
                     var_x_perp=0.5, var_y_perp=1.0, tag="demo-1")


@dataclass(frozen=True)
class ImpliedParams:
    delta_true: float
    r2_long_true: float
    beta_long: float
    bias: float
    pi2: float
    gamma2_long: float
    gamma1_long: np.ndarray = field(default_factory=lambda: np.zeros(0))
    pi1: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "delta_true": self.delta_true,
            "r2_long_true": self.r2_long_true,
            "beta_long": self.beta_long,
            "bias": self.bias,
            "pi2": self.pi2,
            "gamma2_long": self.gamma2_long,
        }


def implied_params(dgp: FullDgp) -> ImpliedParams:
    """Long regression, delta and R2_long computed from the covariance alone."""
    s = dgp.cov
    long_coef = scipy.linalg.solve(s[1:, 1:], s[1:, 0], assume_a='sym')
    beta_long, gamma1, gamma2 = float(long_coef[0]), long_coef[1:-1], float(long_coef[-1])
    x_coef = scipy.linalg.solve(s[2:, 2:], s[2:, 1], assume_a='sym')
    pi1, pi2 = x_coef[:-1], float(x_coef[-1])

    var_y = float(s[0, 0])
    r2_long = float(long_coef @ s[1:, 0]) / var_y
    s1 = s[2:-1, 2:-1]
    v1 = float(gamma1 @ s1 @ gamma1)
    c1 = float(gamma1 @ s[2:-1, 1])
    if not np.any(gamma1) or c1 == 0.0:
        raise ModelError("delta undefined: Cov(X, gamma_1,long'W1) = 0", kind="assumption",
                         assumption="gamma_1,long != 0")
    if gamma2 == 0.0:
        raise ModelError("gamma_2,long = 0", kind="assumption", assumption="gamma_2,long != 0")

    # delta * c1 / v1 = Cov(X, g2 W2) / Var(g2 W2) = pi2 / g2 when Var(W2) = 1 and Cov(W1, W2) = 0
    delta = (pi2 / gamma2) * v1 / c1
    beta_med = dgp.summary().beta_med
    return ImpliedParams(delta, r2_long, beta_long, beta_med - beta_long, pi2, gamma2,
                         np.asarray(gamma1), np.asarray(pi1))


def _rel(residual: float, *terms: float) -> float:
    return abs(residual) / max(sum(abs(t) for t in terms), np.finfo(float).tiny)


def lemma_residuals(dgp: FullDgp) -> Dict[str, float]:
    """Relative residuals of the regression-algebra identities linking short, medium and long."""
    s = dgp.summary()
    p = implied_params(dgp)
    s1 = dgp.var_w1
    B = p.bias
    v1 = float(p.gamma1_long @ s1 @ p.gamma1_long)
    c1 = float(p.gamma1_long @ dgp.cov[2:-1, 1])
    moved = s.beta_short - s.beta_med

    shifted = s.gamma_med + B * s.pi1
    gamma_gap = float(np.max(np.abs(p.gamma1_long - shifted)))
    gamma_scale = float(np.max(np.abs(p.gamma1_long)) + np.max(np.abs(shifted)))

    d_r = (p.r2_long_true - s.r2_med) * s.var_y
    lhs2 = d_r * p.delta_true * c1
    rhs2 = B * s.v_x_perp_w1 * (v1 - B * p.delta_true * c1)

    return {
        "gamma1_long = gamma_med + B pi1": _rel(gamma_gap, gamma_scale),
        "pi2 gamma2 = B var(X perp W1)": _rel(p.pi2 * p.gamma2_long - B * s.v_x_perp_w1,
                                              p.pi2 * p.gamma2_long, B * s.v_x_perp_w1),
        "c_g = (beta_short - beta_med) var_x": _rel(s.c_g - moved * s.var_x, s.c_g, moved * s.var_x),
        "v_g identity": _rel(s.v_g - (s.r2_med - s.r2_short) * s.var_y - s.var_x * moved ** 2,
                             s.v_g, (s.r2_med - s.r2_short) * s.var_y, s.var_x * moved ** 2),
        "delta-R2 identity": _rel(lhs2 - rhs2, lhs2, rhs2),
    }


def determinant_residual(dgp: FullDgp, r2long: float) -> float:
    """Var(Y | X, W1, W2) - Var(Y)(1 - R2_long), relative to Var(Y)."""
    s = dgp.cov
    coef = scipy.linalg.solve(s[1:, 1:], s[1:, 0], assume_a='sym')
    residual_var = float(s[0, 0] - s[1:, 0] @ coef)
    return (residual_var - s[0, 0] * (1.0 - r2long)) / s[0, 0]


def _check_psd(cov: np.ndarray) -> np.ndarray:
    """Eigen-decomposition with small negative eigenvalues clipped to zero."""
    eigenvalues, vectors = np.linalg.eigh(cov)
    floor = -config.PSD_TRACE_TOL * float(np.trace(cov))
    if eigenvalues[0] < floor:
        raise NumericError("covariance is not PSD", kind="not_psd", eigenvalue=float(eigenvalues[0]))
    clipped = np.clip(eigenvalues, 0.0, None)
    return (vectors * clipped) @ vectors.T


def construct_extension(m: MomentMatrix, b: float, delta: float, r2long: float) -> FullDgp:
    """
    Extend an observed moment matrix by W2 so that beta_long = b.

    b must solve the cubic at (delta, r2long). W2 is normalized with a
    positive loading gamma_2,long.
    """
    s = summarize(m)
    if not (s.r2_med < r2long <= 1.0 + config.R2_TOL):
        raise ModelError("R2_long outside (R2_med, 1]", kind="r2_range", value=r2long, r2_med=s.r2_med)
    r2long = min(r2long, 1.0)

    info = a3fail_info(s)
    if info.b_fail is not None and abs(b - info.b_fail) <= exclusion_tolerance(s):
        raise ModelError("b is in the A3-failure set", kind="a3_fail", b=b)

    B = s.beta_med - b
    cubic = cubic_coefficients(s, delta, r2long).ascending
    residual = abs(poly.polyval(B, cubic))
    if residual > config.ROOT_MEMBERSHIP_TOL * poly_scale(cubic, B):
        raise ModelError("b is not a root", kind="not_a_root", b=b, delta=delta, residual=residual)

    v = s.v_x_perp_w1
    g2 = math.sqrt(s.delta_r(r2long) + B * B * v)
    p2 = B * v / g2

    k = m.dim_w1
    cov = np.zeros((k + 3, k + 3))
    cov[:-1, :-1] = m.cov
    cov[0, -1] = cov[-1, 0] = b * p2 + g2
    cov[1, -1] = cov[-1, 1] = p2
    cov[-1, -1] = 1.0
    _check_psd(cov)

    dgp = FullDgp(m.names + ("W2",), cov, float(b), s.gamma_med + B * s.pi1, g2, s.pi1, p2,
                  s.var_y * (1.0 - r2long), v - p2 * p2, tag="extension")

    det_gap = determinant_residual(dgp, r2long)
    if abs(det_gap) > config.SUMMARY_REL_TOL:
        raise NumericError("determinant identity failed", kind="not_psd", eigenvalue=det_gap)
    logger.debug("Extended moments at b=%.6g delta=%.6g R2_long=%.6g (g2=%.6g, p2=%.6g)",
                 b, delta, r2long, g2, p2)
    return dgp


def _draw(rng: np.random.Generator, k: int, force_proportional: bool) -> Dict[str, Any]:
    a = rng.normal(size=(k, k))
    pi1 = rng.uniform(-1.5, 1.5, size=k)
    if force_proportional:
        gamma1 = rng.uniform(-2.0, 2.0) * pi1
    else:
        gamma1 = rng.uniform(-2.0, 2.0, size=k)
    return dict(
        var_w1=a @ a.T / k + 0.5 * np.eye(k),
        beta_long=rng.uniform(-2.0, 2.0),
        gamma1=gamma1,
        gamma2=rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 2.0),
        pi1=pi1,
        pi2=rng.uniform(-1.5, 1.5),
        var_x_perp=rng.uniform(0.2, 2.0),
        var_y_perp=rng.uniform(0.2, 2.0),
    )


def _acceptable(dgp: FullDgp) -> bool:
    try:
        s = dgp.summary()
        p = implied_params(dgp)
    except ModelError:
        return False
    sep = config.SEPARATION
    beta_scale = math.sqrt(s.var_y / s.var_x)
    c1 = float(p.gamma1_long @ dgp.cov[2:-1, 1])
    v1 = float(p.gamma1_long @ dgp.var_w1 @ p.gamma1_long)
    if abs(s.beta_short - s.beta_med) < sep * beta_scale:
        return False
    if abs(s.c_g) < sep * math.sqrt(s.var_x * s.var_y):
        return False
    if abs(c1) < sep * math.sqrt(s.var_x * v1):
        return False
    if abs(s.beta_med) < sep * beta_scale:
        return False
    if p.r2_long_true - s.r2_med < sep * (1.0 - s.r2_med):
        return False
    info = a3fail_info(s)
    if info.b_fail is not None and abs(dgp.beta_long - info.b_fail) < sep * beta_scale:
        return False
    return True


def random_dgp(seed: int, dim_w1: int = 1, force_proportional: bool = False) -> FullDgp:
    """
    Draw a ground-truth instance; identical for identical arguments.

    Structural coefficients are uniform on bounded boxes, Var(W1) is a
    shifted Wishart-like draw, noise variances are in [0.2, 2]. Draws that
    violate the assumptions or come too close to their boundaries are
    rejected.
    """
    if dim_w1 < 1:
        raise InputError("dim W1 must be >= 1", kind="bad_flag", flag="dim_w1", value=dim_w1,
                         expected=">= 1")
    tag = f"dgp/k={dim_w1}/prop={int(force_proportional)}"
    rng = random_stream(seed, tag)
    for attempt in range(1, config.REJECTION_BUDGET + 1):
        try:
            dgp = build_dgp(**_draw(rng, dim_w1, force_proportional), seed=seed, tag=tag, attempts=attempt)
        except ModelError:
            continue
        if _acceptable(dgp):
            return dgp
    raise NumericError("rejection budget exhausted", kind="rejection_budget", budget=config.REJECTION_BUDGET)


def _pivoted_factor(cov: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Lower factor L and permutation with cov[perm][:, perm] = L L' (PSD allowed)."""
    clipped = _check_psd(cov)
    factor, piv, rank, info = lapack.dpstrf(clipped, lower=1, tol=-1.0)
    if info < 0:
        raise NumericError("pivoted Cholesky failed", kind="not_psd", eigenvalue=float('nan'))
    lower = np.tril(factor)
    lower[:, rank:] = 0.0
    return lower, piv - 1


def sample_dataset(dgp: FullDgp, n: int, seed: int) -> Dataset:
    """n Gaussian rows with the DGP covariance; W2 is dropped."""
    d = len(dgp.names)
    if n < d + 2:
        raise InputError(f"n too small: {n} rows", kind="too_few_rows", n=n, columns=d, required=d + 2)
    lower, perm = _pivoted_factor(dgp.cov)
    rng = random_stream(seed, "sample")
    draws = np.empty((n, d))
    draws[:, perm] = rng.standard_normal((n, d)) @ lower.T

    observed = list(dgp.names[:-1])
    frame = pd.DataFrame(draws[:, :-1], columns=observed)
    roles = ColumnRoles(observed[0], observed[1], (), tuple(observed[2:]))
    return dataset_from_frame(frame, roles)
