"""
Real roots of low-degree polynomials.

Coefficients are in ascending order (c0, c1, ..., cn) as in
numpy.polynomial.polynomial. Roots come from companion-matrix eigenvalues,
the real/complex split of cubics and quadratics is decided by the
discriminant, and every accepted root is Newton-polished.
"""

import logging
from typing import List, Sequence

import numpy as np
import numpy.polynomial.polynomial as poly

from .. import config
from .error_handler import NumericError

logger = logging.getLogger(__name__)


def trim_degree(coeffs: Sequence[float], rel_tol: float = None) -> np.ndarray:
    """
    Drop negligible leading coefficients.

    The leading coefficient is dropped while |c_n| <= rel_tol * max(|c_0..c_{n-1}|, tiny).
    """
    rel_tol = config.DEGREE_DEGENERACY if rel_tol is None else rel_tol
    c = np.asarray(coeffs, dtype=float).copy()
    if not np.any(c):
        raise NumericError("all polynomial coefficients are zero", kind="zero_polynomial")
    while len(c) > 1:
        rest = np.max(np.abs(c[:-1]))
        if abs(c[-1]) <= rel_tol * max(rest, np.finfo(float).tiny):
            if c[-1] != 0.0:
                logger.debug("Dropping leading coefficient %.3g (degree %d)", c[-1], len(c) - 1)
            c = c[:-1]
        else:
            break
    return c


def poly_scale(coeffs: np.ndarray, x: float) -> float:
    """Magnitude against which a residual at x is judged."""
    degree = len(coeffs) - 1
    return float(np.max(np.abs(coeffs)) * max(1.0, abs(x)) ** degree)


def newton_polish(coeffs: np.ndarray, x: float) -> float:
    """Refine a root estimate; returns the iterate with the smallest residual."""
    deriv = poly.polyder(coeffs)
    best_x, best_r = x, abs(poly.polyval(x, coeffs))
    for _ in range(config.NEWTON_MAX_STEPS):
        if best_r <= config.NEWTON_RESIDUAL * poly_scale(coeffs, best_x):
            break
        slope = poly.polyval(x, deriv)
        if slope == 0.0 or not np.isfinite(slope):
            break
        x = x - poly.polyval(x, coeffs) / slope
        r = abs(poly.polyval(x, coeffs))
        if not np.isfinite(r):
            break
        if r < best_r:
            best_x, best_r = x, r
        elif r > 10.0 * best_r:
            break
    return float(best_x)


def discriminant(coeffs: np.ndarray) -> float:
    """Discriminant of a quadratic or cubic, normalized by its leading coefficient scale."""
    c = np.asarray(coeffs, dtype=float) / np.max(np.abs(coeffs))
    if len(c) == 3:
        c0, c1, c2 = c
        return c1 * c1 - 4.0 * c2 * c0
    if len(c) == 4:
        d, cc, b, a = c
        return (18.0 * a * b * cc * d - 4.0 * b ** 3 * d + b * b * cc * cc
                - 4.0 * a * cc ** 3 - 27.0 * a * a * d * d)
    raise ValueError("discriminant is only defined here for degree 2 and 3")


def _expected_real_count(c: np.ndarray) -> int:
    """Number of real roots implied by the discriminant, or -1 when ambiguous."""
    degree = len(c) - 1
    if degree not in (2, 3):
        return -1
    disc = discriminant(c)
    if abs(disc) <= 1e-12:
        return -1
    if degree == 2:
        return 2 if disc > 0 else 0
    return 3 if disc > 0 else 1


def real_roots(coeffs: Sequence[float], dedup_tol: float = 0.0) -> List[float]:
    """
    Sorted, distinct real roots.

    Roots closer than dedup_tol are merged. Raises NumericError for the
    zero polynomial; a nonzero constant has no roots.
    """
    c = trim_degree(coeffs)
    degree = len(c) - 1
    if degree == 0:
        return []
    if degree == 1:
        candidates = [-c[0] / c[1]]
    else:
        eigenvalues = np.linalg.eigvals(poly.polycompanion(c))
        order = np.argsort(np.abs(eigenvalues.imag))
        eigenvalues = eigenvalues[order]
        expected = _expected_real_count(c)
        if expected >= 0:
            candidates = [z.real for z in eigenvalues[:expected]]
        else:
            candidates = [z.real for z in eigenvalues
                          if abs(z.imag) <= config.IMAG_REL_TOL * (1.0 + abs(z.real))]

    roots = []
    for x in candidates:
        x = newton_polish(c, x)
        residual = abs(poly.polyval(x, c))
        if residual <= config.ROOT_RESIDUAL_ACCEPT * poly_scale(c, x):
            roots.append(x)
        else:
            logger.debug("Rejected root candidate %.6g (residual %.3g)", x, residual)

    roots.sort()
    distinct: List[float] = []
    for x in roots:
        if distinct and abs(x - distinct[-1]) <= dedup_tol:
            continue
        distinct.append(x)
    return distinct
