#!/usr/bin/env python3
"""
Property suites run by `regsens oracle-check`.

Each suite draws seeded random ground-truth instances, checks one family of
properties on them, and dumps every failing instance as a JSON fixture that
can be replayed with `load_fixture`.
"""
import contextlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from .. import config
from .breakdown import bp_explain_away, bp_sign_change
from .error_handler import ModelError, NumericError, RegsensError, SuiteFailure
from .moments import RegressionSummary
from .oracle import (
    FullDgp,
    construct_extension,
    demo_dgp,
    determinant_residual,
    implied_params,
    lemma_residuals,
    random_dgp,
    random_stream,
)
from .osterset import a3fail_info, cubic_coefficients, delta_values, exclusion_tolerance, solve_identified_set
from .polynomials import real_roots

logger = logging.getLogger(__name__)

SUITES = ("membership", "sharpness", "lemmas", "sign-bound", "cross-oracle")

MEMBERSHIP_TOL = 1e-8
SHARPNESS_TOL = 1e-8
DETERMINANT_TOL = 1e-9
LEMMA_TOL = 1e-10
SIGN_BOUND_SLACK = 1e-9
RATIO_WITNESS = 1.5
CROSS_ORACLE_TOL = 1e-6
CROSS_ORACLE_POINTS = 1_000_000


@dataclass
class SuiteResult:
    """Outcome of one suite; elapsed time is logged but not part of the report."""

    name: str
    instances: int
    failures: List[Dict[str, Any]] = field(default_factory=list)
    fixtures: List[str] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.name,
            "instances": self.instances,
            "passed": self.passed,
            "failures": self.failures,
            "fixtures": self.fixtures,
            "notes": self.notes,
        }


def instance_seed(seed: int, index: int) -> int:
    return (int(seed) * 1_000_003 + index) & 0xFFFFFFFF


def instance_dgp(seed: int, index: int) -> FullDgp:
    """Instances cycle through dim W1 = 1, 2, 3; every fifth has gamma_med proportional to pi1."""
    return random_dgp(instance_seed(seed, index), dim_w1=1 + index % 3,
                      force_proportional=(index % 5 == 4))


def load_fixture(path) -> Tuple[FullDgp, Dict[str, Any]]:
    payload = json.loads(Path(path).read_text())
    return FullDgp.from_dict(payload["dgp"]), payload.get("detail", {})


class SuiteRunner:
    """Run property suites over seeded instances with a progress display."""

    def __init__(self, seed: int, instances: int = config.SUITE_INSTANCES,
                 fixture_dir: Optional[str] = None, show_progress: bool = False,
                 fault: float = 0.0):
        self.seed = seed
        self.instances = instances
        self.fixture_dir = Path(fixture_dir) if fixture_dir else None
        self.show_progress = show_progress
        self.fault = fault

    def _progress(self, count: int, label: str):
        if self.show_progress:
            return click.progressbar(range(count), label=label, show_eta=True)
        return contextlib.nullcontext(range(count))

    def _fail(self, result: SuiteResult, index: int, dgp: Optional[FullDgp], detail: Dict[str, Any]) -> None:
        entry = {"instance": index, **detail}
        result.failures.append(entry)
        logger.debug("Suite %s failed on instance %d: %s", result.name, index, detail)
        if self.fixture_dir is None or dgp is None:
            return
        self.fixture_dir.mkdir(parents=True, exist_ok=True)
        path = self.fixture_dir / f"{result.name}-{self.seed}-{index:04d}.json"
        payload = {"suite": result.name, "seed": self.seed, "instance": index,
                   "detail": detail, "dgp": dgp.to_dict()}
        path.write_text(json.dumps(payload, indent=2, default=float))
        result.fixtures.append(str(path))

    def _run(self, name: str, check: Callable[[SuiteResult, int], None],
             count: Optional[int] = None) -> SuiteResult:
        count = self.instances if count is None else count
        result = SuiteResult(name, count)
        start = time.time()
        with self._progress(count, name) as indices:
            for index in indices:
                try:
                    check(result, index)
                except RegsensError as e:
                    self._fail(result, index, None, {"error": str(e), "kind": e.kind})
        result.elapsed = time.time() - start
        logger.info("Suite %s: %d/%d passed in %.1fs", name, count - len(result.failures),
                    count, result.elapsed)
        return result

    # membership: the true beta_long is a root at the true (delta, R2_long)

    def membership(self) -> SuiteResult:
        def check(result: SuiteResult, index: int) -> None:
            dgp = instance_dgp(self.seed, index)
            truth = implied_params(dgp)
            points = solve_identified_set(dgp.summary(), truth.delta_true, truth.r2_long_true)
            gap = min((abs(b - truth.beta_long) for b in points.roots), default=math.inf)
            if gap > MEMBERSHIP_TOL * (1.0 + abs(truth.beta_long)):
                self._fail(result, index, dgp, {"beta_long": truth.beta_long, "roots": list(points.roots),
                                                "delta": truth.delta_true, "r2long": truth.r2_long_true})
        return self._run("membership", check)

    # sharpness: every root extends to a full DGP reproducing it

    def _roots(self, summary: RegressionSummary, delta: float, r2long: float) -> List[float]:
        if not self.fault:
            return list(solve_identified_set(summary, delta, r2long).roots)
        coeffs = cubic_coefficients(summary, delta, r2long).ascending.copy()
        coeffs[3] += self.fault * np.max(np.abs(coeffs))
        info = a3fail_info(summary)
        tol = exclusion_tolerance(summary)
        found = [summary.beta_med - bias for bias in real_roots(coeffs, dedup_tol=tol)]
        return [b for b in found if info.b_fail is None or abs(b - info.b_fail) > tol]

    def sharpness(self) -> SuiteResult:
        def check(result: SuiteResult, index: int) -> None:
            dgp = instance_dgp(self.seed, index)
            summary = dgp.summary()
            rng = random_stream(instance_seed(self.seed, index), "sharpness")
            delta = rng.uniform(-3.0, 3.0)
            if abs(delta - 1.0) < config.SEPARATION:
                delta += 2.0 * config.SEPARATION
            r2long = summary.r2_med + rng.uniform(config.SEPARATION, 1.0) * (1.0 - summary.r2_med)
            observed = dgp.observed()
            for b in self._roots(summary, delta, r2long):
                detail = {"b": b, "delta": delta, "r2long": r2long}
                try:
                    extended = construct_extension(observed, b, delta, r2long)
                    truth = implied_params(extended)
                except (ModelError, NumericError) as e:
                    self._fail(result, index, dgp, {**detail, "error": str(e), "kind": e.kind})
                    continue
                errors = {
                    "delta": abs(truth.delta_true - delta) / (1.0 + abs(delta)),
                    "r2long": abs(truth.r2_long_true - r2long),
                    "b": abs(truth.beta_long - b) / (1.0 + abs(b)),
                }
                det_gap = abs(determinant_residual(extended, r2long))
                if max(errors.values()) > SHARPNESS_TOL or det_gap > DETERMINANT_TOL:
                    self._fail(result, index, dgp, {**detail, "errors": errors, "determinant": det_gap})
        return self._run("sharpness", check)

    # lemmas: regression-algebra identities on every accepted instance

    def lemmas(self) -> SuiteResult:
        def check(result: SuiteResult, index: int) -> None:
            dgp = instance_dgp(self.seed, index)
            residuals = lemma_residuals(dgp)
            bad = {k: v for k, v in residuals.items() if not v <= LEMMA_TOL}
            if bad:
                self._fail(result, index, dgp, {"residuals": bad})
        return self._run("lemmas", check)

    # sign-bound: unrestricted sign-change breakdown never exceeds 1

    def sign_bound(self) -> SuiteResult:
        ratios: List[float] = []

        def check(result: SuiteResult, index: int) -> None:
            dgp = demo_dgp() if index == 0 else instance_dgp(self.seed, index)
            summary = dgp.summary()
            r2long = implied_params(dgp).r2_long_true
            sign = bp_sign_change(summary, r2long)
            if sign.value > 1.0 + SIGN_BOUND_SLACK:
                self._fail(result, index, dgp, {"sign_change": sign.value, "r2long": r2long})
            try:
                _, magnitude = bp_explain_away(summary, r2long)
            except ModelError:
                return
            if sign.value > 0:
                ratios.append(magnitude / sign.value)

        result = self._run("sign-bound", check)
        best = max(ratios, default=0.0)
        result.notes.append(f"largest explain-away / sign-change ratio: {best:.6g}")
        if best <= RATIO_WITNESS:
            result.failures.append({"instance": None, "error": f"no ratio above {RATIO_WITNESS}"})
        return result

    # cross-oracle: critical-point sign change against dense grid minimization

    def cross_oracle(self, count: Optional[int] = None) -> SuiteResult:
        def check(result: SuiteResult, index: int) -> None:
            dgp = instance_dgp(self.seed, index)
            summary = dgp.summary()
            r2long = implied_params(dgp).r2_long_true
            exact = bp_sign_change(summary, r2long)
            dense = grid_sign_change(summary, r2long)
            if abs(exact.value - dense) > CROSS_ORACLE_TOL * max(1.0, abs(dense)):
                self._fail(result, index, dgp, {"critical_point": exact.value, "grid": dense})
        return self._run("cross-oracle", check, count if count is not None else min(self.instances, 100))

    def run(self, suites: Sequence[str] = SUITES) -> List[SuiteResult]:
        runners = {
            "membership": self.membership,
            "sharpness": self.sharpness,
            "lemmas": self.lemmas,
            "sign-bound": self.sign_bound,
            "cross-oracle": self.cross_oracle,
        }
        return [runners[name]() for name in suites]


def grid_sign_change(summary: RegressionSummary, r2long: float, points: int = CROSS_ORACLE_POINTS) -> float:
    """min |delta(b)| over opposite-sign b on a dense grid (linear near the edge, geometric beyond)."""
    edge = abs(summary.beta_med)
    sign = 1.0 if summary.beta_med > 0 else -1.0
    scale = max(edge, 1.0)
    half = points // 2
    bias = np.concatenate([
        edge + np.linspace(0.0, 100.0 * scale, half),
        edge + np.geomspace(100.0 * scale, 1e12 * scale, points - half),
    ])
    b = summary.beta_med - sign * bias
    info = a3fail_info(summary)
    if info.b_fail is not None and sign * info.b_fail <= 0:
        offsets = np.concatenate([10.0 ** -np.arange(3, 10), -(10.0 ** -np.arange(3, 10))])
        near = info.b_fail + offsets * (1.0 + abs(info.b_fail))
        b = np.concatenate([b, near[sign * near <= 0]])
    delta, gap = delta_values(summary, r2long, b)
    return float(np.nanmin(np.abs(np.where(gap, np.nan, delta))))


def assert_passed(results: Sequence[SuiteResult]) -> None:
    """Raise SuiteFailure for the first failing suite."""
    for result in results:
        if not result.passed:
            raise SuiteFailure(f"suite {result.name} failed", kind="failed", suite=result.name,
                               failures=len(result.failures), instances=result.instances)
