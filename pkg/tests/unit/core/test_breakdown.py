#!/usr/bin/env python3
"""
Tests for breakdown points, adjustments and the generic engine
"""
import math
from unittest import TestCase

import numpy as np
import pytest

from regsens import config
from regsens.core.breakdown import (
    BreakdownPoint,
    BreakdownReport,
    GridSpec,
    MapKind,
    SetValuedMap,
    batch_breakdown,
    beta_star,
    bp_directional,
    bp_explain_away,
    bp_sign_change,
    breakdown_report,
    check_relaxation,
    cumulative_delta_map,
    fixed_delta_map,
    generic_bp_directional,
    generic_bp_exact,
    generic_bp_sign,
    interval_relaxation_map,
    naive_breakdown,
    prop1_adjust,
    proportionality_diagnostic,
    set_from_exact_breakdown,
)
from regsens.core.error_handler import ModelError
from regsens.core.oracle import build_dgp, demo_dgp, implied_params, random_dgp
from regsens.core.osterset import MagnitudeBound, delta_for_beta
from tests.helpers import demo_fixture as demo


class TestClosedForms(TestCase):
    """Breakdown points of delta on the demo process"""

    def setUp(self):
        self.summary = demo_dgp().summary()

    def test_explain_away(self):
        signed, magnitude = bp_explain_away(self.summary, demo.R2LONG)
        self.assertAlmostEqual(signed, 2.0, places=10)
        self.assertAlmostEqual(magnitude, 2.0, places=10)

    def test_sign_change_unrestricted(self):
        point = bp_sign_change(self.summary, demo.R2LONG)
        self.assertAlmostEqual(point.value, 1.0, places=12)
        self.assertFalse(point.attained)
        self.assertFalse(point.precluded)

    def test_sign_change_never_exceeds_explain_away(self):
        _, magnitude = bp_explain_away(self.summary, demo.R2LONG)
        self.assertLessEqual(bp_sign_change(self.summary, demo.R2LONG).value, magnitude)

    def test_sign_change_restricted(self):
        point = bp_sign_change(self.summary, demo.R2LONG, demo.SIGN_CHANGE_M)
        self.assertAlmostEqual(point.value, demo.SIGN_CHANGE_RESTRICTED, places=10)
        self.assertTrue(point.attained)
        self.assertAlmostEqual(point.witness, demo.SIGN_CHANGE_WITNESS, places=12)

    def test_sign_change_precluded(self):
        point = bp_sign_change(self.summary, demo.R2LONG, 1.0)
        self.assertTrue(point.precluded)
        self.assertTrue(math.isinf(point.value))
        self.assertFalse(point.attained)

    def test_directional_threshold_above_baseline(self):
        point = bp_directional(self.summary, demo.R2LONG, 2.0, 'below')
        self.assertEqual(point.value, 0.0)
        self.assertTrue(point.attained)
        self.assertEqual(point.witness, self.summary.beta_med)

    def test_directional_removable_limit(self):
        # |delta| -> 0 at the excluded point b = 3, which is never attained
        point = bp_directional(self.summary, demo.R2LONG, 2.5, 'above')
        self.assertAlmostEqual(point.value, 0.0, places=9)
        self.assertFalse(point.attained)
        self.assertAlmostEqual(point.witness, demo.B_FAIL, places=10)

    def test_directional_bad_direction(self):
        with self.assertRaises(ValueError):
            bp_directional(self.summary, demo.R2LONG, 0.0, 'sideways')

    def test_degenerate_r2_rejected(self):
        with self.assertRaises(ModelError) as ctx:
            bp_sign_change(self.summary, self.summary.r2_med)
        self.assertEqual(ctx.exception.kind, "r2_range")

    def test_restricted_is_monotone_in_m(self):
        values = [bp_sign_change(self.summary, demo.R2LONG, M).value for M in (1.5, 2.0, 8 / 3, 5.0, 50.0)]
        self.assertTrue(all(a >= b - 1e-12 for a, b in zip(values, values[1:])))
        self.assertGreaterEqual(values[-1], 1.0)


class TestAdjustments(TestCase):

    def setUp(self):
        self.summary = demo_dgp().summary()

    def test_naive_is_not_the_breakdown_point(self):
        naive = naive_breakdown(self.summary, demo.R2LONG)
        self.assertAlmostEqual(naive, demo.NAIVE, places=9)
        _, magnitude = bp_explain_away(self.summary, demo.R2LONG)
        self.assertNotAlmostEqual(naive, magnitude)

    def test_prop1_adjust(self):
        self.assertAlmostEqual(prop1_adjust(self.summary, demo.R2LONG), demo.PROP1, places=10)

    def test_beta_star(self):
        self.assertAlmostEqual(beta_star(self.summary, 1.0, demo.R2LONG), demo.PROP1, places=10)
        # {0, 1}: 1 is closer to beta_med = 4/3
        self.assertAlmostEqual(beta_star(self.summary, 2.0, demo.R2LONG), 1.0, places=10)

    def test_prop1_matches_cubic_root_at_delta_one(self):
        for seed in (1, 2, 3):
            dgp = random_dgp(seed, dim_w1=1)
            summary = dgp.summary()
            r2long = min(1.0, summary.r2_med + 0.5 * (1.0 - summary.r2_med))
            with self.subTest(seed=seed):
                self.assertAlmostEqual(prop1_adjust(summary, r2long), beta_star(summary, 1.0, r2long),
                                       places=8)

    def test_no_movement(self):
        dgp = build_dgp(np.eye(1), beta_long=1.0, gamma1=[1.0], gamma2=0.5, pi1=[0.0], pi2=0.5,
                        var_x_perp=0.5, var_y_perp=1.0)
        summary = dgp.summary()
        with self.assertRaises(ModelError) as ctx:
            naive_breakdown(summary, 0.99)
        self.assertEqual(ctx.exception.kind, "no_movement")

    def test_proportionality_diagnostic(self):
        diagnostic = proportionality_diagnostic(self.summary)
        self.assertTrue(diagnostic.proportional)
        self.assertAlmostEqual(diagnostic.c_med, 5 / 3, places=12)

    def test_proportionality_fails_for_generic_draw(self):
        diagnostic = proportionality_diagnostic(random_dgp(5, dim_w1=3).summary())
        self.assertFalse(diagnostic.proportional)
        self.assertGreater(diagnostic.rel_residual, config.PROPORTIONALITY_TOL)


class TestBreakdownReport(TestCase):

    def setUp(self):
        self.summary = demo_dgp().summary()

    def test_report_fields(self):
        report = breakdown_report(self.summary, demo.R2LONG, [MagnitudeBound.parse("2x")], "demo")
        self.assertEqual(report.r2_label, "demo")
        self.assertAlmostEqual(report.explain_away, 2.0, places=10)
        self.assertAlmostEqual(report.sign_change.value, 1.0, places=10)
        restricted = report.sign_change_restricted["2x|beta_med|"]
        self.assertAlmostEqual(restricted.value, demo.SIGN_CHANGE_RESTRICTED, places=10)
        self.assertAlmostEqual(report.naive_incorrect, demo.NAIVE, places=9)
        self.assertAlmostEqual(report.prop1_adjustment, demo.PROP1, places=10)
        self.assertEqual(report.notes, [])

    def test_unbounded_m_not_duplicated(self):
        report = breakdown_report(self.summary, demo.R2LONG, [MagnitudeBound()])
        self.assertEqual(report.sign_change_restricted, {})

    def test_to_dict_labels(self):
        payload = breakdown_report(self.summary, demo.R2LONG).to_dict()
        self.assertFalse(payload["naive_incorrect"]["authoritative"])
        self.assertEqual(payload["naive_incorrect"]["label"], config.NAIVE_LABEL)
        self.assertTrue(payload["beta_star"]["bounding_set_caveat"])
        self.assertFalse(payload["sign_change"]["attained"])

    def test_from_dict(self):
        report = breakdown_report(self.summary, demo.R2LONG, [MagnitudeBound.parse("abs:1")])
        restored = BreakdownReport.from_dict(report.to_dict())
        self.assertEqual(restored.sign_change, report.sign_change)
        self.assertTrue(restored.sign_change_restricted["1"].precluded)
        self.assertEqual(restored.naive_incorrect, report.naive_incorrect)

    def test_failures_become_notes(self):
        report = breakdown_report(self.summary, self.summary.r2_med)
        self.assertIsNone(report.sign_change)
        self.assertTrue(any(note.startswith("sign_change") for note in report.notes))

    def test_batch_keeps_order(self):
        rules = [("1", 1.0), ("true", demo.R2LONG), ("1.3x", 1.3 * self.summary.r2_med)]
        reports = batch_breakdown(self.summary, rules, max_workers=2)
        self.assertEqual([r.r2_label for r in reports], ["1", "true", "1.3x"])
        self.assertAlmostEqual(reports[1].explain_away, 2.0, places=10)


class TestBreakdownPoint(TestCase):

    def test_infinite_value_serialized(self):
        payload = BreakdownPoint(math.inf, False, None, True).to_dict()
        self.assertEqual(payload["value"], "+inf")
        self.assertEqual(BreakdownPoint.from_dict(payload), BreakdownPoint(math.inf, False, None, True))


class TestGenericEngine(TestCase):
    """Grid-and-bisection engine over set-valued maps"""

    def setUp(self):
        self.summary = demo_dgp().summary()

    def test_interval_exact(self):
        point = generic_bp_exact(interval_relaxation_map(1.0), 3.0)
        self.assertAlmostEqual(point.value, 2.0, places=8)
        self.assertTrue(point.attained)

    def test_interval_sign(self):
        point = generic_bp_sign(interval_relaxation_map(1.0), 1.0)
        self.assertAlmostEqual(point.value, 1.0, places=8)
        self.assertTrue(point.attained)

    def test_baseline_zero(self):
        with self.assertRaises(ModelError) as ctx:
            generic_bp_sign(interval_relaxation_map(0.0), 0.0)
        self.assertEqual(ctx.exception.kind, "baseline_zero")

    def test_never_reached(self):
        bounded = SetValuedMap(lambda r: [1.0], MapKind.RELAXATION, "constant")
        point = generic_bp_directional(bounded, 0.0, 'below')
        self.assertTrue(math.isinf(point.value))

    def test_set_from_exact_breakdown(self):
        kept = set_from_exact_breakdown(interval_relaxation_map(1.0), [0.0, 0.5, 1.0, 1.5, 2.0], 0.5)
        self.assertEqual(kept, [0.5, 1.0, 1.5])

    def test_cumulative_map_exact_matches_closed_form(self):
        point = generic_bp_exact(cumulative_delta_map(self.summary, demo.R2LONG), 0.0)
        _, magnitude = bp_explain_away(self.summary, demo.R2LONG)
        self.assertAlmostEqual(point.value, magnitude, places=6)
        self.assertTrue(point.attained)

    def test_cumulative_map_sign_escapes(self):
        point = generic_bp_sign(cumulative_delta_map(self.summary, demo.R2LONG), self.summary.beta_med)
        self.assertAlmostEqual(point.value, 1.0, places=6)
        self.assertFalse(point.attained)

    def test_cumulative_map_restricted_sign(self):
        set_map = cumulative_delta_map(self.summary, demo.R2LONG, demo.SIGN_CHANGE_M)
        point = generic_bp_sign(set_map, self.summary.beta_med)
        self.assertAlmostEqual(point.value, demo.SIGN_CHANGE_RESTRICTED, places=6)
        self.assertTrue(point.attained)

    def test_relaxation_checks(self):
        self.assertTrue(check_relaxation(cumulative_delta_map(self.summary, demo.R2LONG), [0.0, 1.0, 2.0]))
        self.assertFalse(check_relaxation(fixed_delta_map(self.summary, demo.R2LONG), [0.0, 1.0, 2.0]))

    def test_deviation_map_scans_linearly(self):
        set_map = fixed_delta_map(self.summary, demo.R2LONG)
        self.assertFalse(set_map.monotone)
        point = generic_bp_exact(set_map, 1.0, GridSpec(points=256))
        self.assertAlmostEqual(point.value, demo.DELTA_TRUE, places=6)
        self.assertTrue(point.attained)

    def test_deviation_map_default_grid(self):
        set_map = fixed_delta_map(self.summary, demo.R2LONG)
        for b in (0.0, 1.0):
            point = generic_bp_exact(set_map, b)
            self.assertAlmostEqual(point.value, demo.DELTA_TRUE, places=6)
            self.assertEqual(point.witness, b)

    def test_deviation_map_negative_delta_never_reached(self):
        # b just above beta_med needs a small negative delta
        b = demo.BETA_MED + 0.1
        self.assertLess(delta_for_beta(self.summary, b, demo.R2LONG), 0.0)
        point = generic_bp_exact(fixed_delta_map(self.summary, demo.R2LONG), b, GridSpec(points=256))
        self.assertTrue(math.isinf(point.value))
        self.assertFalse(point.attained)

    def test_point_relaxation_still_uses_membership(self):
        stepped = SetValuedMap(lambda r: [1.0, 2.0] if r >= 0.5 else [1.0], MapKind.RELAXATION, "step")
        point = generic_bp_exact(stepped, 2.0)
        self.assertAlmostEqual(point.value, 0.5, places=8)
        self.assertTrue(point.attained)


class TestGenericAgainstClosedForms(TestCase):
    """The generic engine agrees with the closed forms on random instances"""

    def test_cumulative_map_matches_explain_away(self):
        checked = 0
        for seed in range(50):
            dgp = random_dgp(seed)
            summary, r2long = dgp.summary(), implied_params(dgp).r2_long_true
            try:
                _, magnitude = bp_explain_away(summary, r2long)
            except ModelError:
                continue
            if magnitude > 0.9 * config.GRID_R_MAX:
                continue
            point = generic_bp_exact(cumulative_delta_map(summary, r2long), 0.0)
            self.assertAlmostEqual(point.value, magnitude, delta=1e-6 * (1.0 + magnitude), msg=f"seed {seed}")
            checked += 1
        self.assertGreater(checked, 30)

    def test_fixed_map_recovers_true_delta(self):
        checked = 0
        for seed in range(50):
            dgp = random_dgp(seed)
            params = implied_params(dgp)
            delta_true = params.delta_true
            set_map = fixed_delta_map(dgp.summary(), params.r2_long_true)
            point = generic_bp_exact(set_map, params.beta_long, GridSpec(points=256))
            if 1e-3 < delta_true < 0.9 * config.GRID_R_MAX:
                self.assertAlmostEqual(point.value, delta_true, delta=1e-6 * (1.0 + delta_true),
                                       msg=f"seed {seed}")
                checked += 1
            elif delta_true < -1e-3:
                self.assertTrue(math.isinf(point.value), msg=f"seed {seed}")
                checked += 1
        self.assertGreater(checked, 30)


@pytest.mark.unit
@pytest.mark.parametrize("seed", [11, 12, 13, 14])
def test_sign_change_at_most_one(seed):
    """Unrestricted sign-change breakdown never exceeds one"""
    dgp = random_dgp(seed, dim_w1=2)
    point = bp_sign_change(dgp.summary(), implied_params(dgp).r2_long_true)
    assert point.value <= 1.0 + 1e-9


@pytest.mark.slow
def test_exact_breakdown_recovers_cumulative_set():
    """b is in the delta_bar = 1 set exactly when its breakdown point is at most 1"""
    summary = demo_dgp().summary()
    set_map = cumulative_delta_map(summary, demo.R2LONG)
    b_values = list(np.linspace(-2.95, 6.05, 1000))
    kept = set_from_exact_breakdown(set_map, b_values, 1.0, GridSpec(points=64))
    union = set_map(1.0)
    assert kept == [b for b in b_values if b in union]
