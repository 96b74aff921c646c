#!/usr/bin/env python3
"""
Tests for real-root extraction
"""
from unittest import TestCase

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from regsens.core.error_handler import NumericError
from regsens.core.polynomials import discriminant, newton_polish, real_roots, trim_degree


class TestTrimDegree(TestCase):

    def test_drops_negligible_leading(self):
        self.assertEqual(len(trim_degree([1.0, 2.0, 1e-20])), 2)

    def test_keeps_real_leading(self):
        self.assertEqual(len(trim_degree([1.0, 2.0, 1e-3])), 3)

    def test_zero_polynomial(self):
        with self.assertRaises(NumericError) as ctx:
            trim_degree([0.0, 0.0, 0.0])
        self.assertEqual(ctx.exception.kind, "zero_polynomial")


class TestRealRoots(TestCase):

    def test_three_distinct_roots(self):
        # (x - 1)(x - 2)(x - 3)
        np.testing.assert_allclose(real_roots([-6.0, 11.0, -6.0, 1.0]), [1.0, 2.0, 3.0], atol=1e-12)

    def test_one_real_root(self):
        # (x - 2)(x^2 + 1)
        np.testing.assert_allclose(real_roots([-2.0, 1.0, -2.0, 1.0]), [2.0], atol=1e-12)

    def test_no_real_roots(self):
        self.assertEqual(real_roots([1.0, 0.0, 1.0]), [])

    def test_constant_has_no_roots(self):
        self.assertEqual(real_roots([5.0]), [])

    def test_linear(self):
        np.testing.assert_allclose(real_roots([2.0, -1.0]), [2.0])

    def test_degree_drop(self):
        # leading coefficient below the degeneracy threshold: treated as a quadratic
        roots = real_roots([-1.0, 0.0, 1.0, 1e-17])
        np.testing.assert_allclose(roots, [-1.0, 1.0], atol=1e-12)

    def test_double_root_merged(self):
        roots = real_roots([1.0, -2.0, 1.0], dedup_tol=1e-6)
        self.assertEqual(len(roots), 1)
        self.assertAlmostEqual(roots[0], 1.0, places=6)

    def test_demo_cubic(self):
        # 3/16 B^3 - 7/16 B + 5/36 has roots B = 1/3 and B = 4/3
        roots = real_roots([5 / 36, -7 / 16, 0.0, 3 / 16])
        self.assertEqual(len(roots), 3)
        np.testing.assert_allclose([roots[1], roots[2]], [1 / 3, 4 / 3], atol=1e-12)
        self.assertAlmostEqual(roots[0], -5 / 3, places=12)


class TestHelpers(TestCase):

    def test_discriminant_sign(self):
        self.assertGreater(discriminant(np.array([-6.0, 11.0, -6.0, 1.0])), 0)
        self.assertLess(discriminant(np.array([-2.0, 1.0, -2.0, 1.0])), 0)
        self.assertLess(discriminant(np.array([1.0, 0.0, 1.0])), 0)

    def test_discriminant_degree(self):
        with self.assertRaises(ValueError):
            discriminant(np.array([1.0, 2.0]))

    def test_newton_polish_improves(self):
        coeffs = np.array([-2.0, 0.0, 1.0])
        self.assertAlmostEqual(newton_polish(coeffs, 1.4), np.sqrt(2.0), places=12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(min_value=-5.0, max_value=5.0), min_size=3, max_size=3))
def test_roots_of_factored_cubic(roots):
    """A cubic built from three well separated roots returns all three"""
    roots = sorted(roots)
    if min(b - a for a, b in zip(roots, roots[1:])) < 0.1:
        return
    coeffs = np.polynomial.polynomial.polyfromroots(roots)
    found = real_roots(coeffs, dedup_tol=1e-9)
    np.testing.assert_allclose(found, roots, atol=1e-7)
