from unittest import TestCase

import numpy as np
import pandas as pd
from numpy.testing import assert_allclose

from spherecl.core.kernels import (
    KernelSpec, ConditionReport, kernel_eval, kernel_eval_pair, kernel_derivative,
    check_conditions, condition_table)
from spherecl.util.errors import SingularEvaluation

GAUSS = KernelSpec('gaussian', {'t': 1.})
LINEAR = KernelSpec('linear', {'t': 1.})
RIESZ = KernelSpec('riesz', {'s': 2.})
LOG = KernelSpec('logarithmic', {'s': 1., 'beta': 1.})


class TestKernelSpec(TestCase):
    def test_validation(self):
        with self.assertRaises(ValueError):
            KernelSpec('imq', {'t': 1.})
        with self.assertRaises(ValueError):
            KernelSpec('gaussian', {'t': 0.})
        with self.assertRaises(ValueError):
            KernelSpec('riesz', {'s': -2.})
        with self.assertRaises(ValueError):
            KernelSpec('riesz', {'s': 0.})
        with self.assertRaises(ValueError):
            KernelSpec('logarithmic', {'s': 1.})
        with self.assertRaises(ValueError):
            KernelSpec('linear', {'t': 1., 's': 2.})
        with self.assertRaises(TypeError):
            KernelSpec('linear', {'t': True})

    def test_dict_form(self):
        spec = KernelSpec.from_dict({'family': 'logarithmic', 'params': {'s': 1, 'beta': 2}})
        self.assertEqual(spec.params, {'s': 1., 'beta': 2.})
        self.assertEqual(KernelSpec.from_dict(spec.to_dict()), spec)
        with self.assertRaises(ValueError):
            KernelSpec.from_dict({'family': 'gaussian', 'params': {'t': 1}, 'extra': 0})


class TestKernelEval(TestCase):
    def test_examples(self):
        self.assertEqual(kernel_eval(GAUSS, 0.), 1.)
        self.assertAlmostEqual(kernel_eval(RIESZ, 4.), 0.25)
        self.assertEqual(kernel_eval(LOG, 0.), 0.)

    def test_riesz_singular(self):
        with self.assertRaises(SingularEvaluation):
            kernel_eval(RIESZ, 0.)
        # negative exponent side has a bounded limit at 0
        self.assertEqual(kernel_eval(KernelSpec('riesz', {'s': -1.}), 0.), 0.)

    def test_range(self):
        with self.assertRaises(ValueError):
            kernel_eval(GAUSS, 4.5)
        with self.assertRaises(ValueError):
            kernel_eval(GAUSS, -0.1)

    def test_pair_examples(self):
        e1, e2 = np.array([1., 0.]), np.array([0., 1.])
        self.assertAlmostEqual(kernel_eval_pair(GAUSS, e1, -e1), np.exp(-4.), places=12)
        self.assertEqual(kernel_eval_pair(GAUSS, e1, e1), 1.)
        self.assertAlmostEqual(kernel_eval_pair(LINEAR, e1, e2), -2.)

    def test_pair_symmetric(self):
        rng = np.random.default_rng(2)
        for spec in [GAUSS, LINEAR, RIESZ, LOG]:
            for _ in range(10):
                u, v = rng.standard_normal((2, 5))
                u /= np.linalg.norm(u)
                v /= np.linalg.norm(v)
                self.assertEqual(kernel_eval_pair(spec, u, v), kernel_eval_pair(spec, v, u))


class TestKernelDerivative(TestCase):
    def test_examples(self):
        self.assertAlmostEqual(kernel_derivative(KernelSpec('gaussian', {'t': 2.}), 1., 1),
                               -2. * np.exp(-2.), places=12)
        self.assertEqual(kernel_derivative(KernelSpec('linear', {'t': 3.}), 2.5, 2), 0.)
        self.assertAlmostEqual(kernel_derivative(LOG, 1., 1), -0.25)

    def test_order_bounds(self):
        with self.assertRaises(ValueError):
            kernel_derivative(GAUSS, 1., 0)
        with self.assertRaises(ValueError):
            kernel_derivative(GAUSS, 1., 7)
        with self.assertRaises(SingularEvaluation):
            kernel_derivative(RIESZ, 0., 1)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        h = 1e-5
        specs = [GAUSS, LINEAR, RIESZ, LOG, KernelSpec('riesz', {'s': -1.}),
                 KernelSpec('gaussian', {'t': 3.})]
        for spec in specs:
            for x in rng.uniform(0.1, 3.9, 20):
                numeric = (kernel_eval(spec, x + h) - kernel_eval(spec, x - h)) / (2. * h)
                analytic = kernel_derivative(spec, x, 1)
                self.assertLessEqual(abs(analytic - numeric), 1e-5 * max(abs(numeric), 1e-3),
                                     msg=f'{spec} at x={x}')

    def test_higher_orders_chain(self):
        # each order is the derivative of the previous one
        h = 1e-5
        for spec in [GAUSS, RIESZ, LOG]:
            for n in range(1, 5):
                x = 1.3
                numeric = (kernel_derivative(spec, x + h, n) - kernel_derivative(spec, x - h, n)) / (2. * h)
                assert_allclose(kernel_derivative(spec, x, n + 1), numeric, rtol=1e-5)


class TestCheckConditions(TestCase):
    def test_gaussian_all_true(self):
        rep = check_conditions(GAUSS, 256)
        self.assertIsInstance(rep, ConditionReport)
        self.assertTrue(rep.all_passed, msg=str(rep.predicates))
        self.assertIsNone(rep.worst_violation)

    def test_linear(self):
        rep = check_conditions(LINEAR, 64)
        self.assertTrue(rep.predicates['decreasing'])
        self.assertTrue(rep.predicates['convex'])
        self.assertTrue(rep.predicates['completely_monotone'])
        self.assertFalse(rep.predicates['strictly_convex'])
        self.assertEqual(rep.worst_violation['margin'], 0.)

    def test_riesz_and_log(self):
        for spec in [RIESZ, LOG]:
            rep = check_conditions(spec, 128)
            self.assertTrue(rep.predicates['decreasing'])
            self.assertTrue(rep.predicates['strictly_convex'])
        self.assertTrue(check_conditions(RIESZ, 64).predicates['completely_monotone'])

    def test_riesz_negative_s_not_cm(self):
        rep = check_conditions(KernelSpec('riesz', {'s': -1.}), 64)
        self.assertTrue(rep.predicates['decreasing'])
        self.assertTrue(rep.predicates['strictly_convex'])
        self.assertFalse(rep.predicates['completely_monotone'])
        self.assertIsNotNone(rep.worst_violation)

    def test_hypotheses_hold_on_valid_params(self):
        for t in [0.5, 1., 2.]:
            rep = check_conditions(KernelSpec('gaussian', {'t': t}), 64)
            self.assertTrue(rep.predicates['decreasing'] and rep.predicates['convex'])
        for s, beta in [(0.5, 1.), (2., 0.5)]:
            rep = check_conditions(KernelSpec('logarithmic', {'s': s, 'beta': beta}), 64)
            self.assertTrue(rep.predicates['decreasing'] and rep.predicates['convex'])

    def test_grid_size(self):
        with self.assertRaises(ValueError):
            check_conditions(GAUSS, 4)

    def test_table(self):
        df = condition_table(GAUSS, 16)
        self.assertIsInstance(df, pd.DataFrame)
        self.assertEqual(list(df.columns), ['x', 'kappa', 'd1', 'd2', 'd3', 'd4', 'd5'])
        self.assertEqual(len(df), 16)
        self.assertAlmostEqual(df['x'].iloc[0], 1e-6)
        self.assertAlmostEqual(df['x'].iloc[-1], 4.)

    def test_report_dict(self):
        out = check_conditions(LINEAR, 16).to_dict()
        self.assertEqual(out['kernel'], LINEAR.to_dict())
        self.assertIn('strictly_convex', out['predicates'])
