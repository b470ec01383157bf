from unittest import TestCase

import numpy as np
from numpy.testing import assert_allclose

from spherecl.core.geometry import (
    EmbeddingBatch, normalize_rows, tangent_project, regular_simplex)
from spherecl.core.kernels import KernelSpec
from spherecl.core.losses import (
    PhiPsi, ExpLogPhiPsi, LossSpec, make_phi_psi, loss_generic_a, loss_generic_b,
    loss_generic_c, loss_named, loss_kcl, loss_value, loss_grad, loss_terms,
    finite_diff_grad, gradient_relative_error, normalizing_constant, VARIANTS)
from spherecl.util.errors import ArityError, DimensionMismatch, SingularEvaluation

GAUSS = KernelSpec('gaussian', {'t': 1.})
LOG = KernelSpec('logarithmic', {'s': 1., 'beta': 1.})
LINEAR = KernelSpec('linear', {'t': 1.})
ANTIPODAL = EmbeddingBatch([[1., 0.], [-1., 0.]])


def triangle():
    ang = 2. * np.pi * np.arange(3) / 3.
    return EmbeddingBatch(np.c_[np.cos(ang), np.sin(ang)])


def random_pair(rng, M, d):
    return (normalize_rows(rng.standard_normal((M, d))),
            normalize_rows(rng.standard_normal((M, d))))


def plain_phi_psi(tau, plus_one):
    """Direct-formula reduction, no log-sum-exp"""
    psi = np.log1p if plus_one else np.log
    dpsi = (lambda s: 1. / (1. + s)) if plus_one else (lambda s: 1. / s)
    return PhiPsi(phi=lambda x: np.exp(x / tau), dphi=lambda x: np.exp(x / tau) / tau,
                  psi=psi, dpsi=dpsi)


class TestLossSpec(TestCase):
    def test_required_fields(self):
        with self.assertRaises(ValueError):
            LossSpec('infonce')
        with self.assertRaises(ValueError):
            LossSpec('infonce', tau=1., gamma=1.)
        with self.assertRaises(ValueError):
            LossSpec('kcl', kernel_a=GAUSS, kernel_u=GAUSS)
        with self.assertRaises(ValueError):
            LossSpec('kcl', kernel_a=GAUSS, kernel_u=GAUSS, gamma=0.)
        with self.assertRaises(ValueError):
            LossSpec('infonce', tau=-1.)
        with self.assertRaises(ValueError):
            LossSpec('triplet', tau=1.)

    def test_dict_form(self):
        data = {'variant': 'kcl', 'gamma': 2, 'symmetric': True,
                'kernel_a': {'family': 'gaussian', 'params': {'t': 1}},
                'kernel_u': {'family': 'logarithmic', 'params': {'s': 1, 'beta': 1}}}
        spec = LossSpec.from_dict(data)
        self.assertEqual(spec.gamma, 2.)
        self.assertEqual(LossSpec.from_dict(spec.to_dict()).to_dict(), spec.to_dict())
        gen = LossSpec.from_dict({'variant': 'generic_b', 'phi_psi': {'name': 'exp_log', 'tau': 0.5}})
        self.assertIsInstance(gen.phi_psi, ExpLogPhiPsi)
        self.assertEqual(gen.to_dict()['phi_psi'], {'name': 'exp_log', 'tau': 0.5})
        with self.assertRaises(ValueError):
            LossSpec.from_dict({'variant': 'infonce', 'tau': 1, 'temperature': 1})


class TestGenericLosses(TestCase):
    def test_generic_a_examples(self):
        pp = make_phi_psi('exp_log1p', tau=1.)
        self.assertAlmostEqual(loss_generic_a(ANTIPODAL, ANTIPODAL, pp), np.log1p(np.exp(-2.)), places=12)
        self.assertAlmostEqual(loss_generic_a(ANTIPODAL, ANTIPODAL, pp), 0.1269280, places=7)
        same = EmbeddingBatch([[1., 0.], [1., 0.]])
        self.assertAlmostEqual(loss_generic_a(same, same, pp), np.log(2.), places=12)

    def test_generic_b_examples(self):
        self.assertAlmostEqual(loss_generic_b(ANTIPODAL, ANTIPODAL, make_phi_psi('exp_log1p')),
                               0.2395672, places=7)
        self.assertAlmostEqual(loss_generic_b(ANTIPODAL, ANTIPODAL, make_phi_psi('exp_log')),
                               np.log(2.) - 2., places=12)

    def test_generic_c_examples(self):
        pp = make_phi_psi('exp_log')
        self.assertAlmostEqual(loss_generic_c(ANTIPODAL, ANTIPODAL, pp), -2., places=12)
        self.assertAlmostEqual(loss_generic_c(triangle(), triangle(), pp), np.log(2.) - 1.5, places=12)

    def test_generic_c_depends_on_v_only_through_diagonal(self):
        rng = np.random.default_rng(0)
        U, V = random_pair(rng, 5, 4)
        pp = make_phi_psi('exp_log', tau=0.5)
        # reflect each v_i across u_i: keeps <u_i, v_i>, changes every other product
        P, Q = U.points, V.points
        Qr = 2. * np.sum(P * Q, axis=1)[:, None] * P - Q
        self.assertAlmostEqual(loss_generic_c(U, V, pp), loss_generic_c(U, normalize_rows(Qr), pp), places=12)

    def test_identity_matches_double_loop(self):
        rng = np.random.default_rng(1)
        pp = make_phi_psi('identity')
        U, V = random_pair(rng, 6, 3)
        P, Q = U.points, V.points
        M = 6
        a = sum((Q[j] - Q[i]) @ P[i] for i in range(M) for j in range(M) if j != i) / M
        b = a + sum((P[j] - Q[i]) @ P[i] for i in range(M) for j in range(M) if j != i) / M
        self.assertAlmostEqual(loss_generic_a(U, V, pp), a, places=12)
        self.assertAlmostEqual(loss_generic_b(U, V, pp), b, places=12)

    def test_arity_and_shape(self):
        one = EmbeddingBatch([[1., 0.]])
        with self.assertRaises(ArityError):
            loss_generic_a(one, one, make_phi_psi('identity'))
        with self.assertRaises(DimensionMismatch):
            loss_generic_a(ANTIPODAL, triangle(), make_phi_psi('identity'))


class TestNamedLosses(TestCase):
    def test_examples(self):
        self.assertAlmostEqual(loss_named(LossSpec('infonce', tau=1.), ANTIPODAL, ANTIPODAL), 0.1269280, places=7)
        self.assertAlmostEqual(loss_named(LossSpec('dhel', tau=1.), ANTIPODAL, ANTIPODAL), -2., places=12)
        self.assertEqual(loss_named(LossSpec('dhel', tau=1., symmetric=True), triangle(), triangle()),
                         loss_named(LossSpec('dhel', tau=1.), triangle(), triangle()))

    def test_named_equal_generic(self):
        table = {'infonce': (loss_generic_a, True), 'simclr': (loss_generic_b, True),
                 'dcl': (loss_generic_b, False), 'dhel': (loss_generic_c, False)}
        rng = np.random.default_rng(42)
        for _ in range(50):
            M = int(rng.choice([2, 4, 8]))
            d = int(rng.choice([3, 8]))
            U, V = random_pair(rng, M, d)
            for variant, (generic, plus_one) in table.items():
                named = loss_named(LossSpec(variant, tau=1.), U, V)
                self.assertLessEqual(abs(named - generic(U, V, plain_phi_psi(1., plus_one))), 1e-12)
                named = loss_named(LossSpec(variant, tau=0.2), U, V)
                self.assertLessEqual(abs(named - generic(U, V, ExpLogPhiPsi(0.2, plus_one))), 1e-12)

    def test_symmetric_swap(self):
        rng = np.random.default_rng(8)
        U, V = random_pair(rng, 5, 4)
        specs = [LossSpec(_v, tau=0.5, symmetric=True) for _v in ('infonce', 'simclr', 'dcl', 'dhel')]
        specs.append(LossSpec('kcl', kernel_a=GAUSS, kernel_u=LOG, gamma=1., symmetric=True))
        for spec in specs:
            self.assertEqual(loss_value(spec, U, V), loss_value(spec, V, U))

    def test_wrong_variant(self):
        with self.assertRaises(ValueError):
            loss_named(LossSpec('kcl', kernel_a=GAUSS, kernel_u=GAUSS, gamma=1.), ANTIPODAL, ANTIPODAL)

    def test_small_tau_is_finite(self):
        rng = np.random.default_rng(9)
        U, V = random_pair(rng, 8, 4)
        for variant in ('infonce', 'simclr', 'dcl', 'dhel'):
            self.assertTrue(np.isfinite(loss_named(LossSpec(variant, tau=1e-3), U, V)))


class TestKCL(TestCase):
    def test_examples(self):
        spec = LossSpec('kcl', kernel_a=GAUSS, kernel_u=GAUSS, gamma=1.)
        self.assertAlmostEqual(loss_kcl(spec, ANTIPODAL, ANTIPODAL), -1. + np.exp(-4.), places=12)
        spec = LossSpec('kcl', kernel_a=GAUSS, kernel_u=LINEAR, gamma=2.)
        terms = loss_terms(spec, triangle(), triangle())
        self.assertAlmostEqual(terms['uniformity'], 2. * -3., places=12)

    def test_small_gamma_limit(self):
        rng = np.random.default_rng(4)
        U, V = random_pair(rng, 6, 3)
        spec = LossSpec('kcl', kernel_a=GAUSS, kernel_u=GAUSS, gamma=1e-12)
        align = -np.mean(np.exp(-np.sum((U.points - V.points) ** 2, axis=1)))
        self.assertAlmostEqual(loss_kcl(spec, U, V), align, places=10)

    def test_uniformity_independent_of_v(self):
        rng = np.random.default_rng(5)
        U, V1 = random_pair(rng, 6, 3)
        _, V2 = random_pair(rng, 6, 3)
        for spec in [LossSpec('kcl', kernel_a=GAUSS, kernel_u=LOG, gamma=1.),
                     LossSpec('dhel', tau=0.5)]:
            self.assertAlmostEqual(loss_terms(spec, U, V1)['uniformity'],
                                   loss_terms(spec, U, V2)['uniformity'], places=12)

    def test_alignment_invariant_to_joint_permutation(self):
        rng = np.random.default_rng(6)
        U, V = random_pair(rng, 6, 3)
        perm = rng.permutation(6)
        spec = LossSpec('kcl', kernel_a=GAUSS, kernel_u=GAUSS, gamma=1.)
        Up, Vp = EmbeddingBatch(U.points[perm]), EmbeddingBatch(V.points[perm])
        self.assertAlmostEqual(loss_terms(spec, U, V)['alignment'],
                               loss_terms(spec, Up, Vp)['alignment'], places=12)

    def test_riesz_coincident_pair(self):
        spec = LossSpec('kcl', kernel_a=KernelSpec('riesz', {'s': 2.}), kernel_u=GAUSS, gamma=1.)
        with self.assertRaises(SingularEvaluation):
            loss_kcl(spec, ANTIPODAL, ANTIPODAL)


class TestGradients(TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1234)
        self.specs = []
        for tau in [0.1, 0.5, 1.]:
            for variant in ('infonce', 'simclr', 'dcl', 'dhel'):
                for sym in (False, True):
                    self.specs.append(LossSpec(variant, tau=tau, symmetric=sym))
        for ka, ku in [(GAUSS, GAUSS), (GAUSS, LOG), (LOG, LINEAR),
                       (GAUSS, KernelSpec('riesz', {'s': 1.}))]:
            for sym in (False, True):
                self.specs.append(LossSpec('kcl', kernel_a=ka, kernel_u=ku, gamma=1.5, symmetric=sym))
        for name in ('identity', 'exp_log1p', 'exp_log'):
            for variant in ('generic_a', 'generic_b', 'generic_c'):
                self.specs.append(LossSpec(variant, phi_psi=make_phi_psi(name, tau=0.5)))

    def tearDown(self):
        del self.rng, self.specs

    def test_matches_finite_differences(self):
        for spec in self.specs:
            worst = 0.
            for _ in range(20):
                U, V = random_pair(self.rng, 4, 3)
                err = gradient_relative_error(loss_grad(spec, U, V), finite_diff_grad(spec, U, V, 1e-6))
                worst = max(worst, err)
            self.assertLess(worst, 1e-5, msg=f'{spec.to_dict()}')

    def test_stationary_at_simplex(self):
        S = regular_simplex(4, 8)
        gU, gV = loss_grad(LossSpec('dhel', tau=0.5, symmetric=True), S, S)
        norm = np.linalg.norm(np.r_[tangent_project(S.points, gU), tangent_project(S.points, gV)])
        self.assertLess(norm, 1e-8)

    def test_stationary_kcl_antipodal(self):
        spec = LossSpec('kcl', kernel_a=GAUSS, kernel_u=GAUSS, gamma=1.)
        gU, gV = loss_grad(spec, ANTIPODAL, ANTIPODAL)
        P = ANTIPODAL.points
        assert_allclose(tangent_project(P, gU), 0., atol=1e-14)
        assert_allclose(tangent_project(P, gV), 0., atol=1e-14)

    def test_constant_loss_zero_gradient(self):
        pp = PhiPsi(phi=lambda x: np.ones_like(x), dphi=lambda x: np.zeros_like(x),
                    psi=lambda s: s, dpsi=lambda s: np.ones_like(s))
        U, V = random_pair(self.rng, 4, 3)
        spec = LossSpec('generic_a', phi_psi=pp)
        for g in finite_diff_grad(spec, U, V, 1e-6):
            assert_allclose(g, 0., atol=1e-12)
        self.assertAlmostEqual(loss_value(spec, U, V), 3.)

    def test_second_order_accuracy(self):
        U, V = random_pair(self.rng, 4, 3)
        spec = LossSpec('infonce', tau=1.)
        exact = loss_grad(spec, U, V)

        def err(h):
            num = finite_diff_grad(spec, U, V, h)
            return max(np.max(np.abs(exact[0] - num[0])), np.max(np.abs(exact[1] - num[1])))
        ratio = err(1e-3) / err(5e-4)
        self.assertGreater(ratio, 3.)
        self.assertLess(ratio, 5.)

    def test_step_bounds(self):
        with self.assertRaises(ValueError):
            finite_diff_grad(LossSpec('infonce', tau=1.), ANTIPODAL, ANTIPODAL, 1e-2)


class TestSimplexIsMinimum(TestCase):
    def test_named_losses_minimised_by_simplex(self):
        rng = np.random.default_rng(77)
        M, d = 4, 8
        S = regular_simplex(M, d)
        specs = [LossSpec(_v, tau=0.5, symmetric=True) for _v in ('infonce', 'simclr', 'dcl', 'dhel')]
        specs.append(LossSpec('kcl', kernel_a=GAUSS, kernel_u=GAUSS, gamma=1., symmetric=True))
        for spec in specs:
            best = loss_value(spec, S, S)
            others = [loss_value(spec, *random_pair(rng, M, d)) for _ in range(1000)]
            self.assertGreater(min(others) - best, 0., msg=spec.variant)


class TestNormalizingConstant(TestCase):
    def test_examples(self):
        self.assertAlmostEqual(normalizing_constant('infonce', 3), np.log(2.))
        self.assertEqual(normalizing_constant('kcl', 17), 0.)
        self.assertAlmostEqual(normalizing_constant('simclr', 2), np.log(2.))
        self.assertAlmostEqual(normalizing_constant('dcl', 5), np.log(8.))
        self.assertAlmostEqual(normalizing_constant('dhel', 5), np.log(4.))

    def test_errors(self):
        with self.assertRaises(ArityError):
            normalizing_constant('infonce', 1)
        with self.assertRaises(ValueError):
            normalizing_constant('generic_a', 4)

    def test_variants_listed(self):
        self.assertIn('kcl', VARIANTS)
        self.assertEqual(len(VARIANTS), 8)


class TestNumpyScalars(TestCase):
    def test_numpy_hyperparameters(self):
        spec = LossSpec('infonce', tau=np.float64(0.5))
        self.assertEqual(spec, LossSpec('infonce', tau=0.5))
        self.assertIsInstance(spec.tau, float)
        kcl = LossSpec('kcl', kernel_a=KernelSpec('gaussian', {'t': 1.}),
                       kernel_u=KernelSpec('gaussian', {'t': 1.}), gamma=np.int64(2))
        self.assertEqual(kcl.gamma, 2.)
        self.assertAlmostEqual(normalizing_constant('infonce', np.int64(5)), np.log(4.), places=12)
        with self.assertRaises(TypeError):
            LossSpec('infonce', tau=True)
