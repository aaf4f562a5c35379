# tests/test_mapping.py
# Unit tests for metric-pair quantities, residual checks and classification

import unittest
import os
import sys

import numpy as np
from hypothesis import given, settings, strategies as st

# Add parent directory to path
parent_dir = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if parent_dir not in sys.path:
    sys.path.insert(0, parent_dir)

from business_logic.geometry import GeometryService, random_points
from business_logic.mapping import MappingService, a_from, reconstruct_point
from business_logic.sinyukov import SinyukovService
from data_access.metric_repository import MetricRepository
from data_access.models import (
    Backend, DegenerateSolutionError, EquationId, IncompatibleChartsError, MappingClass, SourceNotEinsteinError
)

BELTRAMI_PAIRS = [
    ('sphere_gnomonic2', 'flat2'),
    ('hyperbolic_klein2', 'flat2'),
    ('sphere_gnomonic3', 'flat3'),
    ('hyperbolic_klein3', 'flat3'),
    ('sphere_gnomonic3', 'hyperbolic_klein3'),
]

NEGATIVE_CONTROLS = [('flat2', 'warped2'), ('flat3', 'warped3')]


def well_conditioned_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    b = rng.uniform(-0.5, 0.5, (n, n))
    return n * np.eye(n) + 0.5 * b @ b.T


class MappingTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.repository = MetricRepository()
        cls.geometry = GeometryService()
        cls.mapping = MappingService(cls.geometry)
        cls.metrics = {}

    def metric(self, name):
        if name not in self.metrics:
            self.metrics[name] = self.repository.load_metric_spec(name)
        return self.metrics[name]

    def grid(self, name, points_per_axis=3):
        return self.geometry.sample_grid(self.metric(name).chart, points_per_axis)


class TestMappingEval(MappingTestCase):
    """Test pointwise pair quantities"""

    def test_sphere_to_plane_at_origin(self):
        e = self.mapping.mapping_eval(self.metric('sphere_gnomonic2'), self.metric('flat2'), [0.0, 0.0])
        self.assertAlmostEqual(e.Psi, 0.0, places=14)
        np.testing.assert_allclose(e.psi, 0.0, atol=1e-14)
        np.testing.assert_allclose(e.a, np.eye(2), atol=1e-14)
        self.assertAlmostEqual(e.lam, 1.0, places=14)

    def test_sphere_to_plane_off_origin(self):
        e = self.mapping.mapping_eval(self.metric('sphere_gnomonic2'), self.metric('flat2'), [0.3, 0.4])
        self.assertAlmostEqual(e.Psi, 0.5 * np.log(1.25), places=13)
        np.testing.assert_allclose(e.psi, [0.24, 0.32], atol=1e-13)
        np.testing.assert_allclose(e.a, e.a.T, atol=1e-14)
        self.assertLess(e.lambda_discrepancy, 1e-12)

    def test_identity_pair_is_trivial(self):
        e = self.mapping.mapping_eval(self.metric('warped3'), self.metric('warped3'), [0.1, 0.2, -0.3])
        self.assertEqual(e.Psi, 0.0)
        np.testing.assert_allclose(e.a, self.geometry.metric_jet(self.metric('warped3'), [0.1, 0.2, -0.3], 0).g,
                                   atol=1e-14)
        np.testing.assert_allclose(e.lambda_, 0.0, atol=1e-14)

    def test_finite_difference_backend(self):
        exact = self.mapping.mapping_eval(self.metric('hyperbolic_klein2'), self.metric('flat2'), [0.2, -0.1])
        approx = self.mapping.mapping_eval(self.metric('hyperbolic_klein2'), self.metric('flat2'), [0.2, -0.1],
                                           Backend.FINITE_DIFFERENCE)
        np.testing.assert_allclose(approx.psi, exact.psi, atol=1e-8)
        np.testing.assert_allclose(approx.lambda_, exact.lambda_, atol=1e-8)

    def test_mismatched_charts(self):
        with self.assertRaises(IncompatibleChartsError):
            self.mapping.mapping_eval(self.metric('flat2'), self.metric('flat3'), [0.0, 0.0])
        with self.assertRaises(IncompatibleChartsError):
            self.mapping.mapping_eval(self.metric('polar_flat2'), self.metric('flat2'), [1.0, 0.0])


class TestResiduals(MappingTestCase):
    """Test the Levi-Civita, Sinyukov and curvature-transfer residuals"""

    def test_beltrami_pairs_pass_both_formulations(self):
        for source, target in BELTRAMI_PAIRS:
            g, gbar = self.metric(source), self.metric(target)
            grid = self.grid(source)
            levi_civita = self.mapping.levi_civita_residual(g, gbar, grid)
            sinyukov = self.mapping.sinyukov_residual(g, gbar, grid)
            self.assertTrue(levi_civita.passed, f"{source}->{target}: {levi_civita}")
            self.assertTrue(sinyukov.passed, f"{source}->{target}: {sinyukov}")
            self.assertLess(levi_civita.block('connection_deformation').max, 1e-8)

    def test_negative_control_fails_both_formulations(self):
        g, gbar = self.metric('flat2'), self.metric('warped2')
        grid = self.grid('flat2')
        levi_civita = self.mapping.levi_civita_residual(g, gbar, grid)
        sinyukov = self.mapping.sinyukov_residual(g, gbar, grid)
        self.assertFalse(levi_civita.passed)
        self.assertFalse(sinyukov.passed)
        self.assertGreater(levi_civita.global_max, 1e-3)
        self.assertGreater(sinyukov.global_max, 1e-3)
        self.assertAlmostEqual(abs(levi_civita.worst_point()[0]), 0.36, places=12)

    def test_finite_difference_tolerance(self):
        g, gbar = self.metric('sphere_gnomonic2'), self.metric('flat2')
        report = self.mapping.levi_civita_residual(g, gbar, self.grid('flat2'), Backend.FINITE_DIFFERENCE)
        self.assertEqual(report.tolerance, 1e-4)
        self.assertTrue(report.passed)
        self.assertEqual(report.metadata['backend'], 'fd')

    def test_projective_weyl_is_invariant(self):
        g, gbar = self.metric('sphere_gnomonic3'), self.metric('flat3')
        report = self.mapping.curvature_transform_residual(g, gbar, self.grid('flat3'))
        self.assertLess(report.block('weyl_difference').max, 1e-8)
        self.assertLess(report.block('riemann_transform').max, 1e-8)
        self.assertLess(report.block('ricci_transform').max, 1e-8)
        self.assertFalse(report.metadata['informational'])

    def test_constant_rescaling_is_affine(self):
        report = self.mapping.levi_civita_residual(self.metric('flat4'), self.repository.load_metric_spec('flat4_x4'),
                                                   self.grid('flat4', 2))
        self.assertEqual(report.global_max, 0.0)
        self.assertEqual(report.metadata['max_psi'], 0.0)

    def test_finite_differences_agree_with_analytic_residuals(self):
        rng = np.random.default_rng(31)
        sinyukov = SinyukovService(self.geometry, self.mapping)
        checks = [self.mapping.levi_civita_residual, self.mapping.sinyukov_residual,
                  self.mapping.curvature_transform_residual, sinyukov.integrability_residual,
                  sinyukov.second_sinyukov_residual]
        for source, target in BELTRAMI_PAIRS + NEGATIVE_CONTROLS:
            g, gbar = self.metric(source), self.metric(target)
            points = random_points(g.chart, 10, rng)
            for check in checks:
                exact = check(g, gbar, points).per_point
                approx = check(g, gbar, points, Backend.FINITE_DIFFERENCE).per_point
                np.testing.assert_array_less(np.abs(approx - exact), 1e-4 * (1.0 + np.abs(exact)),
                                             f"{source}->{target}: {check.__name__}")


class TestEinsteinSuite(MappingTestCase):
    """Test the Einstein transfer chain"""

    def test_sphere_to_flat(self):
        g, gbar = self.metric('sphere_gnomonic4'), self.metric('flat4')
        report = self.mapping.einstein_suite(g, gbar, self.grid('flat4'))
        self.assertTrue(report.passed, str(report))
        self.assertAlmostEqual(report.metadata['K'], -1.0, places=9)
        self.assertAlmostEqual(report.metadata['K_bar'], 0.0, places=8)
        self.assertTrue(report.extra_conditions['K_bar_constant'])
        self.assertEqual(len(report.blocks), 5)

    def test_hyperbolic_to_flat(self):
        g, gbar = self.metric('hyperbolic_klein3'), self.metric('flat3')
        report = self.mapping.einstein_suite(g, gbar, self.grid('flat3'))
        self.assertTrue(report.passed, str(report))
        self.assertAlmostEqual(report.metadata['K'], 1.0, places=9)

    def test_source_must_be_einstein(self):
        with self.assertRaises(SourceNotEinsteinError) as ctx:
            self.mapping.einstein_suite(self.metric('warped4'), self.metric('flat4'), self.grid('flat4'))
        self.assertIn("source not Einstein", str(ctx.exception))

    def test_mapping_eval_with_K(self):
        e = self.mapping.mapping_eval(self.metric('sphere_gnomonic3'), self.metric('flat3'), [0.1, 0.0, -0.2], K=-1.0)
        self.assertEqual(e.K, -1.0)
        self.assertAlmostEqual(e.K_bar, 0.0, places=9)
        self.assertEqual(e.Lambda.shape, (3, 3))


class TestReconstruction(MappingTestCase):
    """Test a <-> g_bar algebra"""

    def test_round_trip_on_random_pairs(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(2, 5))
            g, gbar = well_conditioned_spd(rng, n), well_conditioned_spd(rng, n)
            a, Psi = a_from(g, gbar)
            rebuilt, Psi_rebuilt = reconstruct_point(g, a)
            self.assertLess(np.max(np.abs(rebuilt - gbar)), 1e-12)
            self.assertAlmostEqual(Psi_rebuilt, Psi, places=12)

    def test_a_survives_reconstruction(self):
        rng = np.random.default_rng(77)
        for _ in range(200):
            n = int(rng.integers(2, 7))
            g, a = well_conditioned_spd(rng, n), well_conditioned_spd(rng, n)
            gbar, _ = reconstruct_point(g, a)
            recovered, _ = a_from(g, gbar)
            self.assertLess(np.max(np.abs(recovered - a)), 1e-12 * np.max(np.abs(a)) * n)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.1, 10.0))
    def test_scalar_multiple_of_g(self, c):
        g = np.array([[2.0, 0.3], [0.3, 1.0]])
        a, Psi = a_from(g, c * g)
        self.assertAlmostEqual(Psi, np.log(c) / 3.0, places=12)
        np.testing.assert_allclose(a, c ** (-1.0 / 3.0) * g, rtol=1e-12)

    def test_degenerate_a(self):
        g = np.eye(2)
        with self.assertRaises(DegenerateSolutionError):
            reconstruct_point(g, np.diag([1.0, 0.0]))
        with self.assertRaises(DegenerateSolutionError):
            reconstruct_point(g, np.zeros((2, 2)))

    def test_reconstruct_on_grid(self):
        g, gbar = self.metric('sphere_gnomonic2'), self.metric('flat2')
        grid = self.grid('flat2')
        a_values = [self.mapping.mapping_eval(g, gbar, p).a for p in grid]
        rebuilt, Psi = self.mapping.reconstruct_gbar(g, np.array(a_values), grid)
        np.testing.assert_allclose(rebuilt, np.broadcast_to(np.eye(2), rebuilt.shape), atol=1e-12)
        self.assertEqual(Psi.shape, (len(grid),))


class TestClassification(MappingTestCase):
    """Test the three-way classification"""

    def classify(self, source, target):
        g, gbar = self.metric(source), self.metric(target)
        return self.mapping.classify_mapping([self.mapping.levi_civita_residual(g, gbar, self.grid(source))])

    def test_classes(self):
        self.assertIs(self.classify('flat2', 'flat2'), MappingClass.TRIVIAL_AFFINE)
        self.assertIs(self.classify('sphere_gnomonic2', 'flat2'), MappingClass.NONTRIVIAL_GEODESIC)
        self.assertIs(self.classify('flat2', 'warped2'), MappingClass.NOT_GEODESIC)

    def test_accepts_dict_and_requires_levi_civita(self):
        g = self.metric('flat2')
        report = self.mapping.levi_civita_residual(g, g, self.grid('flat2'))
        self.assertIs(self.mapping.classify_mapping({EquationId.LEVI_CIVITA: report}), MappingClass.TRIVIAL_AFFINE)
        with self.assertRaises(ValueError):
            self.mapping.classify_mapping([self.mapping.sinyukov_residual(g, g, self.grid('flat2'))])


if __name__ == '__main__':
    unittest.main()
