# tests/test_geometry.py
# Unit tests for metric jets, connection, curvature and the Einstein check

import unittest
import os
import sys

import numpy as np

# Add parent directory to path
parent_dir = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if parent_dir not in sys.path:
    sys.path.insert(0, parent_dir)

from business_logic.geometry import GeometryService, first_bianchi_residual, random_points
from data_access.metric_repository import MetricRepository
from data_access.models import Backend, GeodesicMappingError, SingularMetricError, UnsupportedPrecisionError

CORPUS_METRICS = [
    'flat2', 'flat3', 'polar_flat2', 'sphere_gnomonic2', 'sphere_gnomonic3', 'sphere_gnomonic4',
    'hyperbolic_klein2', 'hyperbolic_klein3', 'warped2', 'warped3', 'warped4',
]


class GeometryTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.repository = MetricRepository()
        cls.geometry = GeometryService()
        cls.metrics = {}

    def metric(self, name):
        if name not in self.metrics:
            self.metrics[name] = self.repository.load_metric_spec(name)
        return self.metrics[name]


class TestMetricJet(GeometryTestCase):
    """Test analytic and finite-difference jets"""

    def test_flat_jet(self):
        jet = self.geometry.metric_jet(self.metric('flat2'), [0.1, -0.2], 2)
        np.testing.assert_array_equal(jet.g, np.eye(2))
        self.assertEqual(np.count_nonzero(jet.dg), 0)
        self.assertEqual(np.count_nonzero(jet.d2g), 0)

    def test_polar_first_derivative(self):
        jet = self.geometry.metric_jet(self.metric('polar_flat2'), [2.0, 0.5], 1)
        self.assertAlmostEqual(jet.dg[1, 1, 0], 4.0, places=14)
        self.assertIsNone(jet.d2g)

    def test_gnomonic_determinant(self):
        jet = self.geometry.metric_jet(self.metric('sphere_gnomonic2'), [0.3, 0.4], 0)
        self.assertAlmostEqual(jet.det, 1.25 ** -3, places=12)
        np.testing.assert_allclose(jet.g_inv @ jet.g, np.eye(2), atol=1e-12)

    def test_third_order_blocks_are_symmetric(self):
        jet = self.geometry.metric_jet(self.metric('hyperbolic_klein3'), [0.1, 0.2, -0.15], 3)
        np.testing.assert_allclose(jet.d3g, np.transpose(jet.d3g, (1, 0, 2, 3, 4)), atol=0)
        np.testing.assert_allclose(jet.d3g, np.transpose(jet.d3g, (0, 1, 4, 2, 3)), atol=0)
        np.testing.assert_allclose(jet.d2g, np.transpose(jet.d2g, (0, 1, 3, 2)), atol=0)

    def test_point_outside_domain(self):
        with self.assertRaises(GeodesicMappingError):
            self.geometry.metric_jet(self.metric('flat2'), [0.9, 0.0], 1)

    def test_margin_band_is_inside_the_domain(self):
        m = self.metric('flat2')
        _, upper = m.chart.shrunk_box()
        band = [0.5 * (upper[0] + 0.45), 0.0]
        self.assertFalse(m.chart.contains(band, respect_margin=True))
        jet = self.geometry.metric_jet(m, band, 1)
        np.testing.assert_array_equal(jet.g, np.eye(2))
        with self.assertRaises(GeodesicMappingError):
            self.geometry.metric_jet(m, [0.46, 0.0], 1)

    def test_singular_metric(self):
        text = "[chart]\ndimension = 2\ncoordinates = x, y\ndomain.x = -1, 1\ndomain.y = -1, 1\n" \
               "[metric]\ng11 = \"x^2\"\ng22 = \"1\"\n"
        degenerate = self.repository.parse_text(text)
        with self.assertRaises(SingularMetricError):
            self.geometry.metric_jet(degenerate, [0.0, 0.3], 0)

    def test_finite_difference_agrees_with_analytic(self):
        rng = np.random.default_rng(11)
        tolerances = {1: 1e-7, 2: 1e-5, 3: 1e-3}
        for name in CORPUS_METRICS:
            m = self.metric(name)
            points = random_points(m.chart, 10, rng)
            exact = self.geometry.metric_jets(m, points, 3, Backend.ANALYTIC)
            approx = self.geometry.metric_jets(m, points, 3, Backend.FINITE_DIFFERENCE)
            for a, f in zip(exact, approx):
                for order, (da, df) in enumerate(zip(a.derivatives(), f.derivatives()), start=1):
                    scale = 1.0 + np.max(np.abs(da))
                    self.assertLess(np.max(np.abs(da - df)) / scale, tolerances[order], f"{name} order {order}")


class TestConnection(GeometryTestCase):
    """Test Christoffel symbols"""

    def test_flat_connection_vanishes(self):
        gamma = self.geometry.christoffel(self.geometry.metric_jet(self.metric('flat3'), [0.1, 0.2, 0.3], 1))
        self.assertEqual(np.count_nonzero(gamma), 0)

    def test_polar_connection(self):
        gamma = self.geometry.christoffel(self.geometry.metric_jet(self.metric('polar_flat2'), [2.0, 0.3], 1))
        self.assertAlmostEqual(gamma[0, 1, 1], -2.0, places=14)
        self.assertAlmostEqual(gamma[1, 0, 1], 0.5, places=14)
        self.assertAlmostEqual(gamma[1, 1, 0], 0.5, places=14)
        self.assertAlmostEqual(gamma[0, 0, 0], 0.0, places=14)

    def test_polar_connection_from_finite_differences(self):
        jet = self.geometry.metric_jet(self.metric('polar_flat2'), [2.0, 0.3], 1, Backend.FINITE_DIFFERENCE)
        gamma = self.geometry.christoffel(jet)
        self.assertAlmostEqual(gamma[0, 1, 1], -2.0, places=8)
        self.assertAlmostEqual(gamma[1, 0, 1], 0.5, places=8)

    def test_gnomonic_connection_vanishes_at_origin(self):
        jet = self.geometry.metric_jet(self.metric('sphere_gnomonic2'), [0.0, 0.0], 1, Backend.FINITE_DIFFERENCE)
        np.testing.assert_allclose(self.geometry.christoffel(jet), 0.0, atol=1e-10)

    def test_order_zero_jet_is_rejected(self):
        jet = self.geometry.metric_jet(self.metric('flat2'), [0.0, 0.0], 0)
        with self.assertRaises(UnsupportedPrecisionError):
            self.geometry.christoffel(jet)


class TestCurvature(GeometryTestCase):
    """Test Riemann, Ricci, scalar and projective Weyl tensors"""

    def test_polar_flat_has_zero_curvature(self):
        points = random_points(self.metric('polar_flat2').chart, 5, np.random.default_rng(3))
        for c in self.geometry.curvatures(self.metric('polar_flat2'), points):
            np.testing.assert_allclose(c.riemann, 0.0, atol=1e-9)

    def test_sphere_scalar_curvature(self):
        m = self.metric('sphere_gnomonic2')
        points = random_points(m.chart, 10, np.random.default_rng(5))
        scalars = np.array([c.scalar for c in self.geometry.curvatures(m, points)])
        np.testing.assert_allclose(scalars, 2.0, atol=1e-9)
        self.assertLess(np.ptp(scalars), 1e-9)

    def test_sphere_is_projectively_flat(self):
        m = self.metric('sphere_gnomonic3')
        points = random_points(m.chart, 5, np.random.default_rng(7))
        for c in self.geometry.curvatures(m, points):
            np.testing.assert_allclose(self.geometry.weyl_projective(c, 3), 0.0, atol=1e-9)
            self.assertLess(self.geometry.constant_curvature_residual(c, self.geometry.metric_jet(m, c.point, 0).g),
                            1e-9)

    def test_weyl_vanishes_in_dimension_two(self):
        for name in ('warped2', 'hyperbolic_klein2', 'polar_flat2'):
            m = self.metric(name)
            for c in self.geometry.curvatures(m, random_points(m.chart, 4, np.random.default_rng(1))):
                np.testing.assert_allclose(c.weyl, 0.0, atol=1e-10)

    def test_weyl_of_warped3_does_not_vanish(self):
        m = self.metric('warped3')
        c = self.geometry.curvatures(m, np.array([[0.2, 0.1, 0.0]]))[0]
        self.assertGreater(np.max(np.abs(c.weyl)), 1e-3)

    def test_algebraic_symmetries(self):
        rng = np.random.default_rng(13)
        for name in CORPUS_METRICS:
            m = self.metric(name)
            for c in self.geometry.curvatures(m, random_points(m.chart, 3, rng)):
                np.testing.assert_allclose(c.riemann, -np.transpose(c.riemann, (0, 1, 3, 2)), atol=1e-9)
                self.assertLess(first_bianchi_residual(c.riemann), 1e-9, name)
                np.testing.assert_allclose(c.ricci, c.ricci.T, atol=1e-9)
                np.testing.assert_allclose(np.einsum('aija->ij', c.weyl), 0.0, atol=1e-9)
                np.testing.assert_allclose(np.einsum('aiak->ik', c.weyl), 0.0, atol=1e-9)

    def test_constant_rescaling_keeps_curvature(self):
        base, scaled = self.metric('sphere_gnomonic3'), self.repository.load_metric_spec('sphere_gnomonic3_x4')
        points = random_points(base.chart, 4, np.random.default_rng(17))
        for c, cs in zip(self.geometry.curvatures(base, points), self.geometry.curvatures(scaled, points)):
            np.testing.assert_allclose(cs.riemann, c.riemann, atol=1e-9)
            np.testing.assert_allclose(cs.ricci, c.ricci, atol=1e-9)

    def test_curvature_derivatives_need_third_order(self):
        jet = self.geometry.metric_jet(self.metric('sphere_gnomonic2'), [0.1, 0.1], 2)
        with self.assertRaises(UnsupportedPrecisionError):
            self.geometry.curvature(jet, need_derivatives=True)

    def test_constant_curvature_has_parallel_ricci(self):
        m = self.metric('hyperbolic_klein3')
        c = self.geometry.curvature(self.geometry.metric_jet(m, [0.1, -0.2, 0.05], 3), need_derivatives=True)
        self.assertTrue(c.has_derivatives)
        np.testing.assert_allclose(c.nabla_ricci, 0.0, atol=1e-9)
        np.testing.assert_allclose(c.nabla_riemann, 0.0, atol=1e-9)


class TestEinsteinCheck(GeometryTestCase):
    """Test the Einstein-space test"""

    def test_flat_is_einstein(self):
        m = self.metric('flat4')
        report = self.geometry.einstein_check(m, self.geometry.sample_grid(m.chart))
        self.assertTrue(report.is_einstein)
        self.assertEqual(report.K, 0.0)
        self.assertEqual(report.max_residual, 0.0)

    def test_sphere_has_constant_negative_K(self):
        m = self.metric('sphere_gnomonic4')
        grid = self.geometry.sample_grid(m.chart, 3)
        self.assertEqual(len(grid), 81)
        report = self.geometry.einstein_check(m, grid)
        self.assertTrue(report.is_einstein)
        self.assertAlmostEqual(report.K, -1.0, places=9)
        self.assertLess(report.K_spread, 1e-9)

    def test_hyperbolic_has_positive_K(self):
        m = self.metric('hyperbolic_klein3')
        report = self.geometry.einstein_check(m, self.geometry.sample_grid(m.chart, 3))
        self.assertTrue(report.is_einstein)
        self.assertAlmostEqual(report.K, 1.0, places=9)

    def test_warped_metric_is_not_einstein(self):
        m = self.metric('warped4')
        report = self.geometry.einstein_check(m, self.geometry.sample_grid(m.chart, 3))
        self.assertFalse(report.is_einstein)
        self.assertGreater(report.max_residual, 1e-3)


class TestSampling(GeometryTestCase):
    """Test grid sampling inside the chart margin"""

    def test_default_grid_sizes(self):
        self.assertEqual(len(self.geometry.sample_grid(self.metric('flat3').chart)), 125)
        self.assertEqual(len(self.geometry.sample_grid(self.metric('warped4').chart)), 81)

    def test_grid_respects_margin(self):
        chart = self.metric('polar_flat2').chart
        grid = self.geometry.sample_grid(chart, 4)
        lower, upper = chart.shrunk_box()
        self.assertTrue(np.all(grid >= lower - 1e-15) and np.all(grid <= upper + 1e-15))
        self.assertAlmostEqual(grid[:, 0].min(), 0.75, places=14)


if __name__ == '__main__':
    unittest.main()
