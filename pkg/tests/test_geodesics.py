# tests/test_geodesics.py
# Unit tests for geodesic integration and the geodesic correspondence check

import unittest
import os
import sys

import numpy as np
from hypothesis import assume, given, settings, strategies as st

# Add parent directory to path
parent_dir = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if parent_dir not in sys.path:
    sys.path.insert(0, parent_dir)

from business_logic.geodesics import GeodesicService, parallelism_defects
from data_access.metric_repository import MetricRepository
from data_access.models import GeodesicError

vectors = st.lists(st.floats(-5.0, 5.0, allow_nan=False), min_size=3, max_size=3).map(np.array)


class GeodesicTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.repository = MetricRepository()
        cls.geodesics = GeodesicService()
        cls.metrics = {}

    def metric(self, name):
        if name not in self.metrics:
            self.metrics[name] = self.repository.load_metric_spec(name)
        return self.metrics[name]


class TestIntegrateGeodesic(GeodesicTestCase):
    """Test the RK4 geodesic integrator"""

    def test_flat_geodesic_is_a_line(self):
        x0, v0 = np.array([-0.2, 0.1]), np.array([0.3, -0.4])
        curve = self.geodesics.integrate_geodesic(self.metric('flat2'), x0, v0, t_end=0.5, h=0.01)
        self.assertFalse(curve.truncated)
        self.assertEqual(curve.sample_count, 51)
        expected = x0 + curve.times[:, None] * v0
        np.testing.assert_allclose(curve.positions, expected, atol=1e-12)
        np.testing.assert_allclose(curve.accelerations, 0.0, atol=0)

    def test_polar_geodesic_is_a_cartesian_line(self):
        g = self.metric('polar_flat2')
        curve = self.geodesics.integrate_geodesic(g, [2.0, 0.0], [0.3, 0.5], t_end=1.0, h=1e-3)
        self.assertFalse(curve.truncated)
        r, theta = curve.positions[:, 0], curve.positions[:, 1]
        cartesian = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        direction = np.array([0.3, 1.0]) / np.linalg.norm([0.3, 1.0])
        offsets = cartesian - cartesian[0]
        off_line = np.abs(offsets[:, 0] * direction[1] - offsets[:, 1] * direction[0])
        self.assertLess(np.max(off_line), 1e-8)
        self.assertLess(self.geodesics.energy_drift(curve, g), 1e-8)

    def test_energy_is_conserved_on_the_sphere(self):
        g = self.metric('sphere_gnomonic2')
        curve = self.geodesics.integrate_geodesic(g, [0.05, -0.1], [0.6, 0.8], t_end=0.2, h=1e-3)
        self.assertLess(self.geodesics.energy_drift(curve, g), 1e-8)

    def test_truncation_at_the_boundary(self):
        curve = self.geodesics.integrate_geodesic(self.metric('flat2'), [0.4, 0.0], [1.0, 0.0], t_end=1.0, h=0.01)
        self.assertTrue(curve.truncated)
        self.assertIn("left the domain", curve.reason)
        self.assertLess(curve.sample_count, 101)
        self.assertLessEqual(curve.positions[-1, 0], 0.45 + 1e-12)
        self.assertEqual(len(curve.accelerations), curve.sample_count)

    def test_invalid_seeds(self):
        g = self.metric('flat2')
        with self.assertRaises(GeodesicError):
            self.geodesics.integrate_geodesic(g, [0.9, 0.0], [1.0, 0.0])
        with self.assertRaises(GeodesicError):
            self.geodesics.integrate_geodesic(g, [0.0, 0.0], [0.0, 0.0])
        with self.assertRaises(GeodesicError):
            self.geodesics.integrate_geodesic(g, [0.0, 0.0], [1.0, 0.0], h=0.0)

    def test_seeded_sampling_is_reproducible(self):
        g = self.metric('sphere_gnomonic2')
        first = self.geodesics.sample_geodesics(g, 3, np.random.default_rng(3), t_end=0.1, h=0.01)
        second = self.geodesics.sample_geodesics(g, 3, np.random.default_rng(3), t_end=0.1, h=0.01)
        self.assertEqual(len(first), 3)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.positions, b.positions)
            self.assertAlmostEqual(np.linalg.norm(a.velocities[0]), 1.0, places=14)


class TestCorrespondence(GeodesicTestCase):
    """Test that mapped geodesics stay geodesics up to parametrisation"""

    def test_sphere_geodesics_are_straight_in_the_plane(self):
        g, gbar = self.metric('sphere_gnomonic2'), self.metric('flat2')
        for curve in self.geodesics.sample_geodesics(g, 20, np.random.default_rng(1), t_end=0.2, h=5e-3):
            self.assertLess(self.geodesics.correspondence_residual(curve, gbar), 1e-6)

    def test_other_beltrami_pairs(self):
        for source, target in (('hyperbolic_klein2', 'flat2'), ('sphere_gnomonic3', 'flat3'),
                               ('hyperbolic_klein3', 'flat3')):
            g, gbar = self.metric(source), self.metric(target)
            for curve in self.geodesics.sample_geodesics(g, 20, np.random.default_rng(4), t_end=0.2, h=5e-3):
                self.assertLess(self.geodesics.correspondence_residual(curve, gbar), 1e-6, f"{source}->{target}")

    def test_negative_control(self):
        curve = self.geodesics.integrate_geodesic(self.metric('flat2'), [0.2, -0.1],
                                                  np.array([1.0, 1.0]) / np.sqrt(2.0), t_end=0.2, h=0.01)
        self.assertGreater(self.geodesics.correspondence_residual(curve, self.metric('warped2')), 1e-3)

    def test_geodesic_against_itself(self):
        g = self.metric('hyperbolic_klein2')
        curve = self.geodesics.integrate_geodesic(g, [0.1, 0.1], [0.3, -0.7], t_end=0.3, h=0.01)
        self.assertLess(self.geodesics.correspondence_residual(curve, g), 1e-12)


class TestParallelismDefect(unittest.TestCase):
    """Test the scale-invariant defect"""

    def test_parallel_vectors(self):
        defects = parallelism_defects(np.array([[2.0, -4.0]]), np.array([[1.0, -2.0]]))
        self.assertEqual(defects[0], 0.0)

    def test_orthogonal_vectors(self):
        defects = parallelism_defects(np.array([[0.0, 1.0]]), np.array([[1.0, 0.0]]))
        self.assertAlmostEqual(defects[0], 0.5, places=15)

    def test_zero_velocity(self):
        with self.assertRaises(GeodesicError):
            parallelism_defects(np.array([[1.0, 0.0]]), np.array([[0.0, 0.0]]))

    @settings(max_examples=100, deadline=None)
    @given(vectors, vectors, st.floats(0.1, 10.0))
    def test_reparametrisation_invariance(self, A, v, c):
        assume(np.linalg.norm(v) > 1e-3)
        base = parallelism_defects(A[None, :], v[None, :])[0]
        rescaled = parallelism_defects(c ** 2 * A[None, :], c * v[None, :])[0]
        self.assertAlmostEqual(rescaled, base, delta=1e-12 * max(1.0, base))
        self.assertLessEqual(base, 1.0)


if __name__ == '__main__':
    unittest.main()
