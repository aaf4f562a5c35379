# business_logic/geodesics.py
# Geodesic integration and the direct test that images of geodesics stay (unparametrised) geodesics

from typing import List, Optional, Tuple

import numpy as np

from business_logic.geometry import GeometryService
from config.settings import GeodesicConfig
from data_access.models import GeodesicCurve, GeodesicError, IntegrationBlowUpError, MetricField
from utilities.helpers import max_abs
from utilities.logger import get_logger


def parallelism_defects(accelerations: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    """Largest 2x2 minor of the rows (A, v) per sample, normalised by |v| (|A| + |v|^2)"""
    A = np.atleast_2d(accelerations)
    v = np.atleast_2d(velocities)
    speed = np.linalg.norm(v, axis=1)
    if np.any(speed < 1e-14):
        raise GeodesicError("degenerate (zero) velocity in a geodesic sample")
    minors = np.einsum('si,sj->sij', A, v) - np.einsum('sj,si->sij', A, v)
    largest = np.max(np.abs(minors.reshape(len(A), -1)), axis=1)
    return largest / (speed * (np.linalg.norm(A, axis=1) + speed ** 2))


class GeodesicService:
    """Integrates geodesics and compares them against a second metric"""

    def __init__(self, geometry: Optional[GeometryService] = None):
        self.geometry = geometry or GeometryService()
        self.logger = get_logger(__name__)

    def _acceleration(self, g: MetricField, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        gamma = self.geometry.christoffel(self.geometry.metric_jet(g, x, 1))
        return -np.einsum('hij,i,j->h', gamma, v, v)

    def integrate_geodesic(self, g: MetricField, x0, v0, t_end: float = GeodesicConfig.T_END,
                           h: float = GeodesicConfig.STEP) -> GeodesicCurve:
        """RK4 for x'' + Gamma(x', x') = 0; truncates and flags the curve at the domain boundary"""
        x = np.asarray(x0, dtype=float).copy()
        v = np.asarray(v0, dtype=float).copy()
        if not g.chart.contains(x):
            raise GeodesicError(f"start point {x.tolist()} lies outside the domain of '{g.name}'")
        if np.linalg.norm(v) == 0.0:
            raise GeodesicError("initial velocity must be nonzero")
        if h <= 0 or t_end <= 0:
            raise GeodesicError(f"step and end time must be positive (h={h}, t_end={t_end})")

        steps = int(np.ceil(t_end / h - 1e-9))
        dt = t_end / steps
        times, positions, velocities, accelerations = [0.0], [x.copy()], [v.copy()], []
        truncated, reason = False, ""
        acc = self._acceleration(g, x, v)
        for i in range(steps):
            try:
                k1x, k1v = v, acc
                stage = x + 0.5 * dt * k1x
                self._require_inside(g, stage)
                k2x, k2v = v + 0.5 * dt * k1v, self._acceleration(g, stage, v + 0.5 * dt * k1v)
                stage = x + 0.5 * dt * k2x
                self._require_inside(g, stage)
                k3x, k3v = v + 0.5 * dt * k2v, self._acceleration(g, stage, v + 0.5 * dt * k2v)
                stage = x + dt * k3x
                self._require_inside(g, stage)
                k4x, k4v = v + dt * k3v, self._acceleration(g, stage, v + dt * k3v)
                x_next = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                v_next = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
                self._require_inside(g, x_next)
            except _LeftDomain as exit_point:
                truncated, reason = True, f"left the domain near {np.round(exit_point.point, 6).tolist()} at t={times[-1]:.6g}"
                self.logger.warning(f"geodesic of '{g.name}' truncated: {reason}")
                break
            if not (np.all(np.isfinite(x_next)) and np.all(np.isfinite(v_next))):
                raise IntegrationBlowUpError("non-finite geodesic state", (i + 1) * dt)
            accelerations.append(acc)
            x, v = x_next, v_next
            acc = self._acceleration(g, x, v)
            times.append((i + 1) * dt)
            positions.append(x.copy())
            velocities.append(v.copy())
        accelerations.append(acc)

        return GeodesicCurve(
            times=np.array(times), positions=np.array(positions), velocities=np.array(velocities),
            accelerations=np.array(accelerations), metric_name=g.name, truncated=truncated, reason=reason,
        )

    @staticmethod
    def _require_inside(g: MetricField, x: np.ndarray):
        if not g.chart.contains(x):
            raise _LeftDomain(x)

    def correspondence_defects(self, curve: GeodesicCurve, gbar: MetricField) -> np.ndarray:
        """Per-sample parallelism defect of the g_bar-acceleration against the velocity"""
        for x in curve.positions:
            if not gbar.chart.contains(x):
                raise GeodesicError(f"sample {x.tolist()} lies outside the domain of '{gbar.name}'")
        jets = self.geometry.metric_jets(gbar, curve.positions, 1)
        A = np.array([
            acc + np.einsum('hij,i,j->h', self.geometry.christoffel(jet), v, v)
            for jet, acc, v in zip(jets, curve.accelerations, curve.velocities)
        ])
        return parallelism_defects(A, curve.velocities)

    def correspondence_residual(self, curve: GeodesicCurve, gbar: MetricField) -> float:
        """Max parallelism defect over the samples of a g-geodesic seen by g_bar"""
        return float(np.max(self.correspondence_defects(curve, gbar)))

    def energy_drift(self, curve: GeodesicCurve, g: MetricField) -> float:
        """max |g(x', x') - g(x'0, x'0)| along the curve"""
        jets = self.geometry.metric_jets(g, curve.positions, 0)
        energy = np.array([v @ jet.g @ v for jet, v in zip(jets, curve.velocities)])
        return max_abs(energy - energy[0])

    def random_seed(self, g: MetricField, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Start point in the central half of the sampling box and a random unit direction"""
        lower, upper = g.chart.shrunk_box()
        centre, half = 0.5 * (lower + upper), 0.25 * (upper - lower)
        x0 = centre + half * rng.uniform(-1.0, 1.0, g.dimension)
        direction = rng.normal(size=g.dimension)
        return x0, direction / np.linalg.norm(direction)

    def sample_geodesics(self, g: MetricField, count: int = GeodesicConfig.SAMPLE_COUNT,
                         rng: Optional[np.random.Generator] = None, t_end: float = GeodesicConfig.T_END,
                         h: float = GeodesicConfig.STEP) -> List[GeodesicCurve]:
        rng = rng if rng is not None else np.random.default_rng(GeodesicConfig.SEED)
        curves = []
        for _ in range(count):
            x0, v0 = self.random_seed(g, rng)
            curves.append(self.integrate_geodesic(g, x0, v0, t_end, h))
        self.logger.info(f"Integrated {count} geodesics of '{g.name}' "
                         f"({sum(c.truncated for c in curves)} truncated)")
        return curves


class _LeftDomain(Exception):
    def __init__(self, point: np.ndarray):
        self.point = point
        super().__init__(f"left the domain at {point.tolist()}")
