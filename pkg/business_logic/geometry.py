# business_logic/geometry.py
# Pointwise tensor calculus for a single metric: jets, connection, curvature, Einstein test

from itertools import combinations_with_replacement, permutations, product
from typing import List, Optional, Sequence, Tuple

import numpy as np

from business_logic.expr import differentiate, evaluate_many
from business_logic.jets import TensorJet, contract, inverse, reduce
from config.settings import FiniteDifferenceConfig, GridConfig, ToleranceConfig
from data_access.models import (
    Backend, Chart, CurvatureEval, EinsteinReport, GeodesicMappingError, MetricField, MetricJet,
    SingularMetricError, UnsupportedPrecisionError
)
from utilities.helpers import max_abs, tensor_grid, uniform_axes
from utilities.logger import get_logger


# ---------------------------------------------------------------------------
# Jet-level formulas shared with the mapping layer
# ---------------------------------------------------------------------------

def metric_tensor_jet(jet: MetricJet) -> TensorJet:
    return TensorJet(jet.g, jet.derivatives(), jet.dimension)


def christoffel_jet(G: TensorJet, H: TensorJet) -> TensorJet:
    """Gamma^h_ij = 1/2 g^ha (d_i g_aj + d_j g_ai - d_a g_ij) as a jet of one order less"""
    dG = G.gradient()   # [a, j, i] = d_i g_aj
    lowered = (dG.permute(0, 2, 1) + dG - dG.permute(2, 0, 1)) * 0.5
    return contract('ha,aij->hij', H, lowered)


def riemann_jet(gamma: TensorJet) -> TensorJet:
    """R^h_ijk = d_j G^h_ik - d_k G^h_ij + G^h_ja G^a_ik - G^h_ka G^a_ij"""
    d_gamma = gamma.gradient()   # [h, i, j, k] = d_k Gamma^h_ij
    return (d_gamma.permute(0, 1, 3, 2) - d_gamma
            + contract('hja,aik->hijk', gamma, gamma)
            - contract('hka,aij->hijk', gamma, gamma))


def ricci_jet(riemann: TensorJet) -> TensorJet:
    """R_ij = R^a_iaj"""
    return reduce('aiaj->ij', riemann)


def covariant_derivative(value: np.ndarray, partial: np.ndarray, gamma: np.ndarray, variance: str) -> np.ndarray:
    """nabla_m T from T, its partials (trailing index m) and Gamma.

    variance has one letter per tensor index: 'u' contravariant, 'l' covariant.
    """
    result = np.array(partial, dtype=float, copy=True)
    for axis, kind in enumerate(variance):
        moved = np.moveaxis(value, axis, 0)
        if kind == 'u':
            term = np.einsum('xma,a...->x...m', gamma, moved)
            result += np.moveaxis(term, 0, axis)
        elif kind == 'l':
            term = np.einsum('amx,a...->x...m', gamma, moved)
            result -= np.moveaxis(term, 0, axis)
        else:
            raise ValueError(f"variance letters must be 'u' or 'l', got '{kind}'")
    return result


def projective_weyl(riemann: np.ndarray, ricci: np.ndarray, n: int) -> np.ndarray:
    """W^h_ijk = R^h_ijk + (delta^h_k R_ij - delta^h_j R_ik)/(n-1)"""
    delta = np.eye(n)
    return riemann + (np.einsum('hk,ij->hijk', delta, ricci) - np.einsum('hj,ik->hijk', delta, ricci)) / (n - 1)


def curvature_from_jets(point: np.ndarray, G: TensorJet, H: TensorJet, need_derivatives: bool = False,
                        gamma: Optional[TensorJet] = None) -> CurvatureEval:
    n = G.dim
    if G.order < 2 or (need_derivatives and G.order < 3):
        raise UnsupportedPrecisionError(
            f"curvature needs a metric jet of order {3 if need_derivatives else 2}, got {G.order}")
    gamma = gamma if gamma is not None else christoffel_jet(G, H)
    riemann = riemann_jet(gamma)
    ricci = ricci_jet(riemann)
    g_inv = H.value
    R, Ric = riemann.value, ricci.value
    evaluation = CurvatureEval(
        point=np.asarray(point, dtype=float),
        christoffel=gamma.value,
        d_christoffel=gamma.derivs[0],
        riemann=R,
        ricci=Ric,
        scalar=float(np.einsum('ij,ij->', g_inv, Ric)),
        ricci_mixed=np.einsum('ab,bl->al', g_inv, Ric),
        riemann_mixed=np.einsum('aikl,bk->ailb', R, g_inv),
        weyl=projective_weyl(R, Ric, n),
    )
    if need_derivatives:
        nabla_ricci = covariant_derivative(Ric, ricci.derivs[0], gamma.value, 'll')
        evaluation.nabla_riemann = covariant_derivative(R, riemann.derivs[0], gamma.value, 'ulll')
        evaluation.nabla_ricci = nabla_ricci
        evaluation.ricci_mixed_derivative = np.einsum('ai,bm,ikm->akb', g_inv, g_inv, nabla_ricci)
        evaluation.ricci_upper_derivative = np.einsum('ai,bj,ijk->abk', g_inv, g_inv, nabla_ricci)
    return evaluation


# ---------------------------------------------------------------------------
# Service
# ---------------------------------------------------------------------------

class GeometryService:
    """Jets, connection and curvature of a single metric"""

    def __init__(self):
        self.logger = get_logger(__name__)

    # -- sampling -----------------------------------------------------------

    @staticmethod
    def default_points_per_axis(n: int) -> int:
        return GridConfig.POINTS_LOW_DIMENSION if n <= 3 else GridConfig.POINTS_HIGH_DIMENSION

    def grid_axes(self, chart: Chart, points_per_axis: Optional[int] = None) -> List[np.ndarray]:
        count = points_per_axis or self.default_points_per_axis(chart.dimension)
        lower, upper = chart.shrunk_box()
        return uniform_axes(lower, upper, count)

    def sample_grid(self, chart: Chart, points_per_axis: Optional[int] = None) -> np.ndarray:
        """Uniform tensor grid inside the chart shrunk by its margin"""
        return tensor_grid(self.grid_axes(chart, points_per_axis))

    # -- jets ---------------------------------------------------------------

    def metric_jet(self, m: MetricField, p, order: int = 2, backend: Backend = Backend.ANALYTIC) -> MetricJet:
        """Values and partial derivatives of g at p"""
        return self.metric_jets(m, np.asarray(p, dtype=float)[None, :], order, backend)[0]

    def metric_jets(self, m: MetricField, points: np.ndarray, order: int = 2,
                    backend: Backend = Backend.ANALYTIC) -> List[MetricJet]:
        """Batch variant of metric_jet; one vectorised evaluation per component"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not 0 <= order <= 3:
            raise ValueError(f"jet order must be between 0 and 3, got {order}")
        if points.shape[1] != m.dimension:
            raise GeodesicMappingError(f"points have {points.shape[1]} coordinates, metric '{m.name}' has {m.dimension}")
        for p in points:
            if not m.chart.contains(p):
                raise GeodesicMappingError(f"point {p.tolist()} lies outside the domain of '{m.name}'")

        if backend is Backend.ANALYTIC:
            parts = self._analytic_parts(m, points, order)
        else:
            parts = self._finite_difference_parts(m, points, order)

        jets = []
        for index, p in enumerate(points):
            g = parts[0][index]
            det = float(np.linalg.det(g))
            scale = max(max_abs(g), 1e-300) ** m.dimension
            if not np.isfinite(det) or abs(det) <= ToleranceConfig.SINGULAR_DET * scale:
                raise SingularMetricError(m.name, p, det)
            derivs = [parts[r][index] for r in range(1, order + 1)]
            jets.append(MetricJet(
                point=p.copy(), g=g, g_inv=np.linalg.inv(g), det=det,
                dg=derivs[0] if order >= 1 else None,
                d2g=derivs[1] if order >= 2 else None,
                d3g=derivs[2] if order >= 3 else None,
                order=order, backend=backend,
            ))
        return jets

    def component_derivative(self, m: MetricField, i: int, j: int, multi_index: Tuple[int, ...]):
        """Cached AST of d^r g_ij for a sorted multi-index"""
        i, j = min(i, j), max(i, j)
        key = (i, j, tuple(multi_index))
        cached = m.derivative_cache.get(key)
        if cached is None:
            if not multi_index:
                cached = m.components[i][j]
            else:
                cached = differentiate(self.component_derivative(m, i, j, multi_index[:-1]), multi_index[-1])
            m.derivative_cache[key] = cached
        return cached

    @staticmethod
    def _upper(n: int) -> List[Tuple[int, int]]:
        return [(i, j) for i in range(n) for j in range(i, n)]

    @staticmethod
    def _scatter(part: np.ndarray, row: np.ndarray, i: int, j: int, multi: Tuple[int, ...]):
        for perm in set(permutations(multi)):
            part[(slice(None), i, j) + perm] = row
            part[(slice(None), j, i) + perm] = row

    def _analytic_parts(self, m: MetricField, points: np.ndarray, order: int) -> List[np.ndarray]:
        n = m.dimension
        count = len(points)
        expressions, slots = [], []
        for r in range(order + 1):
            for multi in combinations_with_replacement(range(n), r):
                for i, j in self._upper(n):
                    expressions.append(self.component_derivative(m, i, j, multi))
                    slots.append((r, i, j, multi))
        values = evaluate_many(expressions, points)
        parts = [np.zeros((count, n, n) + (n,) * r) for r in range(order + 1)]
        for row, (r, i, j, multi) in zip(values, slots):
            self._scatter(parts[r], row, i, j, multi)
        return parts

    def _finite_difference_parts(self, m: MetricField, points: np.ndarray, order: int) -> List[np.ndarray]:
        """Composed central differences on component values only"""
        n = m.dimension
        count = len(points)
        upper = self._upper(n)
        components = [m.components[i][j] for i, j in upper]
        parts = [np.zeros((count, n, n) + (n,) * r) for r in range(order + 1)]
        for row, (i, j) in zip(evaluate_many(components, points), upper):
            self._scatter(parts[0], row, i, j, ())

        for r in range(1, order + 1):
            steps = FiniteDifferenceConfig.BASE_STEPS[r] * (1.0 + np.abs(points))   # [point, axis]
            signs = np.array(list(product((1.0, -1.0), repeat=r)))                   # [stencil, r]
            weights = np.prod(signs, axis=1)
            for multi in combinations_with_replacement(range(n), r):
                offsets = np.zeros((count, len(signs), n))
                for t, axis in enumerate(multi):
                    offsets[:, :, axis] += signs[None, :, t] * steps[:, None, axis]
                denominator = np.prod([2.0 * steps[:, axis] for axis in multi], axis=0)
                stencil = (points[:, None, :] + offsets).reshape(-1, n)
                values = evaluate_many(components, stencil).reshape(len(components), count, len(signs))
                derivative = np.einsum('cps,s->cp', values, weights) / denominator[None, :]
                for row, (i, j) in zip(derivative, upper):
                    self._scatter(parts[r], row, i, j, multi)
        return parts

    # -- connection and curvature --------------------------------------------

    def christoffel(self, jet: MetricJet) -> np.ndarray:
        """Gamma^h_ij values at the jet's point"""
        if jet.order < 1:
            raise UnsupportedPrecisionError("Christoffel symbols need a metric jet of order >= 1")
        G = metric_tensor_jet(jet).truncate(1)
        H = TensorJet(jet.g_inv, [], jet.dimension)
        return christoffel_jet(G, H).value

    def curvature(self, jet: MetricJet, need_derivatives: bool = False) -> CurvatureEval:
        G = metric_tensor_jet(jet)
        return curvature_from_jets(jet.point, G, inverse(G), need_derivatives)

    def weyl_projective(self, c: CurvatureEval, n: int) -> np.ndarray:
        if n < 2:
            raise ValueError("the projective Weyl tensor needs n >= 2")
        return projective_weyl(c.riemann, c.ricci, n)

    def constant_curvature_residual(self, c: CurvatureEval, g: np.ndarray) -> float:
        """Distance of R^h_ijk from kappa (delta^h_j g_ik - delta^h_k g_ij), kappa from the scalar"""
        n = g.shape[0]
        kappa = c.scalar / (n * (n - 1))
        delta = np.eye(n)
        model = kappa * (np.einsum('hj,ik->hijk', delta, g) - np.einsum('hk,ij->hijk', delta, g))
        return max_abs(c.riemann - model)

    def curvatures(self, m: MetricField, points: np.ndarray, backend: Backend = Backend.ANALYTIC,
                   need_derivatives: bool = False) -> List[CurvatureEval]:
        order = 3 if need_derivatives else 2
        return [self.curvature(jet, need_derivatives) for jet in self.metric_jets(m, points, order, backend)]

    # -- Einstein test ------------------------------------------------------

    def einstein_check(self, m: MetricField, grid: np.ndarray, tol: Optional[float] = None,
                       backend: Backend = Backend.ANALYTIC) -> EinsteinReport:
        """R_ij + K (n-1) g_ij = 0 with pointwise K = -R_ij g^ij / (n(n-1)), plus constancy of K"""
        try:
            n = m.dimension
            if tol is not None:
                spread_tol = tol
            elif backend is Backend.ANALYTIC:
                tol, spread_tol = ToleranceConfig.ANALYTIC, ToleranceConfig.EINSTEIN_CONSTANCY
            else:
                tol = spread_tol = ToleranceConfig.FINITE_DIFFERENCE
            self.logger.info(f"Einstein check of '{m.name}' on {len(grid)} points ({backend.value})")
            K_values, residuals = [], []
            for jet in self.metric_jets(m, grid, 2, backend):
                c = self.curvature(jet)
                K = -c.scalar / (n * (n - 1))
                K_values.append(K)
                residuals.append(max_abs(c.ricci + K * (n - 1) * jet.g))
            K_values = np.array(K_values)
            spread = float(np.max(K_values) - np.min(K_values)) if len(K_values) else 0.0
            residual = float(max(residuals)) if residuals else 0.0
            report = EinsteinReport(
                is_einstein=bool(residual < tol and spread < spread_tol),
                K=float(np.mean(K_values)) if len(K_values) else 0.0,
                max_residual=residual,
                K_spread=spread,
                K_values=K_values,
                tolerance=tol,
            )
            self.logger.info(f"'{m.name}': einstein={report.is_einstein}, K={report.K:.6g}, "
                             f"residual={residual:.3e}, spread={spread:.3e}")
            return report
        except Exception as e:
            self.logger.error(f"Einstein check failed for '{m.name}': {e}")
            raise


def first_bianchi_residual(riemann: np.ndarray) -> float:
    """max |R^h_ijk + R^h_jki + R^h_kij|"""
    cyclic = riemann + np.einsum('hjki->hijk', riemann) + np.einsum('hkij->hijk', riemann)
    return max_abs(cyclic)


def random_points(chart: Chart, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random points inside the margin-shrunk box"""
    lower, upper = chart.shrunk_box()
    return lower + (upper - lower) * rng.random((count, chart.dimension))
