# business_logic/sinyukov.py
# Integrability hierarchy of the Sinyukov system and the path-integration solver

import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from business_logic.geometry import GeometryService
from business_logic.jets import TensorJet
from business_logic.mapping import (
    MappingService, PairPoint, default_tolerance, levi_civita_from_jets, reconstruct_gbar_jet, reconstruct_point
)
from config.settings import SolverConfig, ToleranceConfig
from data_access.models import (
    Backend, CurvatureEval, EquationId, GeodesicMappingError, IntegrationBlowUpError, MappingClass, MetricField,
    PathSpec, ResidualBlock, ResidualReport, SinyukovState, SolveResult, UnsupportedPrecisionError
)
from utilities.helpers import max_abs
from utilities.logger import get_logger


# ---------------------------------------------------------------------------
# Residual tensors
# ---------------------------------------------------------------------------

def integrability_blocks(pp: PairPoint) -> Dict[str, float]:
    """a_ia R^a_jkl + a_ja R^a_ikl - (g_ik l_{j,l} + g_jk l_{i,l} - g_il l_{j,k} - g_jl l_{i,k})"""
    e = pp.evaluation
    a, g, L, R = e.a, pp.g, e.lambda_cov, pp.source.riemann
    residual = (np.einsum('ia,ajkl->ijkl', a, R) + np.einsum('ja,aikl->ijkl', a, R)
                - np.einsum('ik,jl->ijkl', g, L) - np.einsum('jk,il->ijkl', g, L)
                + np.einsum('il,jk->ijkl', g, L) + np.einsum('jl,ik->ijkl', g, L))
    return {'integrability': max_abs(residual)}


def second_sinyukov_blocks(pp: PairPoint) -> Dict[str, float]:
    """n l_{i,l} - mu g_il + a_ia R^a_l - a_ab R^a_il^b"""
    e = pp.evaluation
    c = pp.source
    residual = (pp.n * e.lambda_cov - e.mu * pp.g + e.a @ c.ricci_mixed
                - np.einsum('ab,ailb->il', e.a, c.riemann_mixed))
    return {'second_sinyukov': max_abs(residual)}


def third_sinyukov_blocks(pp: PairPoint) -> Dict[str, float]:
    """(n-1) mu_{,k} + 2(n+1) l_a R^a_k + a_ab (2 R^a_{k,}^b - R^ab_{,k})"""
    e = pp.evaluation
    c = pp.source
    n = pp.n
    residual = ((n - 1) * e.mu_gradient
                + 2 * (n + 1) * np.einsum('a,ak->k', e.lambda_, c.ricci_mixed)
                + 2.0 * np.einsum('ab,akb->k', e.a, c.ricci_mixed_derivative)
                - np.einsum('ab,abk->k', e.a, c.ricci_upper_derivative))
    return {'third_sinyukov': max_abs(residual)}


def cauchy_derivatives(c: CurvatureEval, g: np.ndarray, s: SinyukovState) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Partials of (a, lambda, mu) in every direction; derivative index last"""
    n = g.shape[0]
    gamma = c.christoffel
    a, lam, mu = s.a, s.lam, s.mu
    da = (np.einsum('i,jk->ijk', lam, g) + np.einsum('j,ik->ijk', lam, g)
          + np.einsum('aki,aj->ijk', gamma, a) + np.einsum('akj,ia->ijk', gamma, a))
    lam_cov = (mu * g - a @ c.ricci_mixed + np.einsum('ab,aikb->ik', a, c.riemann_mixed)) / n
    dlam = lam_cov + np.einsum('aki,a->ik', gamma, lam)
    dmu = -(2 * (n + 1) * np.einsum('a,ak->k', lam, c.ricci_mixed)
            + 2.0 * np.einsum('ab,akb->k', a, c.ricci_mixed_derivative)
            - np.einsum('ab,abk->k', a, c.ricci_upper_derivative)) / (n - 1)
    return da, dlam, dmu


class SinyukovService:
    """Residuals of the integrability hierarchy and the closed-system solver"""

    def __init__(self, geometry: Optional[GeometryService] = None, mapping: Optional[MappingService] = None):
        self.geometry = geometry or GeometryService()
        self.mapping = mapping or MappingService(self.geometry)
        self.logger = get_logger(__name__)

    # -- residual checks ----------------------------------------------------

    def _residual(self, equation: EquationId, block_fn, g, gbar, grid, backend, tol, pairs, need_derivatives=False):
        try:
            if pairs is None:
                pairs = self.mapping.pair_points(g, gbar, grid, backend, need_derivatives)
            rows = [block_fn(pp) for pp in pairs]
            return self.mapping.build_report(equation, pairs, rows, tol, backend)
        except Exception as e:
            self.logger.error(f"{equation.value} residual failed: {e}")
            raise

    def integrability_residual(self, g: MetricField, gbar: MetricField, grid: np.ndarray,
                               backend: Backend = Backend.ANALYTIC, tol: Optional[float] = None,
                               pairs: Optional[List[PairPoint]] = None) -> ResidualReport:
        return self._residual(EquationId.INTEGRABILITY, integrability_blocks, g, gbar, grid, backend,
                              tol or default_tolerance(backend), pairs)

    def second_sinyukov_residual(self, g: MetricField, gbar: MetricField, grid: np.ndarray,
                                 backend: Backend = Backend.ANALYTIC, tol: Optional[float] = None,
                                 pairs: Optional[List[PairPoint]] = None) -> ResidualReport:
        return self._residual(EquationId.SECOND_SINYUKOV, second_sinyukov_blocks, g, gbar, grid, backend,
                              tol or default_tolerance(backend), pairs)

    def third_sinyukov_residual(self, g: MetricField, gbar: MetricField, grid: np.ndarray,
                                backend: Backend = Backend.ANALYTIC, tol: Optional[float] = None,
                                pairs: Optional[List[PairPoint]] = None) -> ResidualReport:
        """Needs third derivatives of g, so only the analytic backend is accepted"""
        if backend is not Backend.ANALYTIC:
            raise UnsupportedPrecisionError(
                "the third Sinyukov equation needs third metric derivatives; use the analytic backend")
        if pairs is not None and any(pp.evaluation.mu_gradient is None for pp in pairs):
            pairs = None
        return self._residual(EquationId.THIRD_SINYUKOV, third_sinyukov_blocks, g, gbar, grid, backend,
                              tol or ToleranceConfig.THIRD_EQUATION, pairs, need_derivatives=True)

    # -- closed system ------------------------------------------------------

    def state_from_pair(self, g: MetricField, gbar: MetricField, p) -> SinyukovState:
        """(a, lambda, mu) of a metric pair at one point"""
        e = self.mapping.mapping_eval(g, gbar, p)
        return SinyukovState(a=e.a, lam=e.lambda_, mu=e.mu)

    def _fields(self, g: MetricField, points: np.ndarray, cache: Optional[dict] = None):
        """(g value, curvature with derivatives) per point, reusing cached points"""
        cache = cache if cache is not None else {}
        keys = [tuple(p) for p in points]
        missing = [i for i, key in enumerate(keys) if key not in cache]
        if missing:
            jets = self.geometry.metric_jets(g, points[missing], 3, Backend.ANALYTIC)
            for i, jet in zip(missing, jets):
                cache[keys[i]] = (jet.g, self.geometry.curvature(jet, need_derivatives=True))
        return [cache[key] for key in keys]

    def cauchy_rhs(self, g: MetricField, p, k: int, s: SinyukovState,
                   curvature: Optional[CurvatureEval] = None) -> SinyukovState:
        """d(state)/dx^k of the closed system at p"""
        p = np.asarray(p, dtype=float)
        if not 0 <= k < g.dimension:
            raise ValueError(f"direction {k} is outside 0..{g.dimension - 1}")
        if curvature is None:
            g_value, curvature = self._fields(g, p[None, :])[0]
        else:
            g_value = self.geometry.metric_jet(g, p, 0).g
        da, dlam, dmu = cauchy_derivatives(curvature, g_value, s)
        return SinyukovState(a=da[:, :, k], lam=dlam[:, k], mu=dmu[k])

    def _flow(self, g: MetricField, points: np.ndarray, states: np.ndarray, tangent: np.ndarray,
              cache: dict) -> np.ndarray:
        n = g.dimension
        result = np.empty_like(states)
        for row, ((g_value, c), y) in enumerate(zip(self._fields(g, points, cache), states)):
            da, dlam, dmu = cauchy_derivatives(c, g_value, SinyukovState.from_vector(y, n))
            result[row] = SinyukovState(a=da @ tangent, lam=dlam @ tangent, mu=float(dmu @ tangent)).to_vector()
        return result

    def _integrate_segment(self, g: MetricField, starts: np.ndarray, states: np.ndarray, delta: np.ndarray,
                           step: float, cache: dict, arc_offset: float = 0.0) -> np.ndarray:
        """Classic RK4 along start + t * delta for every line in lockstep"""
        length = float(np.linalg.norm(delta))
        if length == 0.0:
            return states.copy()
        tangent = delta / length
        steps = max(1, math.ceil(length / step - 1e-9))
        y = states.copy()
        for i in range(steps):
            s0, s_mid, s1 = length * i / steps, length * (i + 0.5) / steps, length * (i + 1) / steps
            ds = s1 - s0
            x0 = starts + s0 * tangent
            x_mid = starts + s_mid * tangent
            x1 = starts + s1 * tangent
            k1 = self._flow(g, x0, y, tangent, cache)
            k2 = self._flow(g, x_mid, y + 0.5 * ds * k1, tangent, cache)
            k3 = self._flow(g, x_mid, y + 0.5 * ds * k2, tangent, cache)
            k4 = self._flow(g, x1, y + ds * k3, tangent, cache)
            y = y + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise IntegrationBlowUpError("non-finite state while integrating the closed system",
                                             arc_offset + s1)
        return y

    def integrate_along_path(self, g: MetricField, path: PathSpec, s0: SinyukovState,
                             record: bool = False):
        """Endpoint state after RK4 along every segment; record=True also returns waypoint states"""
        try:
            for w in path.waypoints:
                if not g.chart.contains(w):
                    raise GeodesicMappingError(f"waypoint {w.tolist()} lies outside the domain of '{g.name}'")
            cache: dict = {}
            y = s0.to_vector()[None, :]
            arc = 0.0
            visited = [s0]
            for start, end in zip(path.waypoints[:-1], path.waypoints[1:]):
                y = self._integrate_segment(g, start[None, :], y, end - start, path.step, cache, arc)
                arc += float(np.linalg.norm(end - start))
                visited.append(SinyukovState.from_vector(y[0], g.dimension))
            return (visited[-1], visited) if record else visited[-1]
        except Exception as e:
            self.logger.error(f"path integration on '{g.name}' failed: {e}")
            raise

    def holonomy_defect(self, g: MetricField, loop: PathSpec, s0: SinyukovState) -> float:
        """max |s_end - s0| after transporting s0 around a closed loop"""
        if not loop.is_closed:
            raise GeodesicMappingError("holonomy needs a closed loop (first waypoint = last waypoint)")
        end = self.integrate_along_path(g, loop, s0)
        defect = max_abs(end.to_vector() - s0.to_vector())
        if defect > ToleranceConfig.HOLONOMY_OBSTRUCTION:
            self.logger.warning(f"holonomy defect {defect:.3e} on '{g.name}' exceeds "
                                f"{ToleranceConfig.HOLONOMY_OBSTRUCTION:.0e}")
        return defect

    @staticmethod
    def square_loop(corner, side: float, axes: Tuple[int, int] = (0, 1), step: float = SolverConfig.STEP,
                    signs: Tuple[float, float] = (1.0, 1.0)) -> PathSpec:
        """Closed square with one corner at `corner` in the plane of two coordinate axes"""
        corner = np.asarray(corner, dtype=float)
        u = np.zeros_like(corner)
        v = np.zeros_like(corner)
        u[axes[0]] = signs[0] * side
        v[axes[1]] = signs[1] * side
        return PathSpec([corner, corner + u, corner + u + v, corner + v, corner.copy()], step=step)

    def base_loop(self, g: MetricField, base: np.ndarray, step: float) -> PathSpec:
        """Square at the base point, opening toward the domain centre"""
        lower, upper = g.chart.shrunk_box()
        centre = 0.5 * (g.chart.lower + g.chart.upper)
        side = SolverConfig.BASE_LOOP_FRACTION * float(np.min(upper[:2] - lower[:2]))
        signs = tuple(1.0 if base[axis] <= centre[axis] else -1.0 for axis in (0, 1))
        return self.square_loop(base, side, (0, 1), step, signs)

    def convergence_ratio(self, g: MetricField, path: PathSpec, s0: SinyukovState,
                          reference: SinyukovState) -> float:
        """Endpoint error at step h divided by the error at h/2"""
        coarse = self.integrate_along_path(g, path, s0)
        fine = self.integrate_along_path(g, PathSpec(path.waypoints, step=path.step / 2.0), s0)
        error_coarse = max_abs(coarse.to_vector() - reference.to_vector())
        error_fine = max_abs(fine.to_vector() - reference.to_vector())
        return error_coarse / error_fine if error_fine > 0 else math.inf

    # -- grid solve ---------------------------------------------------------

    def _staircase_fill(self, g: MetricField, axes: List[np.ndarray], base_index: Tuple[int, ...],
                        s0: SinyukovState, step: float, order: Sequence[int], cache: dict) -> Dict[Tuple[int, ...], np.ndarray]:
        """States at every grid node via axis-ordered lines from the base node"""
        current = {base_index: s0.to_vector()}
        for axis in order:
            values = axes[axis]
            filled = dict(current)
            indices = list(current.keys())
            for direction in (1, -1):
                y = np.array([current[idx] for idx in indices])
                position = base_index[axis]
                while 0 <= position + direction < len(values):
                    starts = np.array([[axes[d][idx[d]] if d != axis else values[position] for d in range(len(axes))]
                                       for idx in indices])
                    delta = np.zeros(len(axes))
                    delta[axis] = values[position + direction] - values[position]
                    y = self._integrate_segment(g, starts, y, delta, step, cache)
                    position += direction
                    for row, idx in enumerate(indices):
                        target = list(idx)
                        target[axis] = position
                        filled[tuple(target)] = y[row]
            current = filled
        return current

    def _grid_derivatives(self, g: MetricField, axes: List[np.ndarray], states: Dict[Tuple[int, ...], np.ndarray],
                          node_indices: List[Tuple[int, ...]], fields: list, step: float,
                          cache: dict) -> Tuple[np.ndarray, np.ndarray]:
        """
        Partials of the solved a-field taken across neighbouring grid nodes

        Each node's state is carried to its neighbours along the grid edges. Along an edge the
        carried state follows the closed system exactly, so a difference quotient of the grid
        values equals the closed-system derivative minus (mismatch at the neighbour) / (edge length).
        Nodes reached along different staircase lines only agree when the seed is integrable.

        Returns:
            (derivatives with shape (nodes, n, n, n), derivative index last; max edge mismatch per node)
        """
        n = g.dimension
        row_of = {idx: row for row, idx in enumerate(node_indices)}
        base_da = np.array([cauchy_derivatives(c, g_value, SinyukovState.from_vector(states[idx], n))[0]
                            for idx, (g_value, c) in zip(node_indices, fields)])
        total = np.zeros_like(base_da)
        counts = np.zeros((len(node_indices), n))
        edge_rows = np.zeros(len(node_indices))

        for axis in range(n):
            values = axes[axis]
            for position in range(len(values)):
                for direction in (1, -1):
                    neighbour_position = position + direction
                    if not 0 <= neighbour_position < len(values):
                        continue
                    rows = [row for row, idx in enumerate(node_indices) if idx[axis] == position]
                    if not rows:
                        continue
                    delta = np.zeros(n)
                    delta[axis] = values[neighbour_position] - values[position]
                    starts = np.array([[axes[d][node_indices[row][d]] for d in range(n)] for row in rows])
                    carried = self._integrate_segment(g, starts, np.array([states[node_indices[row]] for row in rows]),
                                                      delta, step, cache)
                    for row, y in zip(rows, carried):
                        target = list(node_indices[row])
                        target[axis] = neighbour_position
                        mismatch = y - states[tuple(target)]
                        edge_rows[row] = max(edge_rows[row], max_abs(mismatch))
                        edge_rows[row_of[tuple(target)]] = max(edge_rows[row_of[tuple(target)]], max_abs(mismatch))
                        mismatch_a = SinyukovState.from_vector(mismatch, n).a
                        total[row, :, :, axis] += base_da[row, :, :, axis] - mismatch_a / delta[axis]
                        counts[row, axis] += 1

        derivatives = base_da.copy()
        for row in range(len(node_indices)):
            for axis in range(n):
                if counts[row, axis]:
                    derivatives[row, :, :, axis] = total[row, :, :, axis] / counts[row, axis]
        return derivatives, edge_rows

    def solve_on_grid(self, g: MetricField, s0: SinyukovState, base, points_per_axis: Optional[int] = None,
                      step: float = SolverConfig.STEP, cross_check: bool = True) -> SolveResult:
        """Fill the grid from s0 at the base node, reconstruct g_bar and verify the pair"""
        try:
            n = g.dimension
            base = np.asarray(base, dtype=float)
            axes = self.geometry.grid_axes(g.chart, points_per_axis)
            base_index = []
            for d in range(n):
                hits = np.where(np.abs(axes[d] - base[d]) <= 1e-12 * (1.0 + abs(base[d])))[0]
                if len(hits) == 0:
                    raise GeodesicMappingError(f"base point {base.tolist()} is not a grid node")
                base_index.append(int(hits[0]))
            base_index = tuple(base_index)
            self.logger.info(f"Solving the closed system on '{g.name}' from {base.tolist()} "
                             f"({len(axes[0])}^{n} nodes, h={step})")

            cache: dict = {}
            states = self._staircase_fill(g, axes, base_index, s0, step, range(n), cache)
            crossed = self._staircase_fill(g, axes, base_index, s0, step, range(n - 1, -1, -1), cache) \
                if cross_check else states

            node_indices = sorted(states.keys())
            points = np.array([[axes[d][idx[d]] for d in range(n)] for idx in node_indices])
            fields = self._fields(g, points, cache)
            jets = self.geometry.metric_jets(g, points, 1)
            grid_da, edge_rows = self._grid_derivatives(g, axes, states, node_indices, fields, step, cache)

            solved, gbar, Psi, lc_rows, path_rows = [], [], [], [], []
            for row, (idx, (g_value, _), jet) in enumerate(zip(node_indices, fields, jets)):
                state = SinyukovState.from_vector(states[idx], n)
                solved.append(state)
                value, factor = reconstruct_point(g_value, state.a)
                gbar.append(value)
                Psi.append(factor)
                G = TensorJet(jet.g, [jet.dg], n)
                A = TensorJet(state.a, [grid_da[row]], n)
                lc_rows.append(levi_civita_from_jets(G, reconstruct_gbar_jet(G, A)))
                path_rows.append(max_abs(states[idx] - crossed[idx]))

            verification = ResidualReport(
                EquationId.RECONSTRUCTION, points,
                [ResidualBlock('levi_civita', np.array(lc_rows)),
                 ResidualBlock('edge_consistency', np.array(edge_rows)),
                 ResidualBlock('path_consistency', np.array(path_rows))],
                SolverConfig.VERIFICATION, Backend.ANALYTIC,
                {'backend': Backend.ANALYTIC.value, 'step': step, 'cross_check': cross_check},
            )

            loop = self.base_loop(g, base, step)
            defect = self.holonomy_defect(g, loop, s0)

            max_lambda = max(max_abs(s.lam) for s in solved)
            deviation = 0.0
            for s, (g_value, _) in zip(solved, fields):
                ratio = np.trace(s.a) / np.trace(g_value)
                deviation = max(deviation, max_abs(s.a - ratio * g_value))
            if max_lambda < ToleranceConfig.DEGENERACY and deviation < ToleranceConfig.DEGENERACY:
                classification = MappingClass.TRIVIAL_AFFINE
            elif verification.passed:
                classification = MappingClass.NONTRIVIAL_GEODESIC
            else:
                classification = MappingClass.NOT_GEODESIC

            self.logger.info(f"Solve on '{g.name}': {classification.value}, verification max "
                             f"{verification.global_max:.3e}, holonomy {defect:.3e}")
            return SolveResult(
                points=points, states=solved, gbar=np.array(gbar), Psi=np.array(Psi),
                verification=verification, holonomy_defect=defect, holonomy_loop=loop.waypoints,
                classification=classification, base_point=base,
                max_lambda=max_lambda, max_a_deviation=deviation,
            )
        except Exception as e:
            self.logger.error(f"grid solve on '{g.name}' failed: {e}")
            raise
