# business_logic/mapping.py
# Quantities and residuals attached to a metric pair (g, g_bar)

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from business_logic.geometry import (
    GeometryService, christoffel_jet, covariant_derivative, curvature_from_jets, metric_tensor_jet
)
from business_logic.jets import TensorJet, contract, inverse, log_abs_det, scale
from config.settings import ToleranceConfig
from data_access.models import (
    Backend, CurvatureEval, DegenerateSolutionError, EquationId, IncompatibleChartsError, MappingClass,
    MappingEval, MetricField, ResidualBlock, ResidualReport, SourceNotEinsteinError
)
from utilities.helpers import max_abs
from utilities.logger import get_logger


@dataclass
class PairPoint:
    """Everything the residual checks need at one grid point"""
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    gbar: np.ndarray
    gbar_inv: np.ndarray
    gamma: np.ndarray
    gamma_bar: np.ndarray
    source: CurvatureEval
    target: CurvatureEval
    evaluation: MappingEval
    gbar_cov: np.ndarray     # gbar_{ij,k}
    a_cov: np.ndarray        # a_{ij,k}

    @property
    def n(self) -> int:
        return self.g.shape[0]


def default_tolerance(backend: Backend) -> float:
    return ToleranceConfig.ANALYTIC if backend is Backend.ANALYTIC else ToleranceConfig.FINITE_DIFFERENCE


def pair_from_jets(point: np.ndarray, G: TensorJet, Gb: TensorJet, need_derivatives: bool = False) -> PairPoint:
    """Evaluate every pair quantity from metric jets of equal order (>= 2)"""
    n = G.dim
    H, Hb = inverse(G), inverse(Gb)
    Psi = (log_abs_det(Gb, Hb) - log_abs_det(G, H)) * (1.0 / (2 * (n + 1)))
    psi = Psi.gradient()
    e2 = (Psi * 2.0).exp()

    gbar_inv_g = contract('ab,bj->aj', Hb, G)                 # gbar^ab g_bj
    a = scale(e2, contract('ai,aj->ij', G, gbar_inv_g))
    lam_i = -scale(e2, contract('ai,a->i', gbar_inv_g, psi))
    lam = contract('ij,ij->', a, H) * 0.5

    gamma = christoffel_jet(G, H)
    gamma_bar = christoffel_jet(Gb, Hb)
    psi_cov = psi.gradient() - contract('aij,a->ij', gamma, psi)
    lam_cov = lam_i.gradient() - contract('aij,a->ij', gamma, lam_i)
    mu = contract('ij,ij->', H, lam_cov)

    source = curvature_from_jets(point, G, H, need_derivatives, gamma)
    target = curvature_from_jets(point, Gb, Hb, False, gamma_bar)

    lambda_gradient = lam.derivs[0]
    evaluation = MappingEval(
        point=np.asarray(point, dtype=float),
        Psi=float(Psi.value),
        psi=psi.value,
        psi_ij=psi_cov.value - np.outer(psi.value, psi.value),
        a=a.value,
        lambda_=lam_i.value,
        lambda_gradient=lambda_gradient,
        lambda_discrepancy=max_abs(lam_i.value - lambda_gradient),
        lam=float(lam.value),
        lambda_up=H.value @ lam_i.value,
        lambda_cov=lam_cov.value,
        mu=float(mu.value),
        mu_gradient=mu.derivs[0] if mu.order >= 1 else None,
    )
    return PairPoint(
        point=evaluation.point, g=G.value, g_inv=H.value, gbar=Gb.value, gbar_inv=Hb.value,
        gamma=gamma.value, gamma_bar=gamma_bar.value, source=source, target=target,
        evaluation=evaluation,
        gbar_cov=covariant_derivative(Gb.value, Gb.derivs[0], gamma.value, 'll'),
        a_cov=covariant_derivative(a.value, a.derivs[0], gamma.value, 'll'),
    )


# ---------------------------------------------------------------------------
# Pointwise residual blocks
# ---------------------------------------------------------------------------

def levi_civita_tensor(gbar_cov: np.ndarray, gbar: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """gbar_{ij,k} - 2 psi_k gbar_ij - psi_i gbar_jk - psi_j gbar_ik"""
    return (gbar_cov - 2.0 * np.einsum('k,ij->ijk', psi, gbar)
            - np.einsum('i,jk->ijk', psi, gbar) - np.einsum('j,ik->ijk', psi, gbar))


def deformation_tensor(gamma_bar: np.ndarray, gamma: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Gamma_bar^h_ij - Gamma^h_ij - psi_i delta^h_j - psi_j delta^h_i"""
    delta = np.eye(len(psi))
    return gamma_bar - gamma - np.einsum('i,hj->hij', psi, delta) - np.einsum('j,hi->hij', psi, delta)


def levi_civita_blocks(pp: PairPoint) -> Dict[str, float]:
    psi = pp.evaluation.psi
    return {
        'levi_civita': max_abs(levi_civita_tensor(pp.gbar_cov, pp.gbar, psi)),
        'connection_deformation': max_abs(deformation_tensor(pp.gamma_bar, pp.gamma, psi)),
    }


def sinyukov_blocks(pp: PairPoint) -> Dict[str, float]:
    lam, g = pp.evaluation.lambda_, pp.g
    residual = pp.a_cov - np.einsum('i,jk->ijk', lam, g) - np.einsum('j,ik->ijk', lam, g)
    return {'sinyukov': max_abs(residual)}


def curvature_transform_blocks(pp: PairPoint) -> Dict[str, float]:
    n = pp.n
    delta = np.eye(n)
    psi_ij = pp.evaluation.psi_ij
    riemann = (pp.target.riemann - pp.source.riemann
               - np.einsum('hk,ij->hijk', delta, psi_ij) + np.einsum('hj,ik->hijk', delta, psi_ij))
    ricci = pp.target.ricci - pp.source.ricci + (n - 1) * psi_ij
    return {
        'riemann_transform': max_abs(riemann),
        'ricci_transform': max_abs(ricci),
        'weyl_difference': max_abs(pp.target.weyl - pp.source.weyl),
    }


def einstein_blocks(pp: PairPoint, K: float) -> Tuple[Dict[str, float], Dict[str, float]]:
    """Sub-residuals A..E of the Einstein transfer chain, plus pointwise diagnostics"""
    n = pp.n
    e = pp.evaluation
    g, gbar, lam = pp.g, pp.gbar, e.lambda_
    R = pp.source.riemann
    block_a = np.einsum('a,aijk->ijk', lam, R) - K * (np.einsum('ij,k->ijk', g, lam) - np.einsum('ik,j->ijk', g, lam))
    trace_a = float(np.einsum('ij,ij->', e.a, pp.g_inv))
    rho = (e.mu - K * trace_a) / n
    block_b = e.lambda_cov - rho * g - K * e.a
    K_bar = (float(np.einsum('ij,ij->', e.psi_ij, pp.gbar_inv)) + K * float(np.einsum('ij,ij->', g, pp.gbar_inv))) / n
    block_c = e.psi_ij + K * g - K_bar * gbar
    block_d = pp.target.ricci + (n - 1) * K_bar * gbar
    Lambda = e.lambda_cov - K * e.a
    contracted = Lambda @ e.lambda_up                      # Lambda_ia lambda^a
    block_e = (np.einsum('ki,j->ijk', g, contracted) + np.einsum('kj,i->ijk', g, contracted)
               - np.einsum('i,jk->ijk', lam, Lambda) - np.einsum('j,ik->ijk', lam, Lambda))
    e.K, e.K_bar, e.Lambda = K, K_bar, Lambda
    blocks = {
        'einstein_a': max_abs(block_a),
        'einstein_b': max_abs(block_b),
        'einstein_c': max_abs(block_c),
        'einstein_d': max_abs(block_d),
        'einstein_e': max_abs(block_e),
    }
    diagnostics = {'K_bar': K_bar, 'rho': rho, 'lambda_Lambda': max_abs(contracted - rho * lam)}
    return blocks, diagnostics


# ---------------------------------------------------------------------------
# Reconstruction algebra
# ---------------------------------------------------------------------------

def a_from(g: np.ndarray, gbar: np.ndarray) -> Tuple[np.ndarray, float]:
    """a_ij = e^{2 Psi} gbar^ab g_ai g_bj at a point"""
    n = g.shape[0]
    Psi = (np.linalg.slogdet(gbar)[1] - np.linalg.slogdet(g)[1]) / (2 * (n + 1))
    a = np.exp(2.0 * Psi) * (g @ np.linalg.solve(gbar, g))
    return 0.5 * (a + a.T), float(Psi)


def reconstruct_point(g: np.ndarray, a: np.ndarray) -> Tuple[np.ndarray, float]:
    """gbar = e^{2 Psi} g_tilde with g_tilde = (g^-1 a g^-1)^-1 and Psi = ln|det g_tilde / det g| / 2"""
    mixed = np.linalg.solve(g, a)
    scale_a = max(max_abs(mixed), 1e-300) ** g.shape[0]
    det_mixed = np.linalg.det(mixed)
    if not np.isfinite(det_mixed) or abs(det_mixed) <= ToleranceConfig.SINGULAR_DET * scale_a:
        raise DegenerateSolutionError(f"g^-1 a is not invertible (det = {det_mixed:.3e})")
    g_tilde = g @ np.linalg.solve(a, g)
    g_tilde = 0.5 * (g_tilde + g_tilde.T)
    Psi = 0.5 * (np.linalg.slogdet(g_tilde)[1] - np.linalg.slogdet(g)[1])
    gbar = np.exp(2.0 * Psi) * g_tilde
    return gbar, float(Psi)


def reconstruct_gbar_jet(G: TensorJet, A: TensorJet) -> TensorJet:
    """Jet version of reconstruct_point (order limited by the a-jet)"""
    H = inverse(G)
    M = contract('ib,bj->ij', contract('ia,ab->ib', H, A), H)
    g_tilde = inverse(M)
    Psi = (log_abs_det(g_tilde, M) - log_abs_det(G, H)) * 0.5
    return scale((Psi * 2.0).exp(), g_tilde)


def levi_civita_from_jets(G: TensorJet, Gb: TensorJet) -> float:
    """Max Levi-Civita residual from first-order jets of g and g_bar"""
    H, Hb = inverse(G), inverse(Gb)
    n = G.dim
    Psi = (log_abs_det(Gb, Hb) - log_abs_det(G, H)) * (1.0 / (2 * (n + 1)))
    gamma = christoffel_jet(G.truncate(1), H.truncate(0))
    gbar_cov = covariant_derivative(Gb.value, Gb.derivs[0], gamma.value, 'll')
    return max_abs(levi_civita_tensor(gbar_cov, Gb.value, Psi.derivs[0]))


# ---------------------------------------------------------------------------
# Service
# ---------------------------------------------------------------------------

class MappingService:
    """Levi-Civita, Sinyukov, curvature-transfer and Einstein checks on metric pairs"""

    def __init__(self, geometry: Optional[GeometryService] = None):
        self.geometry = geometry or GeometryService()
        self.logger = get_logger(__name__)

    @staticmethod
    def require_shared_chart(g: MetricField, gbar: MetricField):
        if not g.chart.is_compatible(gbar.chart):
            raise IncompatibleChartsError(
                f"'{g.name}' and '{gbar.name}' are not defined on one chart "
                f"(dimensions {g.dimension}/{gbar.dimension}, coordinates {g.chart.coordinates}/{gbar.chart.coordinates})")

    def pair_points(self, g: MetricField, gbar: MetricField, points: np.ndarray,
                    backend: Backend = Backend.ANALYTIC, need_derivatives: bool = False) -> List[PairPoint]:
        """Pair quantities at every point; third-order jets when curvature derivatives are needed"""
        self.require_shared_chart(g, gbar)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        order = 3 if need_derivatives else 2
        source_jets = self.geometry.metric_jets(g, points, order, backend)
        target_jets = self.geometry.metric_jets(gbar, points, order, backend)
        pairs = []
        for p, jet, jet_bar in zip(points, source_jets, target_jets):
            pairs.append(pair_from_jets(p, metric_tensor_jet(jet), metric_tensor_jet(jet_bar), need_derivatives))
        return pairs

    def mapping_eval(self, g: MetricField, gbar: MetricField, p, backend: Backend = Backend.ANALYTIC,
                     K: Optional[float] = None) -> MappingEval:
        """Psi, psi, a, lambda, mu, ... at one point; K adds K_bar and Lambda"""
        try:
            pp = self.pair_points(g, gbar, np.asarray(p, dtype=float)[None, :], backend)[0]
            if K is not None:
                einstein_blocks(pp, K)
            tolerance = ToleranceConfig.LAMBDA_ROUTE if backend is Backend.ANALYTIC else ToleranceConfig.FINITE_DIFFERENCE
            if pp.evaluation.lambda_discrepancy > tolerance:
                self.logger.warning(f"lambda_i routes disagree by {pp.evaluation.lambda_discrepancy:.3e} at {pp.point.tolist()}")
            return pp.evaluation
        except Exception as e:
            self.logger.error(f"mapping_eval failed for ('{g.name}', '{gbar.name}'): {e}")
            raise

    def build_report(self, equation: EquationId, pairs: List[PairPoint], rows: List[Dict[str, float]],
                tolerance: float, backend: Backend, metadata: Optional[dict] = None) -> ResidualReport:
        points = np.array([pp.point for pp in pairs])
        names = list(rows[0].keys()) if rows else []
        blocks = [ResidualBlock(name, np.array([row[name] for row in rows])) for name in names]
        metadata = dict(metadata or {})
        metadata.setdefault('backend', backend.value)
        if pairs:
            metadata.setdefault('max_psi', max(max_abs(pp.evaluation.psi) for pp in pairs))
            metadata.setdefault('max_lambda_discrepancy', max(pp.evaluation.lambda_discrepancy for pp in pairs))
        report = ResidualReport(equation, points, blocks, tolerance, backend, metadata)
        self.logger.info(str(report))
        return report

    def _pairs(self, g, gbar, grid, backend, pairs, need_derivatives=False) -> List[PairPoint]:
        if pairs is not None:
            return pairs
        return self.pair_points(g, gbar, grid, backend, need_derivatives)

    def levi_civita_residual(self, g: MetricField, gbar: MetricField, grid: np.ndarray,
                             backend: Backend = Backend.ANALYTIC, tol: Optional[float] = None,
                             pairs: Optional[List[PairPoint]] = None) -> ResidualReport:
        """Covariant Levi-Civita equations plus the connection-deformation cross-check"""
        try:
            pairs = self._pairs(g, gbar, grid, backend, pairs)
            rows = [levi_civita_blocks(pp) for pp in pairs]
            return self.build_report(EquationId.LEVI_CIVITA, pairs, rows, tol or default_tolerance(backend), backend)
        except Exception as e:
            self.logger.error(f"Levi-Civita residual failed: {e}")
            raise

    def sinyukov_residual(self, g: MetricField, gbar: MetricField, grid: np.ndarray,
                          backend: Backend = Backend.ANALYTIC, tol: Optional[float] = None,
                          pairs: Optional[List[PairPoint]] = None) -> ResidualReport:
        """a_{ij,k} - lambda_i g_jk - lambda_j g_ik"""
        try:
            pairs = self._pairs(g, gbar, grid, backend, pairs)
            rows = [sinyukov_blocks(pp) for pp in pairs]
            return self.build_report(EquationId.SINYUKOV, pairs, rows, tol or default_tolerance(backend), backend)
        except Exception as e:
            self.logger.error(f"Sinyukov residual failed: {e}")
            raise

    def curvature_transform_residual(self, g: MetricField, gbar: MetricField, grid: np.ndarray,
                                     backend: Backend = Backend.ANALYTIC, tol: Optional[float] = None,
                                     pairs: Optional[List[PairPoint]] = None,
                                     informational: bool = False) -> ResidualReport:
        """Riemann and Ricci transformation laws and projective Weyl invariance"""
        try:
            pairs = self._pairs(g, gbar, grid, backend, pairs)
            rows = [curvature_transform_blocks(pp) for pp in pairs]
            return self.build_report(EquationId.CURVATURE_TRANSFORM, pairs, rows, tol or default_tolerance(backend),
                                backend, {'informational': informational})
        except Exception as e:
            self.logger.error(f"curvature transform residual failed: {e}")
            raise

    def einstein_suite(self, g: MetricField, gbar: MetricField, grid: np.ndarray,
                       backend: Backend = Backend.ANALYTIC, tol: Optional[float] = None,
                       pairs: Optional[List[PairPoint]] = None) -> ResidualReport:
        """Einstein transfer chain; the source must pass einstein_check on the same grid"""
        try:
            tol = tol or default_tolerance(backend)
            check = self.geometry.einstein_check(g, grid, tol, backend)
            if not check.is_einstein:
                raise SourceNotEinsteinError(
                    f"source not Einstein: '{g.name}' has residual {check.max_residual:.3e} and K spread {check.K_spread:.3e}")
            pairs = self._pairs(g, gbar, grid, backend, pairs)
            rows, K_bars, coupling = [], [], []
            for pp in pairs:
                blocks, diagnostics = einstein_blocks(pp, check.K)
                rows.append(blocks)
                K_bars.append(diagnostics['K_bar'])
                coupling.append(diagnostics['lambda_Lambda'])
            K_bars = np.array(K_bars)
            spread = float(np.max(K_bars) - np.min(K_bars)) if len(K_bars) else 0.0
            report = self.build_report(EquationId.EINSTEIN_SUITE, pairs, rows, tol, backend, {
                'K': check.K,
                'K_bar': float(np.mean(K_bars)) if len(K_bars) else 0.0,
                'K_spread': check.K_spread,
                'K_bar_spread': spread,
                'lambda_Lambda_max': max(coupling) if coupling else 0.0,
                'source_einstein_residual': check.max_residual,
            })
            report.extra_conditions['K_bar_constant'] = spread < tol
            return report
        except Exception as e:
            self.logger.error(f"Einstein suite failed: {e}")
            raise

    def reconstruct_gbar(self, g: MetricField, a_values: np.ndarray, grid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Pointwise g_bar and Psi from a-values at the grid points"""
        jets = self.geometry.metric_jets(g, grid, 0)
        gbar, Psi = [], []
        for jet, a in zip(jets, np.asarray(a_values, dtype=float)):
            value, factor = reconstruct_point(jet.g, a)
            gbar.append(value)
            Psi.append(factor)
        return np.array(gbar), np.array(Psi)

    @staticmethod
    def classify_mapping(reports: Union[Iterable[ResidualReport], Dict[EquationId, ResidualReport]],
                         psi_threshold: float = ToleranceConfig.NONTRIVIAL_PSI) -> MappingClass:
        """not_geodesic / trivial_affine / nontrivial_geodesic from the Levi-Civita report"""
        items = reports.values() if isinstance(reports, dict) else reports
        levi_civita = next((r for r in items if r.equation is EquationId.LEVI_CIVITA), None)
        if levi_civita is None:
            raise ValueError("classification needs a Levi-Civita report")
        if not levi_civita.passed:
            return MappingClass.NOT_GEODESIC
        if levi_civita.metadata.get('max_psi', 0.0) < psi_threshold:
            return MappingClass.TRIVIAL_AFFINE
        return MappingClass.NONTRIVIAL_GEODESIC
