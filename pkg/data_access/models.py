# data_access/models.py
# Data models for the Geodesic Mapping Toolkit

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


# ---------------------------------------------------------------------------
# Exceptions
# ---------------------------------------------------------------------------

class GeodesicMappingError(Exception):
    """Base class for every error raised by the toolkit"""


class ExpressionSyntaxError(GeodesicMappingError):
    """Malformed expression text"""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}" + (f" in '{text}'" if text else ""))


class UnknownIdentifierError(ExpressionSyntaxError):
    """Identifier that is neither a coordinate nor a known function"""


class ArityError(ExpressionSyntaxError):
    """Function called with the wrong number of arguments, or a coordinate called like a function"""


class ExpressionDomainError(GeodesicMappingError):
    """ln/sqrt of an invalid argument or division by zero during evaluation"""

    def __init__(self, message: str, subterm: str, point: Optional[np.ndarray] = None):
        self.subterm = subterm
        self.point = point
        where = f" at {np.round(point, 12).tolist()}" if point is not None else ""
        super().__init__(f"{message} in subterm '{subterm}'{where}")


class SingularMetricError(GeodesicMappingError):
    """det g vanishes (numerically) at a sample point"""

    def __init__(self, metric_name: str, point: np.ndarray, det: float):
        self.point = point
        self.det = det
        super().__init__(f"Metric '{metric_name}' is singular at {np.round(point, 12).tolist()} (det = {det:.3e})")


class MetricSpecError(GeodesicMappingError):
    """Problem in a metric specification file"""

    def __init__(self, message: str, line: int = 0, column: int = 0, path: str = ""):
        self.line = line
        self.column = column
        self.path = path
        location = f"{path}:{line}:{column}: " if line else (f"{path}: " if path else "")
        super().__init__(f"{location}{message}")


class IncompatibleChartsError(GeodesicMappingError):
    """Metric pair not defined on one common chart"""


class SourceNotEinsteinError(GeodesicMappingError):
    """Einstein transfer suite requested for a non-Einstein source metric"""


class UnsupportedPrecisionError(GeodesicMappingError):
    """Operation needs derivatives the chosen backend cannot deliver accurately"""


class DegenerateSolutionError(GeodesicMappingError):
    """The (1,1) form of a is not invertible, so no target metric can be reconstructed"""


class IntegrationBlowUpError(GeodesicMappingError):
    """Non-finite state while integrating the closed system"""

    def __init__(self, message: str, arc_position: float):
        self.arc_position = arc_position
        super().__init__(f"{message} (arc position {arc_position:.6g})")


class GeodesicError(GeodesicMappingError):
    """Invalid geodesic seed or degenerate velocity"""


# ---------------------------------------------------------------------------
# Enumerations
# ---------------------------------------------------------------------------

class Backend(Enum):
    """Derivative backend"""
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "fd"


class MappingClass(Enum):
    """Classification of a metric pair"""
    NOT_GEODESIC = "not_geodesic"
    TRIVIAL_AFFINE = "trivial_affine"
    NONTRIVIAL_GEODESIC = "nontrivial_geodesic"


class EquationId(Enum):
    """Identifiers of the residual checks"""
    LEVI_CIVITA = "levi_civita"
    SINYUKOV = "sinyukov"
    CURVATURE_TRANSFORM = "curvature_transform"
    EINSTEIN_SUITE = "einstein_suite"
    INTEGRABILITY = "integrability"
    SECOND_SINYUKOV = "second_sinyukov"
    THIRD_SINYUKOV = "third_sinyukov"
    RECONSTRUCTION = "reconstruction"
    GEODESIC_CORRESPONDENCE = "geodesic_correspondence"


# ---------------------------------------------------------------------------
# Charts and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Chart:
    """Local coordinate chart with a box domain"""
    dimension: int
    coordinates: Tuple[str, ...]
    domain: Tuple[Tuple[float, float], ...]
    margin: float = 0.1

    def __post_init__(self):
        if not 2 <= self.dimension <= 6:
            raise MetricSpecError(f"dimension must be between 2 and 6, got {self.dimension}")
        if len(self.coordinates) != self.dimension:
            raise MetricSpecError(
                f"dimension {self.dimension} does not match {len(self.coordinates)} coordinate names")
        if len(set(self.coordinates)) != len(self.coordinates):
            raise MetricSpecError("coordinate names must be distinct")
        if len(self.domain) != self.dimension:
            raise MetricSpecError("one domain interval per coordinate is required")
        for name, (lo, hi) in zip(self.coordinates, self.domain):
            if not lo < hi:
                raise MetricSpecError(f"degenerate domain interval for {name}: [{lo}, {hi}]")
        if not 0.0 < self.margin < 0.5:
            raise MetricSpecError(f"margin must lie in (0, 0.5), got {self.margin}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.domain], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.domain], dtype=float)

    def shrunk_box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Domain box shrunk on every side by the margin fraction"""
        width = self.upper - self.lower
        return self.lower + self.margin * width, self.upper - self.margin * width

    def contains(self, point, respect_margin: bool = False) -> bool:
        point = np.asarray(point, dtype=float)
        lo, hi = self.shrunk_box() if respect_margin else (self.lower, self.upper)
        slack = 1e-12 * (1.0 + np.abs(hi - lo))
        return bool(np.all(point >= lo - slack) and np.all(point <= hi + slack))

    def is_compatible(self, other: 'Chart') -> bool:
        return (self.dimension == other.dimension
                and self.coordinates == other.coordinates
                and np.allclose(self.lower, other.lower, atol=1e-12)
                and np.allclose(self.upper, other.upper, atol=1e-12))


@dataclass(frozen=True, eq=False)
class MetricField:
    """Symmetric array of expression components g_ij on a chart"""
    chart: Chart
    components: Tuple[Tuple[Any, ...], ...]
    name: str = "metric"
    expected: Optional[str] = None
    # derivative trees keyed by (i, j, sorted multi-index), filled lazily by the geometry layer
    derivative_cache: Dict[Tuple, Any] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = self.chart.dimension
        if len(self.components) != n or any(len(row) != n for row in self.components):
            raise MetricSpecError(f"metric '{self.name}' needs a {n}x{n} component array")
        for i in range(n):
            for j in range(i + 1, n):
                if self.components[i][j] is not self.components[j][i]:
                    raise MetricSpecError(f"metric '{self.name}' is not symmetric in ({i + 1},{j + 1})")

    @property
    def dimension(self) -> int:
        return self.chart.dimension

    def __str__(self):
        return f"Metric: {self.name} (n={self.dimension})"


# ---------------------------------------------------------------------------
# Pointwise evaluations
# ---------------------------------------------------------------------------

@dataclass
class MetricJet:
    """Values and partial derivatives of g at one point; derivative indices trail"""
    point: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray
    det: float
    dg: Optional[np.ndarray] = None       # [i, j, k]       = d_k g_ij
    d2g: Optional[np.ndarray] = None      # [i, j, k, l]    = d_l d_k g_ij
    d3g: Optional[np.ndarray] = None      # [i, j, k, l, m]
    order: int = 0
    backend: Backend = Backend.ANALYTIC

    @property
    def dimension(self) -> int:
        return self.g.shape[0]

    def derivatives(self) -> List[np.ndarray]:
        return [d for d in (self.dg, self.d2g, self.d3g) if d is not None][:self.order]


@dataclass
class CurvatureEval:
    """Connection and curvature of one metric at one point"""
    point: np.ndarray
    christoffel: np.ndarray                 # [h, i, j]        Gamma^h_ij
    d_christoffel: np.ndarray               # [h, i, j, k]     d_k Gamma^h_ij
    riemann: np.ndarray                     # [h, i, j, k]     R^h_ijk
    ricci: np.ndarray                       # [i, j]           R_ij = R^a_iaj
    scalar: float
    ricci_mixed: np.ndarray                 # [a, l]           R^a_l
    riemann_mixed: np.ndarray               # [a, i, l, b]     R^a_il^b = g^bk R^a_ikl
    weyl: np.ndarray                        # [h, i, j, k]
    nabla_riemann: Optional[np.ndarray] = None          # [h, i, j, k, m]  nabla_m R^h_ijk
    nabla_ricci: Optional[np.ndarray] = None            # [i, j, k]        nabla_k R_ij
    ricci_mixed_derivative: Optional[np.ndarray] = None  # [a, k, b]       g^bm nabla_m R^a_k
    ricci_upper_derivative: Optional[np.ndarray] = None  # [a, b, k]       nabla_k R^ab

    @property
    def has_derivatives(self) -> bool:
        return self.nabla_ricci is not None


@dataclass
class MappingEval:
    """Pointwise quantities attached to a metric pair (g, g_bar)"""
    point: np.ndarray
    Psi: float
    psi: np.ndarray                  # psi_i
    psi_ij: np.ndarray               # psi_{i,j} - psi_i psi_j
    a: np.ndarray                    # a_ij
    lambda_: np.ndarray              # lambda_i from the metric pair
    lambda_gradient: np.ndarray      # d_i lambda
    lambda_discrepancy: float
    lam: float                       # lambda = a_ab g^ab / 2
    lambda_up: np.ndarray            # lambda^h
    lambda_cov: Optional[np.ndarray]  # lambda_{i,j}
    mu: Optional[float]
    mu_gradient: Optional[np.ndarray] = None   # mu_{,k}
    K: Optional[float] = None
    K_bar: Optional[float] = None
    Lambda: Optional[np.ndarray] = None         # lambda_{i,j} - K a_ij

    def __str__(self):
        return f"MappingEval at {np.round(self.point, 6).tolist()}: Psi={self.Psi:.6g}, |psi|={np.max(np.abs(self.psi)):.3g}"


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class ResidualBlock:
    """One tensor equation evaluated over a grid"""
    name: str
    per_point: np.ndarray

    @property
    def max(self) -> float:
        return float(np.max(self.per_point)) if self.per_point.size else 0.0

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.per_point ** 2))) if self.per_point.size else 0.0


@dataclass
class ResidualReport:
    """Residual of one equation (possibly several tensor blocks) over a grid"""
    equation: EquationId
    points: np.ndarray
    blocks: List[ResidualBlock]
    tolerance: float
    backend: Backend
    metadata: Dict[str, Any] = field(default_factory=dict)
    extra_conditions: Dict[str, bool] = field(default_factory=dict)

    @property
    def per_point(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(len(self.points))
        return np.max(np.vstack([b.per_point for b in self.blocks]), axis=0)

    @property
    def global_max(self) -> float:
        return float(np.max(self.per_point)) if len(self.points) else 0.0

    @property
    def rms(self) -> float:
        values = self.per_point
        return float(np.sqrt(np.mean(values ** 2))) if values.size else 0.0

    @property
    def passed(self) -> bool:
        return self.global_max < self.tolerance and all(self.extra_conditions.values())

    def block(self, name: str) -> ResidualBlock:
        return next(b for b in self.blocks if b.name == name)

    def worst_point(self) -> Optional[np.ndarray]:
        if not len(self.points):
            return None
        return self.points[int(np.argmax(self.per_point))]

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.equation.value}: {status} (max {self.global_max:.3e}, tol {self.tolerance:.1e})"


@dataclass
class EinsteinReport:
    """Result of the single-metric Einstein test"""
    is_einstein: bool
    K: float
    max_residual: float
    K_spread: float
    K_values: np.ndarray
    tolerance: float


# ---------------------------------------------------------------------------
# Closed system
# ---------------------------------------------------------------------------

@dataclass
class SinyukovState:
    """Unknowns (a_ij, lambda_i, mu) of the closed Cauchy system"""
    a: np.ndarray
    lam: np.ndarray
    mu: float

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.a = 0.5 * (self.a + self.a.T)
        self.lam = np.asarray(self.lam, dtype=float)
        self.mu = float(self.mu)

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    @property
    def dimension(self) -> int:
        n = self.n
        return n * (n + 1) // 2 + n + 1

    def to_vector(self) -> np.ndarray:
        upper = self.a[np.triu_indices(self.n)]
        return np.concatenate([upper, self.lam, [self.mu]])

    @classmethod
    def from_vector(cls, vector: np.ndarray, n: int) -> 'SinyukovState':
        vector = np.asarray(vector, dtype=float)
        m = n * (n + 1) // 2
        a = np.zeros((n, n))
        a[np.triu_indices(n)] = vector[:m]
        a = a + np.triu(a, 1).T
        return cls(a=a, lam=vector[m:m + n], mu=vector[m + n])

    def __str__(self):
        return f"SinyukovState(n={self.n}, |a|={np.max(np.abs(self.a)):.4g}, |lambda|={np.max(np.abs(self.lam)):.4g}, mu={self.mu:.4g})"


@dataclass
class PathSpec:
    """Polyline through the chart; fixed-step RK4 along each segment"""
    waypoints: List[np.ndarray]
    step: float = 0.01
    integrator_order: int = 4

    def __post_init__(self):
        self.waypoints = [np.asarray(w, dtype=float) for w in self.waypoints]
        if len(self.waypoints) < 2:
            raise GeodesicMappingError("a path needs at least two waypoints")
        if self.step <= 0:
            raise GeodesicMappingError(f"step must be positive, got {self.step}")
        if self.integrator_order != 4:
            raise GeodesicMappingError("only the fixed RK4 integrator is available")

    @property
    def is_closed(self) -> bool:
        return bool(np.allclose(self.waypoints[0], self.waypoints[-1], atol=1e-14))

    @property
    def length(self) -> float:
        return float(sum(np.linalg.norm(b - a) for a, b in zip(self.waypoints[:-1], self.waypoints[1:])))


@dataclass
class SolveResult:
    """Grid solution of the closed system plus reconstruction and verification"""
    points: np.ndarray
    states: List[SinyukovState]
    gbar: np.ndarray                 # [node, i, j]
    Psi: np.ndarray                  # [node]
    verification: ResidualReport
    holonomy_defect: float
    holonomy_loop: List[np.ndarray]
    classification: MappingClass
    base_point: np.ndarray
    path_policy: str = "axis-ordered staircase (x1 first, then x2, ...)"
    max_lambda: float = 0.0
    max_a_deviation: float = 0.0


# ---------------------------------------------------------------------------
# Geodesics
# ---------------------------------------------------------------------------

@dataclass
class GeodesicCurve:
    """Sampled solution of the geodesic equation of one metric"""
    times: np.ndarray
    positions: np.ndarray        # [sample, i]
    velocities: np.ndarray       # [sample, i]
    accelerations: np.ndarray    # [sample, i]
    metric_name: str
    truncated: bool = False
    reason: str = ""

    @property
    def sample_count(self) -> int:
        return len(self.times)

    def __str__(self):
        flag = " (truncated)" if self.truncated else ""
        return f"Geodesic of {self.metric_name}: {self.sample_count} samples up to t={self.times[-1]:.4g}{flag}"


# Export all models
__all__ = [
    'GeodesicMappingError', 'ExpressionSyntaxError', 'UnknownIdentifierError', 'ArityError',
    'ExpressionDomainError', 'SingularMetricError', 'MetricSpecError', 'IncompatibleChartsError',
    'SourceNotEinsteinError', 'UnsupportedPrecisionError', 'DegenerateSolutionError',
    'IntegrationBlowUpError', 'GeodesicError',
    'Backend', 'MappingClass', 'EquationId',
    'Chart', 'MetricField', 'MetricJet', 'CurvatureEval', 'MappingEval',
    'ResidualBlock', 'ResidualReport', 'EinsteinReport',
    'SinyukovState', 'PathSpec', 'SolveResult', 'GeodesicCurve'
]
