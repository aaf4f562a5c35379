# config/settings.py
# Configuration settings for the Geodesic Mapping Toolkit

import os


class ToleranceConfig:
    """Residual tolerances and classification thresholds"""
    ANALYTIC = 1e-8
    FINITE_DIFFERENCE = 1e-4
    THIRD_EQUATION = 1e-7

    # |det g| below this (times the component scale) counts as singular
    SINGULAR_DET = 1e-12

    # Mapping classification
    NONTRIVIAL_PSI = 1e-6
    DEGENERACY = 1e-8

    # Spread of the pointwise Einstein constant over a grid (analytic backend)
    EINSTEIN_CONSTANCY = 1e-9

    # Empirical split between "integrable seed" and "obstruction"
    HOLONOMY_OBSTRUCTION = 1e-5

    WEYL_DIM2 = 1e-10

    # lambda_i from the metric pair vs the gradient of lambda
    LAMBDA_ROUTE = 1e-6


class FiniteDifferenceConfig:
    """Central-difference stencils for the finite-difference backend"""
    # Base step per derivative order, scaled by (1 + |x_i|) on each axis
    BASE_STEPS = {1: 1e-5, 2: 1e-4, 3: 1e-3}


class GridConfig:
    """Sampling grids inside a chart"""
    DEFAULT_MARGIN = 0.1
    POINTS_LOW_DIMENSION = 5     # n <= 3
    POINTS_HIGH_DIMENSION = 3    # n = 4..6
    MIN_DIMENSION = 2
    MAX_DIMENSION = 6


class SolverConfig:
    """Closed Cauchy system integration"""
    STEP = 0.01
    # Holonomy loop side as a fraction of the shrunk domain width
    BASE_LOOP_FRACTION = 0.25
    # Reconstructed pair and the two staircase fills must agree to this
    VERIFICATION = 1e-6


class GeodesicConfig:
    """Geodesic integration and correspondence sweeps"""
    STEP = 1e-3
    T_END = 0.5
    SAMPLE_COUNT = 20
    SEED = 7
    # max parallelism defect of a mapped geodesic, and allowed drift of g(v, v)
    DEFECT_TOLERANCE = 1e-6
    ENERGY_TOLERANCE = 1e-8


class CorpusConfig:
    """Bundled metric corpus"""
    CORPUS_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'corpus')
    MANIFEST = 'manifest.csv'
    METRIC_SUFFIX = '.metric'


class LoggingConfig:
    """Logging configuration"""
    LOG_LEVEL = 'INFO'
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    LOG_FILE = os.getenv('GEOMAP_LOG_FILE', 'logs/geodesic_mapping.log')
    MAX_LOG_SIZE = 10 * 1024 * 1024  # 10MB
    BACKUP_COUNT = 5


# Application-wide settings
class AppConfig:
    """Main application configuration"""
    APP_NAME = "Geodesic Mapping Toolkit"
    TOOL_NAME = "geomap"
    VERSION = "1.0.0"

    REPORT_SCHEMA_VERSION = "1.0"

    # Exit codes of the command surface
    EXIT_OK = 0
    EXIT_FAILED = 1
    EXIT_ERROR = 2
