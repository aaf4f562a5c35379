"""
Business Logic Layer
Contains expression handling, curvature, geodesic-mapping checks, the closed-system solver
and geodesic integration
"""

from .geometry import GeometryService
from .mapping import MappingService
from .sinyukov import SinyukovService
from .geodesics import GeodesicService

__all__ = [
    'GeometryService',
    'MappingService',
    'SinyukovService',
    'GeodesicService'
]
