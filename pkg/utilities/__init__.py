"""
Utilities Layer
Contains helper functions, logging, and common utilities
"""

from .logger import setup_logging, get_logger
from .helpers import *

__all__ = [
    'setup_logging',
    'get_logger',
    'max_abs',
    'tensor_grid',
    'uniform_axes',
    'finite_or_none',
    'to_jsonable',
    'sanitize_name',
    'format_timestamp',
    'format_duration',
    'format_point',
    'parse_float_list',
    'symmetric_from_upper',
]
