"""
Data Access Layer
Contains domain models, metric specification files and report persistence
"""

from .models import *
from .report_store import ReportDocument, ReportEntry, ReportStore, report_entry

__all__ = [
    'GeodesicMappingError', 'MetricSpecError', 'Backend', 'MappingClass', 'EquationId',
    'Chart', 'MetricField', 'ResidualReport', 'SinyukovState', 'PathSpec', 'SolveResult', 'GeodesicCurve',
    'ReportDocument', 'ReportEntry', 'ReportStore', 'report_entry',
]
