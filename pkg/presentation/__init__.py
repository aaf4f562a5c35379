"""
Presentation Layer
Contains the command-line interface and the plain-text report formatter
"""

from .console_ui import ConsoleUI, build_parser
from .report_formatter import ReportFormatter

__all__ = [
    'ConsoleUI',
    'build_parser',
    'ReportFormatter'
]
