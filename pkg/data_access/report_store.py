# data_access/report_store.py
# Report document schema and JSON persistence

import json
import os
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from config.settings import AppConfig
from data_access.models import ResidualReport
from utilities.helpers import finite_or_none, format_timestamp, to_jsonable
from utilities.logger import get_logger


class BlockEntry(BaseModel):
    name: str
    max: Optional[float]
    rms: Optional[float]
    passed: bool


class ReportEntry(BaseModel):
    """One residual check as written to disk"""
    equation: str
    passed: bool
    tolerance: float
    max: Optional[float]
    rms: Optional[float]
    blocks: List[BlockEntry] = Field(default_factory=list)
    worst_point: Optional[List[Optional[float]]] = None
    metadata: Dict[str, Any] = Field(default_factory=dict)


class GridEntry(BaseModel):
    points_per_axis: Optional[int] = None
    margin: float
    count: int


class ReportDocument(BaseModel):
    """Machine-readable result of one command run"""
    model_config = ConfigDict(extra='forbid')

    schema_version: str = AppConfig.REPORT_SCHEMA_VERSION
    tool: str = AppConfig.TOOL_NAME
    version: str = AppConfig.VERSION
    timestamp: str = Field(default_factory=format_timestamp)
    command: str
    backend: Optional[str] = None
    tolerances: Dict[str, float] = Field(default_factory=dict)
    grid: Optional[GridEntry] = None
    seed: Optional[int] = None
    metrics: Dict[str, Optional[str]] = Field(default_factory=dict)
    reports: List[ReportEntry] = Field(default_factory=list)
    classification: Optional[str] = None
    einstein: Optional[Dict[str, Any]] = None
    solver: Optional[Dict[str, Any]] = None
    curvature: Optional[Dict[str, Any]] = None
    geodesics: Optional[Dict[str, Any]] = None
    exit_code: int = AppConfig.EXIT_OK
    notes: List[str] = Field(default_factory=list)

    def report(self, equation: str) -> ReportEntry:
        return next(r for r in self.reports if r.equation == equation)


def report_entry(report: ResidualReport, notes: List[str]) -> ReportEntry:
    """Convert a ResidualReport; non-finite numbers become null with a note"""
    label = report.equation.value
    blocks = [
        BlockEntry(name=b.name, max=finite_or_none(b.max, f"{label}.{b.name}.max", notes),
                   rms=finite_or_none(b.rms, f"{label}.{b.name}.rms", notes),
                   passed=bool(b.max < report.tolerance))
        for b in report.blocks
    ]
    worst = report.worst_point()
    return ReportEntry(
        equation=label,
        passed=report.passed,
        tolerance=report.tolerance,
        max=finite_or_none(report.global_max, f"{label}.max", notes),
        rms=finite_or_none(report.rms, f"{label}.rms", notes),
        blocks=blocks,
        worst_point=to_jsonable(worst, f"{label}.worst_point", notes) if worst is not None else None,
        metadata=to_jsonable({**report.metadata, **{f"condition.{k}": v for k, v in report.extra_conditions.items()}},
                             f"{label}.metadata", notes),
    )


class ReportStore:
    """Serialises report documents deterministically"""

    def __init__(self):
        self.logger = get_logger(__name__)

    @staticmethod
    def to_json(document: ReportDocument) -> str:
        payload = document.model_dump(mode='json')
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, document: ReportDocument, path: str) -> str:
        try:
            directory = os.path.dirname(os.path.abspath(path))
            os.makedirs(directory, exist_ok=True)
            with open(path, 'w', encoding='utf-8') as handle:
                handle.write(self.to_json(document))
            self.logger.info(f"Report written to {path}")
            return path
        except OSError as e:
            self.logger.error(f"Could not write report {path}: {e}")
            raise

    @staticmethod
    def read(path: str) -> ReportDocument:
        with open(path, 'r', encoding='utf-8') as handle:
            return ReportDocument.model_validate_json(handle.read())
