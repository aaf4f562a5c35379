# data_access/metric_repository.py
# Metric specification files and the bundled corpus - Repository pattern implementation

import os
import re
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from business_logic.expr import FUNCTIONS, ZERO, parse
from config.settings import CorpusConfig, GridConfig
from data_access.models import Chart, ExpressionSyntaxError, GeodesicMappingError, MetricField, MetricSpecError
from utilities.logger import get_logger

SECTIONS = ('chart', 'metric', 'meta')
COMPONENT_KEY = re.compile(r'^g([1-9])([1-9])$')
MANIFEST_COLUMNS = ['command', 'source', 'target', 'expected_class', 'expected_exit', 'notes']


class ChartSection(BaseModel):
    """Validated [chart] block"""
    model_config = ConfigDict(extra='forbid')

    dimension: int = Field(ge=GridConfig.MIN_DIMENSION, le=GridConfig.MAX_DIMENSION)
    coordinates: List[str]
    domain: Dict[str, Tuple[float, float]]
    margin: float = Field(default=GridConfig.DEFAULT_MARGIN, gt=0.0, lt=0.5)

    @model_validator(mode='after')
    def check_coordinates(self) -> 'ChartSection':
        if len(self.coordinates) != self.dimension:
            raise ValueError(f"dimension {self.dimension} does not match {len(self.coordinates)} coordinate names")
        for name in self.coordinates:
            if not re.fullmatch(r'[A-Za-z_][A-Za-z0-9_]*', name) or name in FUNCTIONS:
                raise ValueError(f"invalid coordinate name '{name}'")
        missing = [c for c in self.coordinates if c not in self.domain]
        if missing:
            raise ValueError(f"no domain given for {', '.join(missing)}")
        extra = [c for c in self.domain if c not in self.coordinates]
        if extra:
            raise ValueError(f"domain given for unknown coordinate {', '.join(extra)}")
        return self

    def to_chart(self) -> Chart:
        return Chart(self.dimension, tuple(self.coordinates),
                     tuple(self.domain[c] for c in self.coordinates), self.margin)


class MetaSection(BaseModel):
    """Validated [meta] block"""
    model_config = ConfigDict(extra='forbid')

    name: Optional[str] = None
    expected: Optional[Literal['not_geodesic', 'trivial_affine', 'nontrivial_geodesic']] = None
    notes: str = ""


@dataclass
class _Entry:
    key: str
    value: str
    line: int
    key_column: int
    value_column: int


@dataclass
class _Document:
    sections: Dict[str, List[_Entry]] = field(default_factory=dict)
    headers: Dict[str, int] = field(default_factory=dict)


class MetricRepository:
    """
    Reads metric specification files and the corpus manifest
    Resolves bare corpus names ("flat2") to files under the corpus directory
    """

    def __init__(self, corpus_dir: Optional[str] = None):
        self.logger = get_logger(__name__)
        self.corpus_dir = corpus_dir or CorpusConfig.CORPUS_DIR

    # -- locating files -------------------------------------------------------

    def resolve(self, path_or_name: str) -> str:
        """Existing path, or a corpus metric of that name"""
        if os.path.isfile(path_or_name):
            return path_or_name
        name = path_or_name if path_or_name.endswith(CorpusConfig.METRIC_SUFFIX) \
            else path_or_name + CorpusConfig.METRIC_SUFFIX
        candidate = os.path.join(self.corpus_dir, name)
        if os.path.isfile(candidate):
            return candidate
        raise MetricSpecError(f"no metric file or corpus entry named '{path_or_name}'", path=path_or_name)

    def list_metrics(self) -> List[str]:
        if not os.path.isdir(self.corpus_dir):
            return []
        return sorted(f[:-len(CorpusConfig.METRIC_SUFFIX)] for f in os.listdir(self.corpus_dir)
                      if f.endswith(CorpusConfig.METRIC_SUFFIX))

    # -- metric files ---------------------------------------------------------

    def load_metric_spec(self, path: str) -> MetricField:
        """Validated MetricField from a metric file path or corpus name"""
        resolved = self.resolve(path)
        try:
            try:
                with open(resolved, 'r', encoding='utf-8') as handle:
                    text = handle.read()
            except UnicodeDecodeError as e:
                raise MetricSpecError(f"not a UTF-8 text file ({e.reason} at byte {e.start})", path=resolved) from e
            except OSError as e:
                raise MetricSpecError(f"cannot read file: {e.strerror or e}", path=resolved) from e
            metric = self.parse_text(text, resolved)
            self.logger.info(f"Loaded metric '{metric.name}' (n={metric.dimension}) from {resolved}")
            return metric
        except GeodesicMappingError as e:
            self.logger.error(f"Failed to load metric spec {resolved}: {e}")
            raise

    def parse_text(self, text: str, path: str = "") -> MetricField:
        document = self._split_sections(text, path)
        chart = self._build_chart(document, path)
        meta = self._build_meta(document, path)
        components = self._build_components(document, chart, path)
        default_name = os.path.splitext(os.path.basename(path))[0] if path else "metric"
        return MetricField(chart=chart, components=components, name=meta.name or default_name,
                           expected=meta.expected)

    @staticmethod
    def _split_sections(text: str, path: str) -> _Document:
        document = _Document()
        current: Optional[str] = None
        for number, raw in enumerate(text.splitlines(), start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith('#'):
                continue
            indent = len(raw) - len(raw.lstrip())
            if stripped.startswith('['):
                match = re.fullmatch(r'\[\s*([A-Za-z_]+)\s*\]', stripped)
                if not match:
                    raise MetricSpecError("malformed section header", number, indent + 1, path)
                current = match.group(1).lower()
                if current not in SECTIONS:
                    raise MetricSpecError(f"unknown section '[{current}]'", number, indent + 1, path)
                if current in document.headers:
                    raise MetricSpecError(f"section '[{current}]' appears twice", number, indent + 1, path)
                document.headers[current] = number
                document.sections[current] = []
                continue
            if current is None:
                raise MetricSpecError("entry outside of a section", number, indent + 1, path)
            if '=' not in raw:
                raise MetricSpecError("expected 'key = value'", number, len(raw.rstrip()) + 1, path)
            key_part, value_part = raw.split('=', 1)
            key = key_part.strip()
            if not key:
                raise MetricSpecError("missing key before '='", number, indent + 1, path)
            value = value_part.strip()
            value_column = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
            if any(e.key == key for e in document.sections[current]):
                raise MetricSpecError(f"duplicate entry '{key}'", number, indent + 1, path)
            document.sections[current].append(_Entry(key, value, number, indent + 1, value_column))
        return document

    @staticmethod
    def _entry_line(entries: List[_Entry], key: str, default: int) -> int:
        return next((e.line for e in entries if e.key == key or e.key.startswith(key + '.')), default)

    def _build_chart(self, document: _Document, path: str) -> Chart:
        if 'chart' not in document.sections:
            raise MetricSpecError("missing [chart] section", path=path)
        entries = document.sections['chart']
        header = document.headers['chart']
        payload: Dict[str, object] = {'domain': {}}
        for e in entries:
            if e.key == 'dimension':
                if not re.fullmatch(r'[+-]?\d+', e.value):
                    raise MetricSpecError("dimension must be an integer", e.line, e.value_column, path)
                payload['dimension'] = int(e.value)
            elif e.key == 'coordinates':
                payload['coordinates'] = [c.strip() for c in e.value.split(',')]
            elif e.key.startswith('domain.'):
                bounds = [b.strip() for b in e.value.split(',')]
                try:
                    if len(bounds) != 2:
                        raise ValueError
                    payload['domain'][e.key[len('domain.'):]] = (float(bounds[0]), float(bounds[1]))
                except ValueError:
                    raise MetricSpecError("domain needs two numbers 'lo, hi'", e.line, e.value_column, path)
            elif e.key == 'margin':
                try:
                    payload['margin'] = float(e.value)
                except ValueError:
                    raise MetricSpecError("margin must be a number", e.line, e.value_column, path)
            else:
                raise MetricSpecError(f"unknown chart key '{e.key}'", e.line, e.key_column, path)
        try:
            section = ChartSection.model_validate(payload)
        except ValidationError as exc:
            error = exc.errors()[0]
            where = str(error['loc'][0]) if error['loc'] else ''
            line = self._entry_line(entries, where, header) if where else header
            raise MetricSpecError(f"invalid [chart]: {error['msg']}", line, 1, path) from exc
        try:
            return section.to_chart()
        except MetricSpecError as exc:
            raise MetricSpecError(str(exc), header, 1, path) from exc

    def _build_meta(self, document: _Document, path: str) -> MetaSection:
        entries = document.sections.get('meta', [])
        payload = {e.key: e.value.strip('"') for e in entries}
        try:
            return MetaSection.model_validate(payload)
        except ValidationError as exc:
            error = exc.errors()[0]
            key = str(error['loc'][0]) if error['loc'] else ''
            line = self._entry_line(entries, key, document.headers.get('meta', 0))
            raise MetricSpecError(f"invalid [meta]: {error['msg']}", line, 1, path) from exc

    def _build_components(self, document: _Document, chart: Chart, path: str) -> Tuple[Tuple, ...]:
        if 'metric' not in document.sections:
            raise MetricSpecError("missing [metric] section", path=path)
        n = chart.dimension
        upper: Dict[Tuple[int, int], _Entry] = {}
        lower: Dict[Tuple[int, int], _Entry] = {}
        for e in document.sections['metric']:
            match = COMPONENT_KEY.match(e.key)
            if not match:
                raise MetricSpecError(f"metric keys look like g<i><j>, got '{e.key}'", e.line, e.key_column, path)
            i, j = int(match.group(1)), int(match.group(2))
            if i > n or j > n:
                raise MetricSpecError(f"component {e.key} is outside dimension {n}", e.line, e.key_column, path)
            (upper if i <= j else lower)[(i, j)] = e
        for (i, j), e in lower.items():
            if (j, i) in upper:
                raise MetricSpecError(f"duplicate symmetric entry: g{i}{j} and g{j}{i}", e.line, e.key_column, path)
            raise MetricSpecError(f"only upper-triangle keys are allowed; write g{j}{i} instead of g{i}{j}",
                                  e.line, e.key_column, path)

        matrix = [[ZERO] * n for _ in range(n)]
        for (i, j), e in upper.items():
            expression = self._parse_expression(e, chart, path)
            matrix[i - 1][j - 1] = expression
            matrix[j - 1][i - 1] = expression
        if all(matrix[k][k] is ZERO for k in range(n)):
            raise MetricSpecError("metric has no diagonal components", document.headers['metric'], 1, path)
        return tuple(tuple(row) for row in matrix)

    @staticmethod
    def _parse_expression(e: _Entry, chart: Chart, path: str):
        text, offset = e.value, e.value_column
        if len(text) >= 2 and text[0] == text[-1] and text[0] in '"\'':
            text, offset = text[1:-1], offset + 1
        elif text.startswith(('"', "'")):
            raise MetricSpecError("unterminated quoted expression", e.line, e.value_column, path)
        try:
            return parse(text, chart.coordinates)
        except ExpressionSyntaxError as exc:
            raise MetricSpecError(f"{e.key}: {exc}", e.line, offset + exc.position, path) from exc

    # -- corpus manifest ------------------------------------------------------

    def load_manifest(self) -> pd.DataFrame:
        """Corpus manifest as a DataFrame (one row per command to run)"""
        manifest_path = os.path.join(self.corpus_dir, CorpusConfig.MANIFEST)
        if not os.path.isfile(manifest_path):
            raise MetricSpecError("corpus manifest not found", path=manifest_path)
        frame = pd.read_csv(manifest_path, dtype=str, keep_default_na=False, comment='#')
        missing = [c for c in MANIFEST_COLUMNS if c not in frame.columns]
        if missing:
            raise MetricSpecError(f"manifest lacks columns {', '.join(missing)}", path=manifest_path)
        exits = pd.to_numeric(frame['expected_exit'], errors='coerce')
        bad = frame.index[exits.isna() | ~exits.isin([0, 1, 2])]
        if len(bad):
            row = int(bad[0])
            raise MetricSpecError(f"manifest row {row + 1}: expected_exit must be 0, 1 or 2, "
                                  f"got '{frame.at[bad[0], 'expected_exit']}'", path=manifest_path)
        frame['expected_exit'] = exits.astype(int)
        self.logger.info(f"Loaded corpus manifest with {len(frame)} entries")
        return frame[MANIFEST_COLUMNS]
