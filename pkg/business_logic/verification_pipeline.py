# business_logic/verification_pipeline.py
# Orchestrates the command pipelines: load metrics, run the checks, assemble report documents

import os
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from business_logic.geodesics import GeodesicService
from business_logic.geometry import GeometryService, first_bianchi_residual
from business_logic.mapping import MappingService, default_tolerance
from business_logic.sinyukov import SinyukovService
from config.settings import AppConfig, GeodesicConfig, SolverConfig, ToleranceConfig
from data_access.metric_repository import MetricRepository
from data_access.models import (
    Backend, EquationId, GeodesicMappingError, MappingClass, MetricField, ResidualBlock, ResidualReport,
    SinyukovState
)
from data_access.report_store import GridEntry, ReportDocument, ReportStore, report_entry
from utilities.helpers import finite_or_none, format_duration, max_abs, sanitize_name, to_jsonable
from utilities.logger import get_logger


@dataclass
class RunOptions:
    """Flags shared by every command"""
    grid: Optional[int] = None
    backend: Backend = Backend.ANALYTIC
    tol: Optional[float] = None
    seed: int = GeodesicConfig.SEED
    step: float = SolverConfig.STEP


@dataclass
class SolveSeed:
    """Initial state for the closed system: explicit values, a metric pair, or the trivial family"""
    state: Optional[SinyukovState] = None
    from_pair: Optional[str] = None
    trivial: bool = False
    base: Optional[np.ndarray] = None


class VerificationPipeline:
    """
    Runs one command end to end and returns (ReportDocument, exit code)
    Domain errors never escape: they become exit code 2 with the message in the notes
    """

    def __init__(self, repository: Optional[MetricRepository] = None, store: Optional[ReportStore] = None):
        self.logger = get_logger(__name__)
        self.repository = repository or MetricRepository()
        self.store = store or ReportStore()
        self.geometry = GeometryService()
        self.mapping = MappingService(self.geometry)
        self.sinyukov = SinyukovService(self.geometry, self.mapping)
        self.geodesics = GeodesicService(self.geometry)

    # -- shared pieces ---------------------------------------------------------

    def _guarded(self, command: str, options: RunOptions, metrics: Dict[str, Optional[str]],
                 body: Callable[[ReportDocument], int]) -> Tuple[ReportDocument, int]:
        document = ReportDocument(command=command, backend=options.backend.value, seed=options.seed,
                                  metrics=metrics, tolerances=self._tolerances(options))
        try:
            document.exit_code = body(document)
        except GeodesicMappingError as e:
            self.logger.error(f"{command} failed: {e}")
            document.notes.append(f"error: {e}")
            document.exit_code = AppConfig.EXIT_ERROR
        return document, document.exit_code

    @staticmethod
    def _tolerances(options: RunOptions) -> Dict[str, float]:
        return {
            'residual': options.tol if options.tol is not None else default_tolerance(options.backend),
            'third_equation': options.tol if options.tol is not None else ToleranceConfig.THIRD_EQUATION,
            'nontrivial_psi': ToleranceConfig.NONTRIVIAL_PSI,
            'degeneracy': ToleranceConfig.DEGENERACY,
            'holonomy_obstruction': ToleranceConfig.HOLONOMY_OBSTRUCTION,
        }

    def _grid(self, g: MetricField, options: RunOptions, document: ReportDocument) -> np.ndarray:
        grid = self.geometry.sample_grid(g.chart, options.grid)
        document.grid = GridEntry(points_per_axis=options.grid or self.geometry.default_points_per_axis(g.dimension),
                                  margin=g.chart.margin, count=len(grid))
        return grid

    def _load_pair(self, g_path: str, gbar_path: str) -> Tuple[MetricField, MetricField]:
        g = self.repository.load_metric_spec(g_path)
        gbar = self.repository.load_metric_spec(gbar_path)
        self.mapping.require_shared_chart(g, gbar)
        return g, gbar

    def _einstein_summary(self, g: MetricField, gbar: Optional[MetricField], grid: np.ndarray,
                          backend: Backend, notes: List[str]) -> Dict[str, object]:
        source = self.geometry.einstein_check(g, grid, backend=backend)
        summary = {
            'source_is_einstein': source.is_einstein,
            'K': finite_or_none(source.K, 'einstein.K', notes) if source.is_einstein else None,
            'K_spread': finite_or_none(source.K_spread, 'einstein.K_spread', notes),
        }
        if gbar is not None:
            target = self.geometry.einstein_check(gbar, grid, backend=backend)
            summary.update({
                'target_is_einstein': target.is_einstein,
                'K_bar': finite_or_none(target.K, 'einstein.K_bar', notes) if target.is_einstein else None,
                'K_bar_spread': finite_or_none(target.K_spread, 'einstein.K_bar_spread', notes),
            })
        return summary

    # -- commands --------------------------------------------------------------

    def run_verify(self, g_path: str, gbar_path: str, options: RunOptions) -> Tuple[ReportDocument, int]:
        """Levi-Civita, Sinyukov, curvature transfer and the integrability hierarchy on one grid"""

        def body(document: ReportDocument) -> int:
            g, gbar = self._load_pair(g_path, gbar_path)
            grid = self._grid(g, options, document)
            analytic = options.backend is Backend.ANALYTIC
            pairs = self.mapping.pair_points(g, gbar, grid, options.backend, need_derivatives=analytic)
            tol = options.tol

            levi_civita = self.mapping.levi_civita_residual(g, gbar, grid, options.backend, tol, pairs)
            sinyukov = self.mapping.sinyukov_residual(g, gbar, grid, options.backend, tol, pairs)
            geodesic = levi_civita.passed
            reports = [
                levi_civita, sinyukov,
                self.mapping.curvature_transform_residual(g, gbar, grid, options.backend, tol, pairs,
                                                          informational=not geodesic),
                self.sinyukov.integrability_residual(g, gbar, grid, options.backend, tol, pairs),
                self.sinyukov.second_sinyukov_residual(g, gbar, grid, options.backend, tol, pairs),
            ]
            if analytic:
                reports.append(self.sinyukov.third_sinyukov_residual(g, gbar, grid, options.backend, tol, pairs))
            else:
                document.notes.append("third Sinyukov equation skipped: it needs the analytic backend")
            if levi_civita.passed != sinyukov.passed:
                document.notes.append("Levi-Civita and Sinyukov residuals disagree on pass/fail")

            classification = self.mapping.classify_mapping(reports)
            document.reports = [report_entry(r, document.notes) for r in reports]
            document.classification = classification.value
            document.einstein = self._einstein_summary(g, gbar, grid, options.backend, document.notes)
            self.logger.info(f"verify ({g.name}, {gbar.name}): {classification.value}")
            return AppConfig.EXIT_FAILED if classification is MappingClass.NOT_GEODESIC else AppConfig.EXIT_OK

        return self._guarded('verify', options, {'source': g_path, 'target': gbar_path}, body)

    def run_solve(self, g_path: str, seed: SolveSeed, options: RunOptions) -> Tuple[ReportDocument, int]:
        """Integrate the closed system over the grid, reconstruct g_bar and verify it"""

        def body(document: ReportDocument) -> int:
            if options.backend is not Backend.ANALYTIC:
                document.notes.append("the closed system is always integrated with the analytic backend")
            g = self.repository.load_metric_spec(g_path)
            n = g.dimension
            axes = self.geometry.grid_axes(g.chart, options.grid)
            self._grid(g, options, document)
            base = np.asarray(seed.base, dtype=float) if seed.base is not None \
                else np.array([axis[len(axis) // 2] for axis in axes])
            if len(base) != n:
                raise GeodesicMappingError(f"base point needs {n} coordinates, got {len(base)}")

            target = None
            if seed.from_pair:
                target = self.repository.load_metric_spec(seed.from_pair)
                self.mapping.require_shared_chart(g, target)
                s0 = self.sinyukov.state_from_pair(g, target, base)
                origin = f"from-pair {target.name}"
            elif seed.trivial:
                s0 = SinyukovState(a=self.geometry.metric_jet(g, base, 0).g, lam=np.zeros(n), mu=0.0)
                origin = "trivial (a = g(base), lambda = 0, mu = 0)"
            elif seed.state is not None:
                s0 = seed.state
                if s0.n != n:
                    raise GeodesicMappingError(f"seed state has dimension {s0.n}, metric has {n}")
                origin = "explicit"
            else:
                raise GeodesicMappingError("solve needs a seed: explicit state, --from-pair or --trivial-seed")

            result = self.sinyukov.solve_on_grid(g, s0, base, options.grid, options.step)
            solver = {
                'seed': {'origin': origin, 'a': s0.a, 'lambda': s0.lam, 'mu': s0.mu},
                'base_point': result.base_point,
                'step': options.step,
                'path_policy': result.path_policy,
                'points': result.points,
                'gbar': result.gbar,
                'Psi': result.Psi,
                'holonomy_defect': result.holonomy_defect,
                'holonomy_loop': result.holonomy_loop,
                'max_lambda': result.max_lambda,
                'max_a_deviation': result.max_a_deviation,
            }
            if target is not None:
                exact = np.array([jet.g for jet in self.geometry.metric_jets(target, result.points, 0)])
                solver['target_max_error'] = max_abs(result.gbar - exact)
            if result.holonomy_defect > ToleranceConfig.HOLONOMY_OBSTRUCTION:
                document.notes.append(f"holonomy defect {result.holonomy_defect:.3e} on the base loop "
                                      "suggests the seed violates the integrability conditions")

            document.solver = to_jsonable(solver, 'solver', document.notes)
            document.reports = [report_entry(result.verification, document.notes)]
            document.classification = result.classification.value
            return AppConfig.EXIT_OK if result.verification.passed else AppConfig.EXIT_FAILED

        metrics = {'source': g_path, 'target': seed.from_pair}
        return self._guarded('solve', options, metrics, body)

    def run_einstein(self, g_path: str, gbar_path: str, options: RunOptions) -> Tuple[ReportDocument, int]:
        """Einstein transfer chain for a pair whose source is an Einstein space"""

        def body(document: ReportDocument) -> int:
            g, gbar = self._load_pair(g_path, gbar_path)
            grid = self._grid(g, options, document)
            suite = self.mapping.einstein_suite(g, gbar, grid, options.backend, options.tol)
            target = self.geometry.einstein_check(gbar, grid, backend=options.backend)
            document.reports = [report_entry(suite, document.notes)]
            document.einstein = to_jsonable({
                'K': suite.metadata['K'],
                'K_bar': suite.metadata['K_bar'],
                'K_spread': suite.metadata['K_spread'],
                'K_bar_spread': suite.metadata['K_bar_spread'],
                'target_is_einstein': target.is_einstein,
                'target_K': target.K,
            }, 'einstein', document.notes)
            if suite.passed and not target.is_einstein:
                document.notes.append("suite passed but the target's own Einstein check did not")
            return AppConfig.EXIT_OK if suite.passed else AppConfig.EXIT_FAILED

        return self._guarded('einstein', options, {'source': g_path, 'target': gbar_path}, body)

    def run_curvature(self, g_path: str, options: RunOptions) -> Tuple[ReportDocument, int]:
        """Connection and curvature of a single metric over the grid"""

        def body(document: ReportDocument) -> int:
            g = self.repository.load_metric_spec(g_path)
            n = g.dimension
            grid = self._grid(g, options, document)
            jets = self.geometry.metric_jets(g, grid, 2, options.backend)
            samples = []
            for jet in jets:
                c = self.geometry.curvature(jet)
                samples.append({
                    'point': jet.point,
                    'christoffel': c.christoffel,
                    'riemann': c.riemann,
                    'ricci': c.ricci,
                    'scalar': c.scalar,
                    'weyl_max': max_abs(c.weyl),
                    'first_bianchi': first_bianchi_residual(c.riemann),
                    'constant_curvature_residual':
                        self.geometry.constant_curvature_residual(c, jet.g) if n >= 3 else None,
                })
            weyl = max(s['weyl_max'] for s in samples) if samples else 0.0
            if n == 2 and weyl > ToleranceConfig.WEYL_DIM2:
                document.notes.append(f"projective Weyl tensor of a surface should vanish, found {weyl:.3e}")
            document.curvature = to_jsonable({'samples': samples, 'weyl_max': weyl}, 'curvature', document.notes)
            document.einstein = self._einstein_summary(g, None, grid, options.backend, document.notes)
            return AppConfig.EXIT_OK

        return self._guarded('curvature', options, {'source': g_path, 'target': None}, body)

    def run_geodesic_compare(self, g_path: str, gbar_path: str, options: RunOptions,
                             count: int = GeodesicConfig.SAMPLE_COUNT, t_end: float = GeodesicConfig.T_END,
                             h: float = GeodesicConfig.STEP) -> Tuple[ReportDocument, int]:
        """Random g-geodesics must stay unparametrised g_bar-geodesics"""

        def body(document: ReportDocument) -> int:
            if options.backend is not Backend.ANALYTIC:
                document.notes.append("geodesics are always integrated with the analytic backend")
            g, gbar = self._load_pair(g_path, gbar_path)
            rng = np.random.default_rng(options.seed)
            curves = self.geodesics.sample_geodesics(g, count, rng, t_end, h)
            defects = np.array([self.geodesics.correspondence_residual(c, gbar) for c in curves])
            drifts = np.array([self.geodesics.energy_drift(c, g) for c in curves])
            report = ResidualReport(
                EquationId.GEODESIC_CORRESPONDENCE,
                np.array([c.positions[0] for c in curves]),
                [ResidualBlock('parallelism', defects)],
                options.tol if options.tol is not None else GeodesicConfig.DEFECT_TOLERANCE,
                Backend.ANALYTIC,
                {'count': count, 't_end': t_end, 'step': h, 'energy_drift_max': max_abs(drifts),
                 'truncated': int(sum(c.truncated for c in curves))},
                {'energy_conserved': bool(max_abs(drifts) < GeodesicConfig.ENERGY_TOLERANCE)},
            )
            document.reports = [report_entry(report, document.notes)]
            document.geodesics = to_jsonable({'curves': [
                {'start': c.positions[0], 'velocity': c.velocities[0], 'samples': c.sample_count,
                 'truncated': c.truncated, 'reason': c.reason, 'defect': d, 'energy_drift': e}
                for c, d, e in zip(curves, defects, drifts)
            ]}, 'geodesics', document.notes)
            return AppConfig.EXIT_OK if report.passed else AppConfig.EXIT_FAILED

        return self._guarded('geodesic-compare', options, {'source': g_path, 'target': gbar_path}, body)

    # -- corpus ----------------------------------------------------------------

    def run_entry(self, command: str, source: str, target: str, options: RunOptions) -> Tuple[ReportDocument, int]:
        if command == 'verify':
            return self.run_verify(source, target, options)
        if command == 'einstein':
            return self.run_einstein(source, target, options)
        if command == 'solve':
            return self.run_solve(source, SolveSeed(from_pair=target or None, trivial=not target), options)
        if command == 'curvature':
            return self.run_curvature(source, options)
        if command == 'geodesic-compare':
            return self.run_geodesic_compare(source, target, options)
        raise GeodesicMappingError(f"unknown corpus command '{command}'")

    def run_corpus(self, options: RunOptions, out_dir: Optional[str] = None,
                   only: Optional[List[str]] = None) -> Tuple[pd.DataFrame, int]:
        """Every manifest entry; exit 0 only if each matches its expected exit code and class"""
        manifest = self.repository.load_manifest()
        if only:
            manifest = manifest[manifest['source'].isin(only) | manifest['target'].isin(only)]
        rows = []
        for entry in manifest.itertuples(index=False):
            started = time.perf_counter()
            document, code = self.run_entry(entry.command, entry.source, entry.target, options)
            elapsed = time.perf_counter() - started
            matches = code == entry.expected_exit and (
                not entry.expected_class or document.classification == entry.expected_class)
            worst = max((r.max for r in document.reports if r.max is not None), default=None)
            rows.append({
                'command': entry.command, 'source': entry.source, 'target': entry.target,
                'expected_class': entry.expected_class, 'classification': document.classification or '',
                'expected_exit': entry.expected_exit, 'exit_code': code,
                'max_residual': worst, 'ok': matches, 'runtime': format_duration(elapsed),
            })
            if out_dir:
                name = sanitize_name(f"{entry.command}_{entry.source}_{entry.target or 'none'}") + '.json'
                self.store.write(document, os.path.join(out_dir, name))
            if not matches:
                self.logger.warning(f"corpus entry {entry.command} {entry.source} {entry.target}: "
                                    f"exit {code}, class {document.classification}, notes {document.notes}")
        summary = pd.DataFrame(rows)
        failures = int((~summary['ok']).sum()) if len(summary) else 0
        self.logger.info(f"Corpus run: {len(summary)} entries, {failures} mismatches")
        return summary, AppConfig.EXIT_OK if failures == 0 else AppConfig.EXIT_FAILED
