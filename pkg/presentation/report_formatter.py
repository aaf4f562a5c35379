# presentation/report_formatter.py
# Plain-text summaries of report documents and corpus runs

from typing import List

import pandas as pd

from data_access.report_store import ReportDocument
from utilities.helpers import format_point


class ReportFormatter:
    """Renders report documents as console tables"""

    WIDTH = 70

    def _header(self, title: str) -> List[str]:
        return ["=" * self.WIDTH, title, "=" * self.WIDTH]

    @staticmethod
    def residual_table(document: ReportDocument) -> pd.DataFrame:
        rows = [{
            'equation': r.equation,
            'status': 'PASS' if r.passed else 'FAIL',
            'max': r.max,
            'rms': r.rms,
            'tolerance': r.tolerance,
            'worst point': format_point(r.worst_point) if r.worst_point and None not in r.worst_point else '-',
        } for r in document.reports]
        return pd.DataFrame(rows, columns=['equation', 'status', 'max', 'rms', 'tolerance', 'worst point'])

    def format_document(self, document: ReportDocument) -> str:
        metrics = ", ".join(v for v in document.metrics.values() if v)
        lines = self._header(f"{document.command.upper()}  {metrics}")
        if document.grid is not None:
            lines.append(f"Grid: {document.grid.count} points ({document.grid.points_per_axis} per axis, "
                         f"margin {document.grid.margin})   Backend: {document.backend}")
        if document.reports:
            table = self.residual_table(document)
            lines.append(table.to_string(index=False, float_format=lambda x: f"{x:.3e}"))
        if document.classification:
            lines.append(f"Classification: {document.classification}")
        if document.einstein:
            shown = {k: v for k, v in document.einstein.items() if v is not None}
            lines.append("Einstein: " + ", ".join(
                f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in shown.items()))
        if document.solver:
            solver = document.solver
            lines.append(f"Solver: base {format_point(solver.get('base_point'))}, h={solver.get('step')}, "
                         f"holonomy defect {solver.get('holonomy_defect')}")
            if 'target_max_error' in solver:
                lines.append(f"Reconstructed g_bar vs target: max error {solver['target_max_error']}")
        if document.curvature:
            lines.append(f"Curvature samples: {len(document.curvature['samples'])}, "
                         f"max |W| = {document.curvature['weyl_max']}")
        for note in document.notes:
            lines.append(f"note: {note}")
        lines.append(f"Exit code: {document.exit_code}")
        return "\n".join(lines)

    def format_corpus(self, summary: pd.DataFrame) -> str:
        lines = self._header("CORPUS RUN")
        if summary.empty:
            lines.append("(manifest is empty)")
            return "\n".join(lines)
        lines.append(summary.to_string(index=False, float_format=lambda x: f"{x:.2e}"))
        failures = int((~summary['ok']).sum())
        lines.append("-" * self.WIDTH)
        lines.append(f"{len(summary) - failures}/{len(summary)} entries as expected")
        return "\n".join(lines)
