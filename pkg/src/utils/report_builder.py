from typing import Any, Dict, List, Optional, Sequence

from src.models.runtime import StudySummary
from src.models.trajectory import SolverReport

RULE = "-" * 64


class ReportBuilder:
    """
    Plain-text blocks for the command-line surface.

    Every block has a title line, a rule and its body; callers join blocks with
    blank lines. Numbers are rendered with fixed precision so reports diff cleanly.
    """

    @staticmethod
    def _block(title: str, lines: Sequence[str], footer: Optional[str] = None) -> str:
        body = [title, RULE, *lines]
        if footer:
            body.extend([RULE, footer])
        return "\n".join(body)

    @staticmethod
    def table(header: Sequence[str], rows: Sequence[Sequence[Any]], precision: int = 4) -> List[str]:
        """Left-aligned first column, right-aligned numeric columns."""
        def cell(value: Any) -> str:
            if isinstance(value, float):
                return f"{value:.{precision}f}"
            return str(value)

        text = [[cell(v) for v in row] for row in rows]
        widths = [max(len(str(h)), *(len(r[i]) for r in text)) if text else len(str(h)) for i, h in enumerate(header)]
        lines = ["  ".join(str(h).ljust(w) if i == 0 else str(h).rjust(w) for i, (h, w) in enumerate(zip(header, widths)))]
        for row in text:
            lines.append("  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(row, widths))))
        return lines

    @staticmethod
    def solver(report: SolverReport, scenario_name: str) -> str:
        lines = [
            f"Status:            {report.status.value}",
            f"Outer iterations:  {len(report.iterations)}",
            f"Inner iterations:  {report.total_inner_iterations}",
            f"Cost:              {report.cost:.6g}",
            f"Max violation:     {report.max_violation:.3g}",
        ]
        if report.iterations:
            lines.append("")
            lines.extend(ReportBuilder.table(
                ["outer", "cost", "violation", "mu", "inner", "rho"],
                [
                    [r.iteration, f"{r.cost:.6g}", f"{r.max_violation:.3g}", f"{r.penalty:.3g}", r.inner_iterations, f"{r.regularization:.3g}"]
                    for r in report.iterations
                ],
            ))
        return ReportBuilder._block(f"Plan: {scenario_name}", lines, report.message or None)

    @staticmethod
    def margins(margins: Dict[str, Any]) -> str:
        lines = [f"Max violation:            {margins['max_violation']:.3g}"]
        for name, value in margins["violation_by_block"].items():
            lines.append(f"  {name:<22} {value:.3g}")
        clearance = margins["min_obstacle_clearance"]
        if clearance is not None:
            lines.append(f"Min obstacle clearance:   {100.0 * clearance:.3f} cm")
        lines.append("Max |v_I| per axis:       " + ", ".join(f"{100.0 * v:.2f}" for v in margins["max_speed"]) + " cm/s")
        lines.append(f"Min EPM height:           {100.0 * margins['min_epm_height']:.2f} cm")
        low, high = margins["kappa_range"]
        lines.append(f"Condition number range:   {low:.3g} .. {high:.3g}")
        if margins["max_orientation_error_deg"] is not None:
            lines.append(f"Max field direction err:  {margins['max_orientation_error_deg']:.3g} deg")
        lines.append(f"Max |u7|:                 {margins['max_abs_u7']:.3g} rad/s")
        return ReportBuilder._block("Constraint margins", lines)

    @staticmethod
    def statistics(summary: StudySummary, tag: str) -> str:
        lines = ReportBuilder.table(["", "x", "y", "z"], summary.table.rows())
        footer = (
            f"{summary.successes}/{summary.runs} runs completed, "
            f"mean terminal error {100.0 * summary.terminal_position_error:.3f} cm"
        )
        if summary.failed_runs:
            footer += f", failed runs: {summary.failed_runs}"
        title = f"Statistics: {tag} (variance {summary.noise_variance:g} {summary.variance_unit})"
        return ReportBuilder._block(title, lines, footer)

    @staticmethod
    def statistics_rows(rows: Sequence[Sequence[str]], tag: str) -> str:
        """Statistics block from an already-written statistics CSV."""
        parsed = [[row[0], *(float(v) for v in row[1:])] for row in rows]
        return ReportBuilder._block(f"Statistics: {tag}", ReportBuilder.table(["", "x", "y", "z"], parsed))

    @staticmethod
    def error(error: Dict[str, Any], help_text: Optional[str] = None) -> str:
        lines = [error["message"]]
        details = error.get("details")
        if isinstance(details, dict):
            lines.extend(f"  {key}: {value}" for key, value in details.items() if value is not None)
        if help_text:
            lines.append(f"Help: {help_text}")
        return ReportBuilder._block(f"Error: {error['error_type']}", lines)
