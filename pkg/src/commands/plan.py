import argparse
from pathlib import Path

from src.commands.common import EXIT_FAILURE, EXIT_OK, default_out_dir, load_scenario, output, plan_scenario
from src.models.bundle import ResultBundle
from src.models.trajectory import SolverStatus
from src.services.logger import get_logger
from src.services.results_service import ResultsService
from src.utils.report_builder import ReportBuilder

logger = get_logger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("plan", parents=parents, help="solve a scenario and write a result bundle")
    parser.add_argument("scenario", help="scenario YAML file")
    parser.add_argument("-o", "--out", default=None, help="bundle directory (default MAGCAP_OUTPUT_DIR/<name>)")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    """Exit 0 only when the solver converged; a max_iter or diverged plan is still written."""
    scenario = load_scenario(args.scenario, args.seed)
    result = plan_scenario(scenario)
    payload = {"scenario": scenario.name, "report": result.report.to_dict()}

    if result.trajectory is None:
        output(args, payload, ReportBuilder.solver(result.report, scenario.name))
        return EXIT_FAILURE

    out_dir = Path(args.out) if args.out else default_out_dir(scenario)
    bundle = ResultBundle(
        scenario=scenario,
        trajectory=result.trajectory,
        gains=result.gains,
        report=result.report,
        seed=scenario.simulation.seed,
    )
    written = ResultsService.emit_results(bundle, out_dir)
    if args.plots:
        from src.services.plot_service import PlotService

        written.extend(PlotService.plan_figures(result.trajectory, scenario, out_dir))

    margins = ResultsService.constraint_margins(result.trajectory, scenario)
    payload.update({"out_dir": str(out_dir), "files": [p.name for p in written], "margins": margins})
    text = "\n\n".join([
        ReportBuilder.solver(result.report, scenario.name),
        ReportBuilder.margins(margins),
        f"Bundle written to {out_dir}",
    ])
    output(args, payload, text)
    return EXIT_OK if result.report.status == SolverStatus.CONVERGED else EXIT_FAILURE
