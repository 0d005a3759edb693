import argparse
from pathlib import Path

from src.commands.common import EXIT_FAILURE, EXIT_OK, default_out_dir, output, resolve_source
from src.models.runtime import StudySpec
from src.services.results_service import ResultsService
from src.services.simulation_service import SimulationService
from src.utils.report_builder import ReportBuilder


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        "sweep", parents=parents, help="plan once, then run open- and closed-loop Monte Carlo studies"
    )
    parser.add_argument("scenario", help="scenario YAML file or result bundle directory")
    parser.add_argument("--runs", type=int, default=100)
    parser.add_argument("--noise-var", type=float, nargs="+", default=None, help="one or more noise variances")
    parser.add_argument("--modes", nargs="+", choices=["open", "closed"], default=["open", "closed"])
    parser.add_argument("--keep-logs", action="store_true")
    parser.add_argument("-o", "--out", default=None)
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    bundle, _ = resolve_source(args.scenario, args.seed)
    out_dir = Path(args.out) if args.out else default_out_dir(bundle.scenario)

    study = StudySpec(
        runs=args.runs,
        modes=args.modes,
        noise_variances=args.noise_var,
        workers=args.workers,
        keep_logs=args.keep_logs,
    )
    bundle.summaries = SimulationService.monte_carlo(bundle.trajectory, bundle.gains, bundle.scenario, study)
    written = ResultsService.emit_results(bundle, out_dir)
    if args.plots:
        from src.services.plot_service import PlotService

        written.extend(PlotService.plan_figures(bundle.trajectory, bundle.scenario, out_dir))
        written.append(PlotService.study_figure(bundle.summaries, bundle.trajectory, out_dir))

    payload = {
        "out_dir": str(out_dir),
        "files": [p.name for p in written],
        "report": bundle.report.to_dict(),
        "studies": [ResultsService.summary_dict(s) for s in bundle.summaries],
    }
    text = "\n\n".join(
        [ReportBuilder.solver(bundle.report, bundle.scenario.name)]
        + [ReportBuilder.statistics(s, ResultsService.summary_tag(s, bundle.summaries)) for s in bundle.summaries]
    )
    output(args, payload, text)
    return EXIT_FAILURE if any(s.failures for s in bundle.summaries) else EXIT_OK
