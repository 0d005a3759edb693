import argparse
from pathlib import Path

from src.commands.common import EXIT_FAILURE, EXIT_OK, default_out_dir, output, resolve_source
from src.models.runtime import StudySpec
from src.services.results_service import ResultsService
from src.services.simulation_service import SimulationService
from src.utils.report_builder import ReportBuilder


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser(
        "simulate", parents=parents, help="execute a plan in simulation with noisy measurements"
    )
    parser.add_argument("source", help="result bundle directory or scenario YAML file")
    parser.add_argument("--mode", choices=["open", "closed"], default="closed")
    parser.add_argument("--seeds", type=int, default=1, help="number of runs (run indices 0..K-1)")
    parser.add_argument("--noise-var", type=float, default=None, help="position noise variance in the scenario's variance unit")
    parser.add_argument("--keep-logs", action="store_true", help="write per-run logs (runs_<mode>.csv)")
    parser.add_argument("-o", "--out", default=None, help="output directory (default: the bundle itself)")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    bundle, planned_now = resolve_source(args.source, args.seed)
    if planned_now:
        out_dir = Path(args.out) if args.out else default_out_dir(bundle.scenario)
    else:
        out_dir = Path(args.out) if args.out else Path(args.source)
    if planned_now or out_dir != Path(args.source):
        ResultsService.emit_results(bundle, out_dir)

    study = StudySpec(
        runs=args.seeds,
        modes=[args.mode],
        noise_variances=[args.noise_var] if args.noise_var is not None else None,
        workers=args.workers,
        keep_logs=args.keep_logs,
    )
    summaries = SimulationService.monte_carlo(bundle.trajectory, bundle.gains, bundle.scenario, study)
    written = ResultsService.emit_study(summaries, out_dir, bundle.trajectory.dt, bundle.scenario.simulation.seed)
    if args.plots:
        from src.services.plot_service import PlotService

        written.append(PlotService.study_figure(summaries, bundle.trajectory, out_dir, f"study_{args.mode}.png"))

    payload = {
        "out_dir": str(out_dir),
        "files": [p.name for p in written],
        "studies": [ResultsService.summary_dict(s) for s in summaries],
    }
    text = "\n\n".join(ReportBuilder.statistics(s, ResultsService.summary_tag(s, summaries)) for s in summaries)
    output(args, payload, text)
    return EXIT_FAILURE if any(s.failures for s in summaries) else EXIT_OK
