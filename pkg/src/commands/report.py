import argparse
import csv
from pathlib import Path

from src.commands.common import EXIT_OK, output
from src.services.results_service import ResultsService
from src.utils.report_builder import ReportBuilder


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("report", parents=parents, help="summarise a result bundle")
    parser.add_argument("bundle", help="result bundle directory")
    parser.set_defaults(func=run)


def run(args: argparse.Namespace) -> int:
    directory = Path(args.bundle)
    bundle = ResultsService.load_bundle(directory)
    manifest = ResultsService.load_manifest(directory)
    margins = ResultsService.constraint_margins(bundle.trajectory, bundle.scenario)

    blocks = [ReportBuilder.solver(bundle.report, bundle.scenario.name), ReportBuilder.margins(margins)]
    for study in manifest.get("studies", []):
        path = directory / f"statistics_{study['tag']}.csv"
        if not path.is_file():
            continue
        rows = [row for row in csv.reader(line for line in path.read_text(encoding="utf-8").splitlines() if not line.startswith("#"))][1:]
        title = f"{study['tag']}: {study['runs'] - study['failures']}/{study['runs']} runs, variance {study['noise_variance']:g} {study['variance_unit']}"
        blocks.append(ReportBuilder.statistics_rows(rows, title))

    payload = {
        "scenario": bundle.scenario.name,
        "seed": bundle.seed,
        "tool_version": bundle.tool_version,
        "report": bundle.report.to_dict(),
        "margins": margins,
        "studies": manifest.get("studies", []),
    }
    output(args, payload, "\n\n".join(blocks))
    return EXIT_OK
