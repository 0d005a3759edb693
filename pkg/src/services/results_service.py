import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt
import yaml

from src.config import Config
from src.exceptions import BundleError, MagcapException, SeparationError
from src.models.bundle import ResultBundle
from src.models.kinematics import EpmPose
from src.models.plant import PlantModel
from src.models.runtime import RunLog, StudySummary
from src.models.scenario import Scenario
from src.models.trajectory import GainSchedule, SolverReport, Trajectory, finite_or_none, none_to_nan
from src.services.constraint_service import ConstraintLayout, ConstraintService
from src.services.kinematics_service import KinematicsService
from src.services.logger import get_logger
from src.services.magnetics_service import MagneticsService
from src.services.plant_service import P, Q, V, PlantService
from src.services.scenario_service import ScenarioService
from src.utils.numerics import unit

logger = get_logger(__name__)

DoubleArray = npt.NDArray[np.float64]

TRAJECTORY_FILE = "trajectory.csv"
GAINS_FILE = "gains.bin"
GAINS_INDEX_FILE = "gains_index.json"
REPORT_FILE = "solver_report.json"
SCENARIO_FILE = "scenario.resolved.yaml"
MANIFEST_FILE = "manifest.json"

_AXES = ("x", "y", "z")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def atomic_write(path: Path, payload: Union[str, bytes]) -> None:
    """Write a file through a sibling temp file and os.replace, so readers never see a partial file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.encode("utf-8") if isinstance(payload, str) else payload
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[str]], schema_version: int) -> str:
    buffer = io.StringIO()
    buffer.write(f"# schema_version={schema_version}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _json_text(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=False) + "\n"


class ResultsService:
    """
    Result bundle persistence.

    A bundle directory holds the resolved scenario, the trajectory CSV, the gain
    schedule (flat little-endian float64 plus a JSON index), the solver report
    and, after simulations, statistics/band/run CSVs. Nothing written depends on
    wall-clock time, so two invocations with the same seed produce identical files.

    Usage:
        >>> ResultsService.emit_results(bundle, Path("out/sim-obstacle"))
        >>> bundle = ResultsService.load_bundle(Path("out/sim-obstacle"))
    """

    TRAJECTORY_COLUMNS: List[str] = (
        ["t"]
        + [f"p_{a}" for a in _AXES]
        + [f"v_{a}" for a in _AXES]
        + [f"q{i}" for i in range(1, 8)]
        + [f"u{i}" for i in range(1, 8)]
        + [f"pE_{a}" for a in _AXES]
        + ["kappa", "orientation_error_deg"]
    )

    @staticmethod
    def trajectory_diagnostics(trajectory: Trajectory, scenario: Scenario, model: Optional[PlantModel] = None) -> Dict[str, DoubleArray]:
        """
        EPM positions, condition numbers and field-direction errors along a trajectory.

        orientation_error_deg is NaN everywhere when the scenario has no orientation
        target, and at any step whose separation is below the model floor.
        """
        model = model or PlantModel.from_scenario(scenario)
        q = trajectory.states[:, Q]
        pose = PlantService.epm_pose(model, q)
        kappa = KinematicsService.condition_number(KinematicsService.geometric_jacobian(model.chain, q))

        error = np.full(q.shape[0], np.nan)
        target = scenario.constraints.orientation_target
        if target is not None:
            r_hat = unit(target)
            axis = PlantService.epm_dipole_direction(model, pose)
            for k in range(q.shape[0]):
                try:
                    sep = PlantService.separation(model, trajectory.states[k, P], EpmPose(position=pose.position[k], rotation=pose.rotation[k]))
                except SeparationError:
                    continue
                b_hat = MagneticsService.field_direction(sep, axis[k])
                error[k] = np.degrees(np.arccos(np.clip(b_hat @ r_hat, -1.0, 1.0)))
        return {"epm_position": pose.position, "kappa": kappa, "orientation_error_deg": error}

    @staticmethod
    def trajectory_csv(trajectory: Trajectory, scenario: Scenario) -> str:
        """N + 1 rows; the input cells of the last row are empty."""
        diagnostics = ResultsService.trajectory_diagnostics(trajectory, scenario)
        rows = []
        for k, t in enumerate(trajectory.times):
            x = trajectory.states[k]
            inputs = [_fmt(v) for v in trajectory.inputs[k]] if k < trajectory.horizon else [""] * trajectory.inputs.shape[1]
            error = diagnostics["orientation_error_deg"][k]
            rows.append(
                [_fmt(t)]
                + [_fmt(v) for v in x]
                + inputs
                + [_fmt(v) for v in diagnostics["epm_position"][k]]
                + [_fmt(diagnostics["kappa"][k]), "" if np.isnan(error) else _fmt(error)]
            )
        return _csv_text(ResultsService.TRAJECTORY_COLUMNS, rows, Config.CSV_SCHEMA_VERSION)

    @staticmethod
    def gains_index(gains: GainSchedule) -> Dict[str, Any]:
        horizon, control_dim, state_dim = gains.K.shape
        return {
            "schema_version": Config.GAINS_SCHEMA_VERSION,
            "file": GAINS_FILE,
            "dtype": "float64",
            "byte_order": "little",
            "order": "C",
            "horizon": horizon,
            "control_dim": control_dim,
            "state_dim": state_dim,
            "arrays": [
                {"name": "K", "shape": [horizon, control_dim, state_dim], "offset_bytes": 0},
                {"name": "d", "shape": [horizon, control_dim], "offset_bytes": 8 * gains.K.size},
            ],
        }

    @staticmethod
    def gains_bytes(gains: GainSchedule) -> bytes:
        return np.ascontiguousarray(gains.K, dtype="<f8").tobytes() + np.ascontiguousarray(gains.d, dtype="<f8").tobytes()

    @staticmethod
    def statistics_csv(summary: StudySummary) -> str:
        """The six terminal-statistics rows, one column per axis."""
        rows = [[label] + [_fmt(v) for v in values] for label, *values in summary.table.rows()]
        return _csv_text(["statistic", "x", "y", "z"], rows, Config.CSV_SCHEMA_VERSION)

    @staticmethod
    def bands_csv(summary: StudySummary, dt: float) -> str:
        """Per-timestep mean and sample std of the IPM position over completed runs (m)."""
        header = ["t"] + [f"mean_{a}" for a in _AXES] + [f"std_{a}" for a in _AXES]
        rows = [
            [_fmt(k * dt)] + [_fmt(v) for v in mean] + [_fmt(v) for v in std]
            for k, (mean, std) in enumerate(zip(summary.position_mean, summary.position_std))
        ]
        return _csv_text(header, rows, Config.CSV_SCHEMA_VERSION)

    @staticmethod
    def runs_csv(logs: Sequence[RunLog]) -> str:
        """Long format: one row per (run, timestep) with true state, estimate, measurement and input."""
        header = (
            ["run", "k", "t"]
            + [f"p_{a}" for a in _AXES] + [f"v_{a}" for a in _AXES]
            + [f"est_p_{a}" for a in _AXES] + [f"est_v_{a}" for a in _AXES]
            + [f"z_{a}" for a in _AXES]
            + [f"u{i}" for i in range(1, 8)]
        )
        rows = []
        for log in logs:
            for k, t in enumerate(log.times):
                z = log.measurements[k]
                inputs = log.applied_inputs[k] if k < len(log.applied_inputs) else None
                rows.append(
                    [str(log.run_index), str(k), _fmt(t)]
                    + [_fmt(v) for v in log.true_states[k, P]] + [_fmt(v) for v in log.true_states[k, V]]
                    + [_fmt(v) for v in log.estimates[k]]
                    + ["" if np.isnan(v) else _fmt(v) for v in z]
                    + ([_fmt(v) for v in inputs] if inputs is not None else [""] * 7)
                )
        return _csv_text(header, rows, Config.CSV_SCHEMA_VERSION)

    @staticmethod
    def summary_tag(summary: StudySummary, summaries: Sequence[StudySummary]) -> str:
        variances = {s.noise_variance for s in summaries}
        return summary.mode if len(variances) <= 1 else f"{summary.mode}_var{summary.noise_variance:g}"

    @staticmethod
    def summary_dict(summary: StudySummary) -> Dict[str, Any]:
        return {
            "mode": summary.mode,
            "noise_variance": summary.noise_variance,
            "variance_unit": summary.variance_unit,
            "runs": summary.runs,
            "failures": summary.failures,
            "failed_runs": summary.failed_runs,
            "terminal_position_error_cm": finite_or_none(100.0 * summary.terminal_position_error),
            "statistics": summary.table.to_dict(),
        }

    @staticmethod
    def emit_results(bundle: ResultBundle, out_dir: Union[str, Path]) -> List[Path]:
        """
        Write every member of the bundle into out_dir.

        Returns:
            Paths written, in write order; the manifest comes last

        Raises:
            BundleError: If the directory cannot be written
        """
        out_dir = Path(out_dir)
        written: List[Path] = []

        def emit(name: str, payload: Union[str, bytes]) -> None:
            path = out_dir / name
            atomic_write(path, payload)
            written.append(path)

        try:
            emit(SCENARIO_FILE, ScenarioService.dump_resolved(bundle.scenario))
            emit(TRAJECTORY_FILE, ResultsService.trajectory_csv(bundle.trajectory, bundle.scenario))
            emit(GAINS_FILE, ResultsService.gains_bytes(bundle.gains))
            emit(GAINS_INDEX_FILE, _json_text(ResultsService.gains_index(bundle.gains)))
            emit(REPORT_FILE, _json_text(bundle.report.to_dict()))

            manifest = {
                "tool": Config.TOOL_NAME,
                "tool_version": bundle.tool_version,
                "seed": bundle.seed,
                "csv_schema_version": Config.CSV_SCHEMA_VERSION,
                "gains_schema_version": Config.GAINS_SCHEMA_VERSION,
                "scenario": bundle.scenario.name,
                "status": bundle.report.status.value,
                "horizon": bundle.trajectory.horizon,
                "dt": bundle.trajectory.dt,
                "cost": finite_or_none(bundle.trajectory.cost),
                "max_violation": finite_or_none(bundle.trajectory.max_violation),
                "studies": [],
                "files": [path.name for path in written],
            }
            emit(MANIFEST_FILE, _json_text(manifest))
        except OSError as e:
            raise BundleError(str(out_dir), f"cannot write bundle: {e}") from e

        if bundle.summaries:
            written.extend(ResultsService.emit_study(bundle.summaries, out_dir, bundle.trajectory.dt, bundle.seed))
        logger.info(f"Wrote {len(written)} files to {out_dir}")
        return written

    @staticmethod
    def emit_study(summaries: Sequence[StudySummary], out_dir: Union[str, Path], dt: float, seed: int) -> List[Path]:
        """
        Write the statistics, band and (kept) run files of a study into an existing
        bundle directory and record the study in its manifest. A study with the same
        tag replaces the earlier one.
        """
        out_dir = Path(out_dir)
        manifest = ResultsService.load_manifest(out_dir)
        written: List[Path] = []
        entries = []
        try:
            for summary in summaries:
                tag = ResultsService.summary_tag(summary, summaries)
                files = {
                    f"statistics_{tag}.csv": ResultsService.statistics_csv(summary),
                    f"bands_{tag}.csv": ResultsService.bands_csv(summary, dt),
                }
                if summary.logs:
                    files[f"runs_{tag}.csv"] = ResultsService.runs_csv(summary.logs)
                for name, payload in files.items():
                    atomic_write(out_dir / name, payload)
                    written.append(out_dir / name)
                entries.append({"tag": tag, "seed": seed, **ResultsService.summary_dict(summary)})

            tags = {entry["tag"] for entry in entries}
            manifest["studies"] = [s for s in manifest.get("studies", []) if s["tag"] not in tags] + entries
            known = manifest.get("files", [])
            manifest["files"] = known + [path.name for path in written if path.name not in known]
            atomic_write(out_dir / MANIFEST_FILE, _json_text(manifest))
        except OSError as e:
            raise BundleError(str(out_dir), f"cannot write study: {e}") from e
        return written

    @staticmethod
    def _read(path: Path) -> str:
        if not path.is_file():
            raise BundleError(str(path), "missing file")
        return path.read_text(encoding="utf-8")

    @staticmethod
    def _read_trajectory(path: Path, dt: float) -> Trajectory:
        lines = [line for line in ResultsService._read(path).splitlines() if not line.startswith("#")]
        reader = csv.reader(lines)
        header = next(reader, None)
        if header != ResultsService.TRAJECTORY_COLUMNS:
            raise BundleError(str(path), "unexpected trajectory columns")
        rows = list(reader)
        if len(rows) < 2:
            raise BundleError(str(path), "trajectory needs at least two rows")
        try:
            states = np.array([[float(v) for v in row[1:14]] for row in rows])
            inputs = np.array([[float(v) for v in row[14:21]] for row in rows[:-1]])
        except (ValueError, IndexError) as e:
            raise BundleError(str(path), f"corrupt trajectory row: {e}") from e
        return Trajectory(states=states, inputs=inputs, dt=dt)

    @staticmethod
    def _read_gains(directory: Path) -> GainSchedule:
        index = json.loads(ResultsService._read(directory / GAINS_INDEX_FILE))
        path = directory / GAINS_FILE
        if not path.is_file():
            raise BundleError(str(path), "missing file")
        if index.get("schema_version") != Config.GAINS_SCHEMA_VERSION:
            raise BundleError(str(path), f"unsupported gains schema {index.get('schema_version')}")
        flat = np.frombuffer(path.read_bytes(), dtype="<f8")
        shapes = {array["name"]: tuple(array["shape"]) for array in index["arrays"]}
        k_size = int(np.prod(shapes["K"]))
        d_size = int(np.prod(shapes["d"]))
        if flat.size != k_size + d_size:
            raise BundleError(str(path), f"expected {k_size + d_size} values, found {flat.size}")
        return GainSchedule(K=flat[:k_size].reshape(shapes["K"]).copy(), d=flat[k_size:].reshape(shapes["d"]).copy())

    @staticmethod
    def load_bundle(directory: Union[str, Path]) -> ResultBundle:
        """
        Re-load the plan part of a bundle (scenario, trajectory, gains, report, seed).

        Raises:
            BundleError: If a file is missing, corrupt, or the members disagree
        """
        directory = Path(directory)
        if not directory.is_dir():
            raise BundleError(str(directory), "not a directory")
        try:
            manifest = json.loads(ResultsService._read(directory / MANIFEST_FILE))
            report = SolverReport.from_dict(json.loads(ResultsService._read(directory / REPORT_FILE)))
            scenario_data = yaml.safe_load(ResultsService._read(directory / SCENARIO_FILE))
        except (json.JSONDecodeError, yaml.YAMLError, KeyError, ValueError) as e:
            raise BundleError(str(directory), f"corrupt bundle metadata: {e}") from e
        try:
            scenario = ScenarioService.parse_scenario(scenario_data, resolve_equilibrium=False)
        except MagcapException as e:
            raise BundleError(str(directory / SCENARIO_FILE), e.message) from e

        trajectory = ResultsService._read_trajectory(directory / TRAJECTORY_FILE, float(manifest["dt"]))
        trajectory = Trajectory(
            states=trajectory.states,
            inputs=trajectory.inputs,
            dt=trajectory.dt,
            cost=none_to_nan(manifest.get("cost")),
            max_violation=none_to_nan(manifest.get("max_violation")),
        )
        gains = ResultsService._read_gains(directory)
        if gains.horizon != trajectory.horizon:
            raise BundleError(str(directory), f"gains cover {gains.horizon} steps, trajectory {trajectory.horizon}")
        logger.debug(f"Loaded bundle {directory} (seed {manifest['seed']})")
        return ResultBundle(
            scenario=scenario,
            trajectory=trajectory,
            gains=gains,
            report=report,
            seed=int(manifest["seed"]),
            tool_version=str(manifest.get("tool_version", Config.TOOL_VERSION)),
        )

    @staticmethod
    def load_manifest(directory: Union[str, Path]) -> Dict[str, Any]:
        try:
            return json.loads(ResultsService._read(Path(directory) / MANIFEST_FILE))
        except json.JSONDecodeError as e:
            raise BundleError(str(directory), f"corrupt manifest: {e}") from e

    @staticmethod
    def constraint_margins(trajectory: Trajectory, scenario: Scenario) -> Dict[str, Any]:
        """
        Constraint health of a plan: worst violation per row block, obstacle
        clearance (m), peak |v_I| per axis (m/s), lowest EPM height (m) and the κ range.
        """
        model = PlantModel.from_scenario(scenario)
        cs = scenario.constraints
        layout = ConstraintLayout.from_constraints(cs)
        inputs = np.vstack([trajectory.inputs, np.zeros((1, trajectory.inputs.shape[1]))])
        g = ConstraintService.evaluate_constraints(trajectory.states, inputs, cs, model, layout)
        violation = ConstraintService.violation(g, layout.equality, layout.mask(trajectory.horizon))
        per_block = {
            name: float(violation[:, block].max()) for name, block in layout.blocks.items() if block.stop > block.start
        }

        positions = trajectory.states[:, P]
        clearances = [
            float(np.min(np.linalg.norm(positions - np.asarray(o.center), axis=-1) - o.radius - o.margin))
            for o in cs.obstacles
        ]
        diagnostics = ResultsService.trajectory_diagnostics(trajectory, scenario, model)
        return {
            "max_violation": float(violation.max()) if violation.size else 0.0,
            "violation_by_block": per_block,
            "min_obstacle_clearance": min(clearances) if clearances else None,
            "max_speed": [float(v) for v in np.abs(trajectory.states[:, V]).max(axis=0)],
            "min_epm_height": float(diagnostics["epm_position"][:, 2].min()),
            "kappa_range": [float(diagnostics["kappa"].min()), float(diagnostics["kappa"].max())],
            "max_orientation_error_deg": (
                float(np.nanmax(diagnostics["orientation_error_deg"]))
                if np.any(np.isfinite(diagnostics["orientation_error_deg"])) else None
            ),
            "max_abs_u7": float(np.abs(trajectory.inputs[:, 6]).max()) if trajectory.horizon else 0.0,
        }
