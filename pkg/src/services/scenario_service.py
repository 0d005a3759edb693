import copy
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt
import yaml
from pydantic import ValidationError
from scipy.optimize import least_squares

from src.exceptions import EquilibriumError, ScenarioParseError, ScenarioValidationError, SeparationError
from src.models.plant import PlantModel
from src.models.scenario import Scenario
from src.services.config_manager import ConfigManager
from src.services.logger import get_logger
from src.services.magnetics_service import MagneticsService
from src.services.plant_service import PlantService
from src.utils.numerics import unit
from src.utils.seeding import Stream, stream_generator

logger = get_logger(__name__)

DoubleArray = npt.NDArray[np.float64]

LENGTH_SCALE = {"m": 1.0, "cm": 1e-2, "mm": 1e-3}
MASS_SCALE = {"kg": 1.0, "g": 1e-3}

# Scenario sections resolved against ConfigManager defaults before validation.
SETTINGS_SECTIONS = ("cost", "horizon", "solver", "al", "estimation", "simulation", "equilibrium")

# Dotted paths of length-valued fields; "*" walks every list element.
LENGTH_FIELDS = (
    "dh_table.rows.*.a",
    "dh_table.rows.*.d",
    "workspace.lower",
    "workspace.upper",
    "constraints.ipm_velocity_limits.lower",
    "constraints.ipm_velocity_limits.upper",
    "constraints.epm_min_position",
    "constraints.obstacles.*.center",
    "constraints.obstacles.*.radius",
    "constraints.obstacles.*.margin",
    "initial_state.p_I",
    "initial_state.v_I",
    "goal.p_I",
    "goal.v_I",
    "min_separation",
)
MASS_FIELDS = ("fluid.ipm_mass",)

_FORCE_SCALE = 1e3  # N -> mN in the equilibrium residual


def _scale(value: Any, factor: float) -> Any:
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        return [_scale(v, factor) for v in value]
    return float(value) * factor


def _scale_path(node: Any, parts: List[str], factor: float) -> None:
    if node is None:
        return
    head, rest = parts[0], parts[1:]
    if head == "*":
        for item in node if isinstance(node, list) else []:
            _scale_path(item, rest, factor)
        return
    if not isinstance(node, dict) or head not in node:
        return
    if rest:
        _scale_path(node[head], rest, factor)
    else:
        node[head] = _scale(node[head], factor)


def _field_path(loc: Tuple[Any, ...]) -> str:
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path or "<root>"


class ScenarioService:
    """
    Scenario ingestion, unit resolution, semantic validation and equilibrium seeding.

    Scenario files are YAML. Lengths may be declared in m, cm or mm and masses in
    kg or g through the top-level units block; forces, dipole moments and the
    drag coefficient are always SI. Everything is SI after loading.

    Usage:
        >>> scenario = ScenarioService.load_scenario("scenarios/sim-obstacle.yaml")
        >>> scenario.epm.dipole_magnitude
        51.25
    """

    @staticmethod
    def load_scenario(path: Union[str, Path], resolve_equilibrium: bool = True) -> Scenario:
        """
        Read, resolve and validate a scenario file.

        Args:
            path: YAML scenario file
            resolve_equilibrium: Compute initial_state.q with equilibrium_seed when omitted

        Raises:
            ScenarioParseError: File missing or not parseable, with 1-based line/column
            ScenarioValidationError: Schema or semantic violation naming the field
            EquilibriumError: No equilibrium configuration exists within joint limits
        """
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ScenarioParseError(str(path), None, None, str(e)) from e
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            problem = getattr(e, "problem", None) or str(e)
            line = mark.line + 1 if mark is not None else None
            column = mark.column + 1 if mark is not None else None
            raise ScenarioParseError(str(path), line, column, problem) from e
        if not isinstance(data, dict):
            raise ScenarioParseError(str(path), 1, 1, "top level must be a mapping")
        logger.debug(f"Loaded scenario file {path}")
        return ScenarioService.parse_scenario(data, resolve_equilibrium)

    @staticmethod
    def parse_scenario(data: Dict[str, Any], resolve_equilibrium: bool = True) -> Scenario:
        """Resolve units and defaults of an already-parsed scenario tree, then validate it."""
        resolved = ScenarioService.resolve_units(data)
        for section in SETTINGS_SECTIONS:
            overrides = resolved.get(section)
            if overrides is not None and not isinstance(overrides, dict):
                raise ScenarioValidationError(section, "must be a mapping")
            resolved[section] = ConfigManager.merge(section, overrides)

        try:
            scenario = Scenario.model_validate(resolved)
        except ValidationError as e:
            first = e.errors()[0]
            message = first["msg"]
            if len(e.errors()) > 1:
                message += f" (and {len(e.errors()) - 1} more)"
            raise ScenarioValidationError(_field_path(tuple(first["loc"])), message) from e

        ScenarioService.validate_semantics(scenario)
        if scenario.initial_state.q is None and resolve_equilibrium:
            scenario = scenario.with_initial_q(ScenarioService.equilibrium_seed(scenario))
        if scenario.initial_state.q is not None:
            ScenarioService.validate_start_configuration(scenario)
        return scenario

    @staticmethod
    def resolve_units(data: Dict[str, Any]) -> Dict[str, Any]:
        """Deep copy of a raw scenario tree converted to m and kg, declaring SI units."""
        resolved = copy.deepcopy(data)
        units = resolved.get("units") or {}
        length = units.get("length", "m") if isinstance(units, dict) else "m"
        mass = units.get("mass", "kg") if isinstance(units, dict) else "kg"
        if length not in LENGTH_SCALE:
            raise ScenarioValidationError("units.length", f"unknown length unit {length!r}, expected one of {sorted(LENGTH_SCALE)}")
        if mass not in MASS_SCALE:
            raise ScenarioValidationError("units.mass", f"unknown mass unit {mass!r}, expected one of {sorted(MASS_SCALE)}")

        if LENGTH_SCALE[length] != 1.0:
            for field in LENGTH_FIELDS:
                _scale_path(resolved, field.split("."), LENGTH_SCALE[length])
            tool = (resolved.get("dh_table") or {}).get("tool_transform")
            if isinstance(tool, list):
                for i in range(min(3, len(tool))):
                    if isinstance(tool[i], list) and len(tool[i]) == 4:
                        tool[i][3] = _scale(tool[i][3], LENGTH_SCALE[length])
        if MASS_SCALE[mass] != 1.0:
            for field in MASS_FIELDS:
                _scale_path(resolved, field.split("."), MASS_SCALE[mass])
        resolved["units"] = {"length": "m", "mass": "kg"}
        return resolved

    @staticmethod
    def validate_semantics(scenario: Scenario) -> None:
        """
        Invariants that span several fields.

        Raises:
            ScenarioValidationError: Naming the field and the violated invariant
        """
        workspace = scenario.workspace
        for name, point in (("initial_state.p_I", scenario.initial_state.p_I), ("goal.p_I", scenario.goal.p_I)):
            if not workspace.contains(point):
                raise ScenarioValidationError(name, f"{list(point)} lies outside the workspace box")

        for i, obstacle in enumerate(scenario.constraints.obstacles):
            field = f"constraints.obstacles[{i}]"
            center = np.asarray(obstacle.center)
            if not workspace.contains(center, pad=obstacle.radius):
                raise ScenarioValidationError(field, "obstacle sphere must lie inside the workspace box")
            clearance = obstacle.radius + obstacle.margin
            for name, point in (("start", scenario.initial_state.p_I), ("goal", scenario.goal.p_I)):
                distance = float(np.linalg.norm(np.asarray(point) - center))
                if not distance > clearance:
                    raise ScenarioValidationError(
                        field, f"{name} lies within radius + margin of the obstacle ({distance:.6g} <= {clearance:.6g} m)"
                    )

        velocity = scenario.constraints.ipm_velocity_limits
        for axis, v in enumerate(scenario.initial_state.v_I):
            if not velocity.lower[axis] <= v <= velocity.upper[axis]:
                raise ScenarioValidationError(f"initial_state.v_I[{axis}]", "initial velocity violates ipm_velocity_limits")

    @staticmethod
    def validate_start_configuration(scenario: Scenario) -> None:
        """Initial joints inside their limits and the initial separation above the floor."""
        q = np.asarray(scenario.initial_state.q, dtype=float)
        limits = scenario.constraints.joint_limits
        for i, (lo, hi, value) in enumerate(zip(limits.lower, limits.upper, q)):
            if not lo <= value <= hi:
                raise ScenarioValidationError(f"initial_state.q[{i}]", f"{value:.6g} outside joint limits [{lo}, {hi}]")
        model = PlantModel.from_scenario(scenario)
        pose = PlantService.epm_pose(model, q)
        try:
            PlantService.separation(model, scenario.initial_state.p_I, pose)
        except SeparationError as e:
            raise ScenarioValidationError("initial_state", e.message) from e

    @staticmethod
    def _equilibrium_residual(
        q: DoubleArray,
        model: PlantModel,
        p_I: DoubleArray,
        target: Optional[DoubleArray],
        floor: List[Tuple[int, float]],
    ) -> DoubleArray:
        pose = PlantService.epm_pose(model, q)
        size = 3 + (3 if target is not None else 0) + len(floor)
        try:
            force = PlantService.magnetic_force(model, p_I, pose) + model.fluid.weight_vector
            residual = [_FORCE_SCALE * force]
            if target is not None:
                sep = PlantService.separation(model, p_I, pose)
                residual.append(MagneticsService.field_direction(sep, PlantService.epm_dipole_direction(model, pose)) - target)
        except SeparationError:
            return np.full(size, 1e3)
        residual.append(np.array([min(0.0, pose.position[axis] - bound) for axis, bound in floor]) * 10.0)
        return np.concatenate(residual)

    @staticmethod
    def equilibrium_seed(scenario: Scenario, q_guess: Optional[npt.ArrayLike] = None) -> DoubleArray:
        """
        Joint angles holding the IPM still at its initial position.

        Solves aligned_force + f_w = 0 (and b̂ = r̂ when an orientation target is set)
        with bounded least squares inside the joint limits and above the EPM floor.
        The first attempt starts from q_guess (or initial_state.q_guess, or the middle
        of the joint limits); further attempts draw deterministic random starts.
        Each attempt runs a regularized pass towards its start, then an
        unregularized polish.

        Raises:
            EquilibriumError: If no attempt meets the force and direction tolerances
        """
        settings = scenario.equilibrium
        model = PlantModel.from_scenario(scenario)
        p_I = np.asarray(scenario.initial_state.p_I, dtype=float)
        target = None
        if scenario.constraints.orientation_target is not None:
            target = unit(scenario.constraints.orientation_target)
        floor = [(axis, bound) for axis, bound in enumerate(scenario.constraints.epm_min_position) if bound is not None]

        limits = scenario.constraints.joint_limits
        lower, upper = np.asarray(limits.lower, dtype=float), np.asarray(limits.upper, dtype=float)
        margin = 1e-6 * (upper - lower)
        lo, hi = lower + margin, upper - margin

        if q_guess is None:
            q_guess = scenario.initial_state.q_guess
        first = np.clip(np.asarray(q_guess, dtype=float), lo, hi) if q_guess is not None else 0.5 * (lower + upper)
        rng = stream_generator(settings.seed, 0, Stream.EQUILIBRIUM)

        def residual(q: DoubleArray) -> DoubleArray:
            return ScenarioService._equilibrium_residual(q, model, p_I, target, floor)

        best: Optional[Tuple[float, DoubleArray]] = None
        for attempt in range(settings.restarts):
            start = first if attempt == 0 else rng.uniform(lo, hi)
            regularized = least_squares(
                lambda q: np.concatenate([residual(q), 1e-2 * (q - start)]),
                start, bounds=(lo, hi), method="trf", xtol=1e-12, ftol=1e-12, gtol=1e-12,
            )
            polished = least_squares(
                residual, regularized.x, bounds=(lo, hi), method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15,
            )
            q = polished.x
            force_error, direction_error, floor_ok = ScenarioService.equilibrium_errors(scenario, q, model)
            logger.debug(
                f"Equilibrium attempt {attempt}: |f| = {force_error:.3g} N, "
                f"direction error = {direction_error:.3g} rad, floor ok = {floor_ok}"
            )
            if force_error < settings.force_tolerance and direction_error < settings.direction_tolerance and floor_ok:
                logger.info(f"Equilibrium configuration found on attempt {attempt} (|f| = {force_error:.3g} N)")
                return q
            score = force_error + direction_error
            if floor_ok and (best is None or score < best[0]):
                best = (score, q)

        detail = f"best residual {best[0]:.3g} after {settings.restarts} attempts" if best else "every attempt violated the EPM floor or separation"
        raise EquilibriumError(detail)

    @staticmethod
    def equilibrium_errors(scenario: Scenario, q: npt.ArrayLike, model: Optional[PlantModel] = None) -> Tuple[float, float, bool]:
        """(|f_m + f_w| in N, field direction error in rad, EPM floor satisfied) at the initial IPM position."""
        model = model or PlantModel.from_scenario(scenario)
        p_I = np.asarray(scenario.initial_state.p_I, dtype=float)
        pose = PlantService.epm_pose(model, q)
        try:
            force = PlantService.magnetic_force(model, p_I, pose) + model.fluid.weight_vector
            sep = PlantService.separation(model, p_I, pose)
        except SeparationError:
            return float("inf"), float("inf"), False
        direction_error = 0.0
        if scenario.constraints.orientation_target is not None:
            b_hat = MagneticsService.field_direction(sep, PlantService.epm_dipole_direction(model, pose))
            cosine = float(np.clip(b_hat @ unit(scenario.constraints.orientation_target), -1.0, 1.0))
            direction_error = float(np.arccos(cosine))
        floor_ok = all(
            pose.position[axis] >= bound - 1e-9
            for axis, bound in enumerate(scenario.constraints.epm_min_position)
            if bound is not None
        )
        return float(np.linalg.norm(force)), direction_error, floor_ok

    @staticmethod
    def dump_resolved(scenario: Scenario) -> str:
        """YAML text of the resolved scenario in SI units; load_scenario reproduces it exactly."""
        return yaml.safe_dump(scenario.to_si_dict(), sort_keys=False, default_flow_style=None)
