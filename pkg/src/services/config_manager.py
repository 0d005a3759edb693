import copy
from typing import Any, Dict, Optional

from src.services.logger import get_logger

logger = get_logger(__name__)


class ConfigManager:
    """
    Hierarchical algorithm-hyperparameter defaults with dot-notation access.

    Every tunable number the planner, estimator and simulator use has exactly one
    default here. Scenario files may override any subtree; the merged result is
    what gets embedded in a result bundle, so a bundle never depends on these
    defaults staying the same.

    Features:
        - Dot-notation lookups ('solver.tol_cost')
        - Deep merge of partial scenario sections over defaults
        - Values returned as copies, defaults are never mutated by callers

    Usage:
        >>> ConfigManager.get("al.penalty_scaling")
        10.0
        >>> ConfigManager.merge("solver", {"max_outer_iterations": 5})["tol_con"]
        0.001
    """

    _defaults: Dict[str, Any] = {
        "plant": {
            "min_separation": 0.05,         # m, dipole model validity floor
        },
        "horizon": {
            "steps": 300,
            "dt": 0.02,                     # s
        },
        "kinematics": {
            "condition_sentinel": 1e12,
            "singular_floor": 1e-12,        # relative to sigma_max
        },
        "cost": {
            "position_weight": [10.0, 10.0, 10.0],
            "velocity_weight": [1.0, 1.0, 1.0],
            "joint_weight": [1e-3] * 7,
            "input_weight": [1e-2] * 7,
            "terminal_position_weight": [1e4, 1e4, 1e4],
            "terminal_velocity_weight": [1e3, 1e3, 1e3],
            "terminal_joint_weight": [0.0] * 7,
            "manipulability_weight": 1e-3,
        },
        "solver": {
            "tol_cost": 1e-6,               # relative
            "tol_con": 1e-3,                # native constraint units
            "max_inner_iterations": 100,
            "max_outer_iterations": 30,
            "regularization_init": 1e-6,
            "regularization_min": 0.0,
            "regularization_max": 1e6,
            "regularization_increase": 10.0,
            "regularization_decrease": 2.0,
            "line_search_steps": 11,        # alpha in {1, 1/2, ..., 2^-10}
            "fd_step": 1e-6,
        },
        "al": {
            "penalty_init": 1.0,
            "penalty_scaling": 10.0,
            "penalty_max": 1e8,
            "multiplier_init": 0.0,
        },
        "estimation": {
            "process_model": "magnetic",    # or "constant_velocity"
            "process_noise_position": 1e-10,  # m^2 per step
            "process_noise_velocity": 1e-8,   # (m/s)^2 per step
            "prior_velocity_variance": 1e-6,  # (m/s)^2
            "measurement_variance_floor": 1e-12,  # m^2, used when measurements are noiseless
        },
        "simulation": {
            "position_noise_variance": 1e-2,
            "variance_unit": "cm2",
            "initial_position_variance": None,  # None: same as position_noise_variance
            "process_noise_variance": 0.0,      # (m/s)^2 per step on IPM velocity
            "measurement_decimation": 1,
            "seed": 0,
        },
        "equilibrium": {
            "restarts": 32,
            "force_tolerance": 1e-6,        # N
            "direction_tolerance": 1e-4,    # rad
            "seed": 7,
        },
    }

    @classmethod
    def get(cls, key: str, default: Any = None) -> Any:
        """
        Get a default value by hierarchical key.

        Args:
            key: Configuration key (dot-separated for nested values)
            default: Value returned when the key does not exist

        Returns:
            A copy of the configured value, or default

        Example:
            >>> ConfigManager.get("solver.max_inner_iterations")
            100
        """
        value: Any = cls._defaults
        for k in key.split("."):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return copy.deepcopy(value)

    @classmethod
    def section(cls, name: str) -> Dict[str, Any]:
        """Return a deep copy of one top-level defaults section."""
        value = cls.get(name)
        if not isinstance(value, dict):
            raise KeyError(f"Unknown configuration section: {name}")
        return value

    @classmethod
    def merge(cls, name: str, overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
        """
        Resolve a partial section against its defaults.

        Unknown keys are kept; schema validation rejects them later by field name.

        Args:
            name: Top-level section name
            overrides: Partial section from a scenario file (may be None)

        Returns:
            Fully resolved section
        """
        resolved = cls.section(name)
        if overrides:
            cls._merge_nested(resolved, overrides)
            logger.debug(f"ConfigManager resolved section '{name}' with overrides {sorted(overrides)}")
        return resolved

    @classmethod
    def _merge_nested(cls, base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
        """Recursively merge overrides into base in place."""
        for key, value in overrides.items():
            if isinstance(value, dict) and isinstance(base.get(key), dict):
                cls._merge_nested(base[key], value)
            else:
                base[key] = copy.deepcopy(value)
        return base
