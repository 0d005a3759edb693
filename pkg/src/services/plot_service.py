import io
from pathlib import Path
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.models.runtime import StudySummary  # noqa: E402
from src.models.scenario import Scenario  # noqa: E402
from src.models.trajectory import Trajectory  # noqa: E402
from src.services.logger import get_logger  # noqa: E402
from src.services.plant_service import P, Q, V  # noqa: E402
from src.services.results_service import ResultsService, atomic_write  # noqa: E402

logger = get_logger(__name__)

CM = 100.0
_AXES = ("x", "y", "z")
_COLORS = ("tab:red", "tab:green", "tab:blue")


def _save(fig, path: Path) -> Path:
    buffer = io.BytesIO()
    # Fixed metadata keeps repeated renders byte-identical.
    fig.savefig(buffer, format="png", dpi=150, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buffer.getvalue())
    return path


class PlotService:
    """
    Static figures of plans and Monte Carlo studies (PNG, Agg backend).

    Numerical CSVs stay the authoritative artifacts; figures only display them.
    """

    @staticmethod
    def plan_figures(trajectory: Trajectory, scenario: Scenario, out_dir: Path) -> List[Path]:
        """IPM position and velocity, EPM position, joint angles, κ and orientation error over time."""
        out_dir = Path(out_dir)
        t = trajectory.times
        diagnostics = ResultsService.trajectory_diagnostics(trajectory, scenario)
        written = []

        fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
        for i, (axis, color) in enumerate(zip(_AXES, _COLORS)):
            axes[0].plot(t, CM * trajectory.states[:, P][:, i], color=color, label=f"p_{axis}")
            axes[0].axhline(CM * scenario.goal.p_I[i], color=color, linestyle=":", linewidth=0.8)
            axes[1].plot(t, CM * trajectory.states[:, V][:, i], color=color, label=f"v_{axis}")
        limits = scenario.constraints.ipm_velocity_limits
        for bound in (*limits.lower, *limits.upper):
            if abs(bound) < 10.0:
                axes[1].axhline(CM * bound, color="gray", linestyle="--", linewidth=0.6)
        axes[0].set_ylabel("IPM position [cm]")
        axes[1].set_ylabel("IPM velocity [cm/s]")
        axes[1].set_xlabel("time [s]")
        for ax in axes:
            ax.legend(loc="best", fontsize="small")
            ax.grid(alpha=0.3)
        written.append(_save(fig, out_dir / "ipm_state.png"))

        fig, axes = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
        for i, (axis, color) in enumerate(zip(_AXES, _COLORS)):
            axes[0].plot(t, CM * diagnostics["epm_position"][:, i], color=color, label=f"pE_{axis}")
        for j in range(trajectory.states[:, Q].shape[1]):
            axes[1].plot(t, trajectory.states[:, Q][:, j], label=f"q{j + 1}")
        axes[0].set_ylabel("EPM position [cm]")
        axes[1].set_ylabel("joint angle [rad]")
        axes[1].set_xlabel("time [s]")
        axes[0].legend(loc="best", fontsize="small")
        axes[1].legend(loc="best", fontsize="small", ncol=4)
        for ax in axes:
            ax.grid(alpha=0.3)
        written.append(_save(fig, out_dir / "arm_state.png"))

        fig, axes = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
        axes[0].semilogy(t, diagnostics["kappa"], color="black")
        axes[0].set_ylabel("condition number κ")
        axes[1].plot(t, diagnostics["orientation_error_deg"], color="tab:purple")
        axes[1].set_ylabel("field direction error [deg]")
        axes[1].set_xlabel("time [s]")
        for ax in axes:
            ax.grid(alpha=0.3)
        written.append(_save(fig, out_dir / "diagnostics.png"))

        fig, ax = plt.subplots(figsize=(6, 6))
        ax.plot(CM * trajectory.states[:, 0], CM * trajectory.states[:, 1], color="black", label="IPM")
        for obstacle in scenario.constraints.obstacles:
            center = CM * np.asarray(obstacle.center)
            ax.add_patch(plt.Circle(center[:2], CM * obstacle.radius, color="tab:orange", alpha=0.5))
            ax.add_patch(plt.Circle(center[:2], CM * (obstacle.radius + obstacle.margin), fill=False, linestyle="--"))
        ax.scatter(*(CM * np.asarray(scenario.initial_state.p_I[:2])), marker="o", label="start")
        ax.scatter(*(CM * np.asarray(scenario.goal.p_I[:2])), marker="*", s=120, label="goal")
        ax.set_aspect("equal")
        ax.set_xlabel("x [cm]")
        ax.set_ylabel("y [cm]")
        ax.legend(loc="best", fontsize="small")
        ax.grid(alpha=0.3)
        written.append(_save(fig, out_dir / "ipm_path_xy.png"))

        logger.debug(f"Wrote {len(written)} plan figures to {out_dir}")
        return written

    @staticmethod
    def study_figure(
        summaries: Sequence[StudySummary],
        trajectory: Trajectory,
        out_dir: Path,
        name: Optional[str] = None,
    ) -> Path:
        """Per-axis mean ± std bands of every study cell against the planned IPM position."""
        t = trajectory.times
        fig, axes = plt.subplots(3, 1, figsize=(8, 8), sharex=True)
        for i, axis in enumerate(_AXES):
            ax = axes[i]
            ax.plot(t, CM * trajectory.states[:, i], color="black", linestyle="--", label="plan")
            for summary in summaries:
                tag = ResultsService.summary_tag(summary, summaries)
                steps = summary.position_mean.shape[0]
                mean = CM * summary.position_mean[:, i]
                std = CM * summary.position_std[:, i]
                line, = ax.plot(t[:steps], mean, label=f"{tag} ({summary.successes}/{summary.runs})")
                ax.fill_between(t[:steps], mean - std, mean + std, color=line.get_color(), alpha=0.25)
            ax.set_ylabel(f"p_{axis} [cm]")
            ax.grid(alpha=0.3)
        axes[0].legend(loc="best", fontsize="small")
        axes[-1].set_xlabel("time [s]")
        return _save(fig, Path(out_dir) / (name or "study_bands.png"))
