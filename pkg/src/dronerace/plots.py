"""Static SVG figures: race time histories, 3D trajectories and progress comparisons."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import PAIRINGS, ProgressSeries, RaceLog, extract_progress  # noqa: E402
from .paths import ParametricPath  # noqa: E402

# fixed ids and no timestamp so identical data renders identical files
plt.rcParams["svg.hashsalt"] = "dronerace"
_SVG_META = {"Date": None, "Creator": None}

_REAR = "tab:blue"
_FRONT = "tab:red"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def _mark_overtake(ax, t_ov):
    if t_ov is not None:
        ax.axvline(t_ov, color="k", linestyle="--", linewidth=0.8)


def plot_time_history(log: RaceLog, path, t_ov: float | None = None) -> Path:
    """Positions, path parameters and thrusts of both drones over time."""
    if t_ov is None and len(log):
        t_ov = extract_progress(log).t_ov
    fig, axes = plt.subplots(5, 1, figsize=(7, 10), sharex=True)
    rear = f"rear ({log.rear})"
    front = f"front ({log.front})"
    for i, (ax, name) in enumerate(zip(axes[:3], "xyz")):
        ax.plot(log.t, log.rear_state[:, i], color=_REAR, label=rear)
        ax.plot(log.t, log.front_state[:, i], color=_FRONT, label=front)
        ax.set_ylabel(f"{name} [m]")
    axes[3].plot(log.t, log.rear_state[:, 13], color=_REAR, label=rear)
    axes[3].plot(log.t, log.front_state[:, 13], color=_FRONT, label=front)
    axes[3].set_ylabel("theta")
    axes[4].plot(log.t, log.rear_input, color=_REAR, linewidth=0.6)
    axes[4].plot(log.t, log.front_input, color=_FRONT, linewidth=0.6)
    axes[4].set_ylabel("thrust [N]")
    axes[4].set_xlabel("t [s]")
    for ax in axes:
        _mark_overtake(ax, t_ov)
    axes[0].legend(loc="upper right")
    axes[0].set_title(f"Race({log.front},{log.rear})")
    fig.tight_layout()
    return _save(fig, path)


def plot_trajectory_3d(log: RaceLog, course: ParametricPath, path) -> Path:
    """Both flown trajectories over the reference path."""
    fig = plt.figure(figsize=(7, 6))
    ax = fig.add_subplot(projection="3d")
    lo = min(log.rear_state[:, 13].min(), log.front_state[:, 13].min()) if len(log) else 0.0
    hi = max(log.rear_state[:, 13].max(), log.front_state[:, 13].max()) if len(log) else 1.0
    ref = course.position_grid(np.linspace(lo, hi, 2000))
    ax.plot(*ref.T, color="0.6", linewidth=0.8, label="path")
    ax.plot(*log.rear_state[:, 0:3].T, color=_REAR, label=f"rear ({log.rear})")
    ax.plot(*log.front_state[:, 0:3].T, color=_FRONT, label=f"front ({log.front})")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_zlabel("z [m]")
    ax.legend(loc="upper left")
    ax.set_title(f"Race({log.front},{log.rear})")
    return _save(fig, path)


def plot_progress_pair(lhs: ProgressSeries, rhs: ProgressSeries, labels: tuple[str, str],
                       path, window_start: float = 1.0) -> Path:
    """Two Prog_rear curves and their difference (rhs minus lhs)."""
    end = min(x for x in (lhs.t_ov, rhs.t_ov, lhs.t[-1]) if x is not None)
    mask = lhs.t <= end
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 4))
    ax0.plot(lhs.t[mask], lhs.theta[mask], label=f"Prog_rear({labels[0]})")
    ax0.plot(rhs.t[mask], rhs.theta[mask], label=f"Prog_rear({labels[1]})")
    ax0.set_xlabel("t [s]")
    ax0.set_ylabel("theta")
    ax0.legend()
    ax1.plot(lhs.t[mask], rhs.theta[mask] - lhs.theta[mask], color="k")
    ax1.axhline(0.0, color="0.6", linewidth=0.8)
    ax1.axvline(window_start, color="0.6", linestyle=":", linewidth=0.8)
    ax1.set_xlabel("t [s]")
    ax1.set_ylabel(f"Prog_rear({labels[1]}) - Prog_rear({labels[0]})")
    fig.tight_layout()
    return _save(fig, path)


def plot_comparisons(races: dict[str, RaceLog], out_dir, window_start: float = 1.0) -> list[Path]:
    """Overtaking and obstructing comparison figures for the four races."""
    prog = {k: extract_progress(v) for k, v in races.items()}
    out_dir = Path(out_dir)
    made = []
    for a in ("M", "D"):
        made.append(plot_progress_pair(prog[f"{a},M"], prog[f"{a},D"], (f"{a},M", f"{a},D"),
                                       out_dir / f"overtaking_{a}.svg", window_start))
        made.append(plot_progress_pair(prog[f"D,{a}"], prog[f"M,{a}"], (f"D,{a}", f"M,{a}"),
                                       out_dir / f"obstructing_{a}.svg", window_start))
    return made


def race_key(front: str, rear: str) -> str:
    return f"{front}-{rear}"


ALL_RACE_KEYS = tuple(race_key(b, a) for b, a in PAIRINGS)
