"""SVG renderings of scenes, generated futures and kinematic profiles"""
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from core.metrics import MetricConfig, longitudinal_profile  # noqa: E402
from core.poly import eval_curve  # noqa: E402
from core.scene import (  # noqa: E402
    MapCategory,
    Scene,
    Trajectory,
    agent_pose,
    trajectory_positions,
)

logger = logging.getLogger(__name__)

CURVE_SAMPLES = 61
PROFILE_PANELS = ('heading', 'speed', 'accel', 'jerk')
PANEL_UNITS = {
    'heading': 'heading [rad]',
    'speed': 'speed [m/s]',
    'accel': 'accel [m/s²]',
    'jerk': 'jerk [m/s³]',
}


def _curve_points(traj: Trajectory) -> np.ndarray:
    times = np.linspace(0.0, traj.duration, CURVE_SAMPLES)

    return trajectory_positions(traj, times)


def plot_scene(
    scene: Scene,
    samples: Optional[Sequence[Sequence[Trajectory]]],
    path: Union[str, Path],
) -> None:
    """
    Draws the map, every agent's history, the ground truth when present and
    the sampled futures
    """

    fig, ax = plt.subplots(figsize=(8, 8))
    for element in scene.map:
        points = eval_curve(
            element.geometry, np.linspace(0.0, 1.0, CURVE_SAMPLES)
        )
        crosswalk = element.category == MapCategory.CROSSWALK
        ax.plot(
            points[:, 0],
            points[:, 1],
            color='tab:orange' if crosswalk else '0.75',
            linestyle=':' if crosswalk else '-',
            linewidth=1.0,
            zorder=1,
        )
    for sample in samples or ():
        for traj in sample:
            points = _curve_points(traj)
            ax.plot(
                points[:, 0],
                points[:, 1],
                color='tab:blue',
                alpha=0.35,
                linewidth=0.8,
                zorder=2,
            )
    for agent in scene.agents:
        history = _curve_points(agent.history)
        ax.plot(
            history[:, 0],
            history[:, 1],
            color='black',
            linewidth=1.5,
            zorder=3,
        )
        if agent.future is not None:
            future = _curve_points(agent.future)
            ax.plot(
                future[:, 0],
                future[:, 1],
                color='tab:green',
                linestyle='--',
                linewidth=1.2,
                zorder=3,
            )
        position, _, _ = agent_pose(agent)
        ax.scatter(*position, color='black', s=12, zorder=4)
    ax.set_aspect('equal', adjustable='datalim')
    ax.set_title(scene.scene_id)
    ax.set_xlabel('x [m]')
    ax.set_ylabel('y [m]')
    fig.tight_layout()
    fig.savefig(path, format='svg')
    plt.close(fig)
    logger.info('wrote scene plot %s', path)


def plot_kinematics(
    scene: Scene,
    samples: Sequence[Sequence[Trajectory]],
    agent_index: int,
    cfg: MetricConfig,
    path: Union[str, Path],
) -> None:
    """
    Per-timestep heading, speed, longitudinal acceleration and jerk of one
    agent across samples, with the comfort bands shaded
    """

    agent = scene.agents[agent_index]
    _, heading, _ = agent_pose(agent)
    fig, axes = plt.subplots(
        len(PROFILE_PANELS), 1, figsize=(8, 9), sharex=True
    )
    curves = [sample[agent_index] for sample in samples]
    for traj in curves:
        profile = longitudinal_profile(traj, cfg.dt, None, heading)
        for ax, name in zip(axes, PROFILE_PANELS):
            ax.plot(
                profile['time'],
                profile[name],
                color='tab:blue',
                alpha=0.35,
                linewidth=0.8,
            )
    if agent.future is not None:
        profile = longitudinal_profile(agent.future, cfg.dt, None, heading)
        for ax, name in zip(axes, PROFILE_PANELS):
            ax.plot(
                profile['time'],
                profile[name],
                color='tab:green',
                linestyle='--',
                linewidth=1.2,
            )
    for ax, band in ((axes[2], cfg.accel_band), (axes[3], cfg.jerk_band)):
        ax.axhspan(-band, band, color='tab:green', alpha=0.08)
        ax.axhline(band, color='tab:red', linewidth=0.6)
        ax.axhline(-band, color='tab:red', linewidth=0.6)
    for ax, name in zip(axes, PROFILE_PANELS):
        ax.set_ylabel(PANEL_UNITS[name])
        ax.grid(True, alpha=0.3)
    axes[-1].set_xlabel('t [s]')
    axes[0].set_title(f'{scene.scene_id} / {agent.id}')
    fig.tight_layout()
    fig.savefig(path, format='svg')
    plt.close(fig)
    logger.info('wrote kinematics plot %s', path)
