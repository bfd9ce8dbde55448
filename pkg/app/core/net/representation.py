"""
Polynomial and sequence representations of network inputs and targets.

Polynomial mode uses control-point displacements (history 10, map 6,
future 12 values). Sequence mode replaces them with 10 Hz step
displacements (history 100, future 120) and 10-segment map polylines (20).
"""
from typing import List, Optional, Tuple

import numpy as np

from core.exceptions import ConfigError, DomainError
from core.poly import (
    PolyCurve,
    eval_curve,
    from_displacements,
    rotation_matrix,
)
from core.scene import (
    FUTURE_DEGREE,
    FUTURE_DURATION,
    HISTORY_DURATION,
    SAMPLE_DT,
    SampledTrajectory,
    Scene,
    SceneFeatures,
    Trajectory,
    agent_pose,
    future_displacements,
    map_pose,
    pack_features,
    to_global,
)

POLYNOMIAL = 'polynomial'
SEQUENCE = 'sequence'
REPRESENTATIONS = (POLYNOMIAL, SEQUENCE)

SEQUENCE_HISTORY_STEPS = int(round(HISTORY_DURATION / SAMPLE_DT))
SEQUENCE_FUTURE_STEPS = int(round(FUTURE_DURATION / SAMPLE_DT))
MAP_SEGMENTS = 10

WIDTHS = {
    POLYNOMIAL: {'history': 10, 'map': 6, 'future': 2 * FUTURE_DEGREE},
    SEQUENCE: {
        'history': 2 * SEQUENCE_HISTORY_STEPS,
        'map': 2 * MAP_SEGMENTS,
        'future': 2 * SEQUENCE_FUTURE_STEPS,
    },
}


def _step_displacements(curve: PolyCurve, steps: int, origin, heading):
    times = np.linspace(0.0, curve.duration, steps + 1)
    local = (eval_curve(curve, times) - origin) @ rotation_matrix(heading)

    return np.diff(local, axis=0).reshape(-1)


def sequence_representation_adapters(
    scene: Scene,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Returns the A x 100 history and A x 120 future step displacements, each
    in its agent's frame. The future is None when the scene has no ground
    truth.
    """

    history, future = [], []
    for agent in scene.agents:
        position, heading, _ = agent_pose(agent)
        history.append(
            _step_displacements(
                agent.history, SEQUENCE_HISTORY_STEPS, position, heading
            )
        )
        if agent.future is not None:
            future.append(
                _step_displacements(
                    agent.future,
                    SEQUENCE_FUTURE_STEPS,
                    agent.future.start,
                    heading,
                )
            )
    futures = np.array(future) if scene.has_futures else None

    return np.array(history), futures


def sequence_to_points(
    rows: np.ndarray, agent_frame: np.ndarray
) -> List[np.ndarray]:
    """Inverse adapter: 61 global points per agent from step displacements"""

    points = []
    for row, (x, y, heading) in zip(rows, agent_frame):
        steps = np.asarray(row, dtype=float).reshape(-1, 2)
        local = np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)])
        points.append(to_global(local, [x, y], heading))

    return points


def scene_features(scene: Scene, representation: str) -> SceneFeatures:
    """Packs the network inputs of a scene in the given representation"""

    features = pack_features(scene)
    if representation == POLYNOMIAL:
        return features
    if representation != SEQUENCE:
        raise ConfigError(f'unknown representation {representation!r}')

    history, _ = sequence_representation_adapters(scene)
    map_rows = []
    for element in scene.map:
        origin, heading = map_pose(element)
        map_rows.append(
            _step_displacements(
                element.geometry, MAP_SEGMENTS, origin, heading
            )
        )

    return SceneFeatures(
        hist_disp=history.reshape(-1, WIDTHS[SEQUENCE]['history']),
        tw=features.tw,
        agent_cat=features.agent_cat,
        agent_frame=features.agent_frame,
        map_disp=np.array(map_rows).reshape(-1, WIDTHS[SEQUENCE]['map']),
        map_cat=features.map_cat,
        map_frame=features.map_frame,
        heading_fallback=features.heading_fallback,
    )


def future_targets(scene: Scene, representation: str) -> np.ndarray:
    """Ground-truth future displacement rows, agent frames"""

    if representation == POLYNOMIAL:
        return future_displacements(scene)
    _, future = sequence_representation_adapters(scene)
    if future is None:
        raise DomainError(f'scene {scene.scene_id} has no ground truth')

    return future


def decode_futures(
    rows: np.ndarray, agent_frame: np.ndarray, representation: str
) -> List[Trajectory]:
    """
    Turns de-standardized displacement rows into global trajectories that
    start at each agent's last observed position
    """

    if representation == SEQUENCE:
        return [
            SampledTrajectory(points, SAMPLE_DT)
            for points in sequence_to_points(rows, agent_frame)
        ]
    futures = []
    for row, (x, y, heading) in zip(rows, agent_frame):
        local = from_displacements(FUTURE_DEGREE, np.zeros(2), row)
        points = to_global(local.control_points, [x, y], heading)
        futures.append(PolyCurve(points, FUTURE_DURATION))

    return futures
