"""
Scene data model, query-centric feature packing and post-processing of
generated futures.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import DomainError, EPDError, SceneDataError, ShapeError
from core.poly import (
    PolyCurve,
    elevate_degree,
    eval_curve,
    eval_derivative,
    rigid_transform,
    rotation_matrix,
    to_displacements,
)

logger = logging.getLogger(__name__)

HISTORY_DEGREE = 5
FUTURE_DEGREE = 6
MAP_DEGREE = 3
HISTORY_DURATION = 5.0
FUTURE_DURATION = 6.0
SAMPLE_DT = 0.1
MIN_HEADING_SPEED = 0.1
STATIONARY_THRESHOLD = 1.0


class AgentCategory(str, enum.Enum):
    VEHICLE = 'vehicle'
    PEDESTRIAN = 'pedestrian'
    CYCLIST = 'cyclist'
    EGO = 'ego'


class MapCategory(str, enum.Enum):
    LANE_CENTER = 'lane_center'
    CROSSWALK = 'crosswalk'


AGENT_CATEGORIES = list(AgentCategory)
MAP_CATEGORIES = list(MapCategory)

DEFAULT_FOOTPRINTS = {
    AgentCategory.VEHICLE: (4.7, 2.0),
    AgentCategory.EGO: (4.7, 2.0),
    AgentCategory.PEDESTRIAN: (0.8, 0.8),
    AgentCategory.CYCLIST: (1.8, 0.6),
}


@dataclass(frozen=True, eq=False)
class SampledTrajectory:
    """A trajectory given as positions every dt seconds, starting at t=0"""

    points: np.ndarray
    dt: float = SAMPLE_DT

    def __post_init__(self) -> None:
        """Freezes the points and validates their shape"""

        points = np.array(self.points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2 or len(points) < 2:
            raise ShapeError(
                f'points must be an n x 2 array, got shape {points.shape}'
            )
        if not np.all(np.isfinite(points)):
            raise DomainError('points must be finite')
        points.setflags(write=False)
        object.__setattr__(self, 'points', points)

    @property
    def duration(self) -> float:
        return self.dt * (len(self.points) - 1)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]


Trajectory = Union[PolyCurve, SampledTrajectory]


@dataclass(frozen=True, eq=False)
class Agent:
    """A traffic participant with its fitted history and optional future"""

    id: str
    category: AgentCategory
    history: PolyCurve
    time_window: Tuple[float, float] = (0.0, HISTORY_DURATION)
    footprint: Optional[Tuple[float, float]] = None
    future: Optional[PolyCurve] = None

    def __post_init__(self) -> None:
        """Validates degrees, time window and footprint"""

        object.__setattr__(self, 'category', AgentCategory(self.category))
        if self.footprint is None:
            object.__setattr__(
                self, 'footprint', DEFAULT_FOOTPRINTS[self.category]
            )
        object.__setattr__(
            self, 'footprint', tuple(float(v) for v in self.footprint)
        )
        object.__setattr__(
            self, 'time_window', tuple(float(v) for v in self.time_window)
        )
        if self.history.degree != HISTORY_DEGREE:
            raise ShapeError(f'agent {self.id}: history must be degree 5')
        if self.future is not None and self.future.degree != FUTURE_DEGREE:
            raise ShapeError(f'agent {self.id}: future must be degree 6')
        first, last = self.time_window
        if not 0.0 <= first < last <= HISTORY_DURATION:
            raise DomainError(
                f'agent {self.id}: time window must satisfy '
                f'0 <= t_first < t_last <= {HISTORY_DURATION:g}'
            )
        if len(self.footprint) != 2 or min(self.footprint) <= 0:
            raise DomainError(f'agent {self.id}: footprint must be positive')

    def __repr__(self) -> str:
        """Representation of an Agent object"""

        return f'<Agent: {self.id} ({self.category.value})>'


@dataclass(frozen=True, eq=False)
class MapElement:
    """A lane center or crosswalk given as a cubic curve"""

    id: str
    category: MapCategory
    geometry: PolyCurve

    def __post_init__(self) -> None:
        """Validates the category and the curve degree"""

        object.__setattr__(self, 'category', MapCategory(self.category))
        if self.geometry.degree != MAP_DEGREE:
            raise ShapeError(f'map element {self.id}: geometry must be cubic')


@dataclass(frozen=True, eq=False)
class Scene:
    """Agents, map and evaluation horizons of one traffic scene"""

    scene_id: str
    agents: Tuple[Agent, ...]
    map: Tuple[MapElement, ...] = ()
    horizon_s: float = FUTURE_DURATION
    eval_horizon_s: float = FUTURE_DURATION
    flags: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        """Validates agent ids and horizons"""

        object.__setattr__(self, 'agents', tuple(self.agents))
        object.__setattr__(self, 'map', tuple(self.map))
        object.__setattr__(self, 'flags', tuple(self.flags))
        if not self.agents:
            raise DomainError(f'scene {self.scene_id}: needs an agent')
        ids = [agent.id for agent in self.agents]
        if len(set(ids)) != len(ids):
            raise DomainError(f'scene {self.scene_id}: duplicate agent ids')
        if not 0 < self.eval_horizon_s <= self.horizon_s:
            raise DomainError(
                f'scene {self.scene_id}: horizons must satisfy '
                '0 < eval_horizon_s <= horizon_s'
            )

    @property
    def has_futures(self) -> bool:
        """Checks if every agent carries a ground-truth future"""

        return all(agent.future is not None for agent in self.agents)

    def __repr__(self) -> str:
        """Representation of a Scene object"""

        return (
            f'<Scene: {self.scene_id}, {len(self.agents)} agents, '
            f'{len(self.map)} map elements>'
        )


@dataclass(frozen=True, eq=False)
class SceneFeatures:
    """Network inputs of a scene, every curve in its token's local frame"""

    hist_disp: np.ndarray
    tw: np.ndarray
    agent_cat: np.ndarray
    agent_frame: np.ndarray
    map_disp: np.ndarray
    map_cat: np.ndarray
    map_frame: np.ndarray
    heading_fallback: np.ndarray

    @property
    def n_agents(self) -> int:
        return len(self.hist_disp)

    @property
    def n_map(self) -> int:
        return len(self.map_disp)


def wrap_angle(angle):
    """Wraps angles to (-pi, pi]"""

    return np.arctan2(np.sin(angle), np.cos(angle))


def agent_pose(agent: Agent) -> Tuple[np.ndarray, float, bool]:
    """
    Returns the last observed position, heading and whether the heading fell
    back to 0 because the agent is (nearly) stationary
    """

    position = eval_curve(agent.history, agent.history.duration)
    velocity = eval_derivative(agent.history, agent.history.duration, 1)
    if np.linalg.norm(velocity) < MIN_HEADING_SPEED:
        return position, 0.0, True

    return position, float(np.arctan2(velocity[1], velocity[0])), False


def map_pose(element: MapElement) -> Tuple[np.ndarray, float]:
    """Returns the start point and start tangent heading of a map element"""

    points = element.geometry.control_points
    tangent = points[1] - points[0]
    if np.linalg.norm(tangent) < 1e-9:
        tangent = points[-1] - points[0]
    if np.linalg.norm(tangent) < 1e-9:
        return points[0], 0.0

    return points[0], float(np.arctan2(tangent[1], tangent[0]))


def to_local(curve: PolyCurve, origin, heading: float) -> PolyCurve:
    """Expresses a curve in the frame at origin rotated by heading"""

    shifted = PolyCurve(curve.control_points - origin, curve.duration)

    return rigid_transform(shifted, -heading, np.zeros(2))


def to_global(local_points: np.ndarray, origin, heading: float) -> np.ndarray:
    """Maps frame-local points back to the scene frame"""

    return local_points @ rotation_matrix(heading).T + np.asarray(origin)


def _one_hot(index: int, size: int) -> np.ndarray:
    vector = np.zeros(size)
    vector[index] = 1.0

    return vector


def pack_features(scene: Scene) -> SceneFeatures:
    """Packs a scene into frame-relative arrays for the network"""

    hist_disp, tw, agent_cat, agent_frame, fallback = [], [], [], [], []
    for agent in scene.agents:
        position, heading, degenerate = agent_pose(agent)
        if degenerate:
            logger.debug(
                'scene %s agent %s: heading fell back to 0',
                scene.scene_id,
                agent.id,
            )
        local = to_local(agent.history, position, heading)
        hist_disp.append(to_displacements(local))
        tw.append(agent.time_window)
        agent_cat.append(
            _one_hot(AGENT_CATEGORIES.index(agent.category), 4)
        )
        agent_frame.append([position[0], position[1], heading])
        fallback.append(degenerate)

    map_disp, map_cat, map_frame = [], [], []
    for element in scene.map:
        origin, heading = map_pose(element)
        local = to_local(element.geometry, origin, heading)
        map_disp.append(to_displacements(local))
        map_cat.append(_one_hot(MAP_CATEGORIES.index(element.category), 2))
        map_frame.append([origin[0], origin[1], heading])

    return SceneFeatures(
        hist_disp=np.array(hist_disp).reshape(-1, 2 * HISTORY_DEGREE),
        tw=np.array(tw).reshape(-1, 2),
        agent_cat=np.array(agent_cat).reshape(-1, 4),
        agent_frame=np.array(agent_frame).reshape(-1, 3),
        map_disp=np.array(map_disp).reshape(-1, 2 * MAP_DEGREE),
        map_cat=np.array(map_cat).reshape(-1, 2),
        map_frame=np.array(map_frame).reshape(-1, 3),
        heading_fallback=np.array(fallback, dtype=bool),
    )


def future_displacements(scene: Scene) -> np.ndarray:
    """Returns the A x 12 ground-truth future displacements, agent frames"""

    rows = []
    for agent in scene.agents:
        if agent.future is None:
            raise DomainError(f'agent {agent.id} has no future')
        _, heading, _ = agent_pose(agent)
        rotated = agent.future.control_points @ rotation_matrix(-heading).T
        rows.append(np.diff(rotated, axis=0).reshape(-1))

    return np.array(rows)


def transform_scene(
    scene: Scene, rotation: float, translation: np.ndarray
) -> Scene:
    """Applies one rigid transform to every curve of the scene"""

    def move(curve):
        if curve is None:
            return None
        return rigid_transform(curve, rotation, translation)

    agents = [
        Agent(
            id=agent.id,
            category=agent.category,
            history=move(agent.history),
            time_window=agent.time_window,
            footprint=agent.footprint,
            future=move(agent.future),
        )
        for agent in scene.agents
    ]
    elements = [
        MapElement(element.id, element.category, move(element.geometry))
        for element in scene.map
    ]

    return Scene(
        scene.scene_id,
        agents,
        elements,
        scene.horizon_s,
        scene.eval_horizon_s,
        scene.flags,
    )


def trajectory_positions(traj: Trajectory, times: np.ndarray) -> np.ndarray:
    """Positions of a polynomial or sampled trajectory at the given times"""

    if isinstance(traj, PolyCurve):
        return eval_curve(traj, np.clip(times, 0.0, traj.duration))
    grid = np.arange(len(traj.points)) * traj.dt
    clipped = np.clip(times, 0.0, traj.duration)

    return np.stack(
        [
            np.interp(clipped, grid, traj.points[:, 0]),
            np.interp(clipped, grid, traj.points[:, 1]),
        ],
        axis=-1,
    )


def max_excursion(traj: Trajectory) -> float:
    """Largest distance from the start position over the trajectory"""

    if isinstance(traj, PolyCurve):
        times = np.linspace(0.0, traj.duration, 601)
        points = eval_curve(traj, times)
    else:
        points = traj.points

    return float(np.max(np.linalg.norm(points - points[0], axis=1)))


def _constant_like(traj: Trajectory, position: np.ndarray) -> Trajectory:
    if isinstance(traj, PolyCurve):
        points = np.repeat(position[None, :], traj.degree + 1, axis=0)
        return PolyCurve(points, traj.duration)
    points = np.repeat(position[None, :], len(traj.points), axis=0)

    return SampledTrajectory(points, traj.dt)


def stationary_correction(
    scene: Scene, generated: Sequence[Trajectory]
) -> List[Trajectory]:
    """
    Freezes every agent whose generated trajectory strays less than 1 m from
    its start at the last observed position
    """

    if len(generated) != len(scene.agents):
        raise ShapeError('one generated trajectory per agent is required')
    corrected = []
    for agent, traj in zip(scene.agents, generated):
        if max_excursion(traj) < STATIONARY_THRESHOLD:
            position, _, _ = agent_pose(agent)
            corrected.append(_constant_like(traj, position))
        else:
            corrected.append(traj)

    return corrected


def constant_velocity_rollout(
    scene: Scene, duration: float = FUTURE_DURATION
) -> List[PolyCurve]:
    """Extrapolates every agent at its last observed velocity"""

    rollouts = []
    for agent in scene.agents:
        end = agent.history.duration
        position = eval_curve(agent.history, end)
        velocity = eval_derivative(agent.history, end, 1)
        curve = PolyCurve(
            np.stack([position, position + velocity * duration]), duration
        )
        while curve.degree < FUTURE_DEGREE:
            curve = elevate_degree(curve)
        rollouts.append(curve)

    return rollouts


def _points(curve: PolyCurve) -> List[List[float]]:
    return [[float(x), float(y)] for x, y in curve.control_points]


def scene_to_dict(scene: Scene) -> dict:
    """Maps a scene onto its JSON document"""

    agents = []
    for agent in scene.agents:
        document = {
            'id': agent.id,
            'category': agent.category.value,
            'tw': list(agent.time_window),
            'footprint': list(agent.footprint),
            'history_cp': _points(agent.history),
        }
        if agent.future is not None:
            document['future_cp'] = _points(agent.future)
        agents.append(document)
    document = {
        'scene_id': scene.scene_id,
        'horizon_s': scene.horizon_s,
        'eval_horizon_s': scene.eval_horizon_s,
        'agents': agents,
        'map': [
            {
                'id': element.id,
                'category': element.category.value,
                'cp': _points(element.geometry),
            }
            for element in scene.map
        ],
    }
    if scene.flags:
        document['flags'] = list(scene.flags)

    return document


def scene_from_dict(document: dict, line: int = None) -> Scene:
    """Validates a JSON document and builds the scene it describes"""

    from core.serializers import SceneSerializer, first_error

    serializer = SceneSerializer(data=document)
    if not serializer.is_valid():
        path, message = first_error(serializer.errors)
        raise SceneDataError(message, line=line, field=path)
    try:
        return serializer.save()
    except EPDError as error:
        raise SceneDataError(str(error), line=line) from error


def scene_io_read(path: Union[str, Path]) -> List[Scene]:
    """Reads a JSON Lines scene file"""

    scenes = []
    with open(path, encoding='utf-8') as handle:
        for number, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                document = json.loads(raw)
            except json.JSONDecodeError as error:
                raise SceneDataError(
                    f'invalid JSON ({error.msg})', line=number
                ) from error
            if not isinstance(document, dict):
                raise SceneDataError('expected a JSON object', line=number)
            scenes.append(scene_from_dict(document, line=number))

    return scenes


def scene_io_write(scenes: Iterable[Scene], path: Union[str, Path]) -> None:
    """Writes scenes as JSON Lines, one scene per line"""

    with open(path, 'w', encoding='utf-8') as handle:
        for scene in scenes:
            handle.write(
                json.dumps(scene_to_dict(scene), separators=(',', ':'))
            )
            handle.write('\n')


def trajectory_to_dict(agent_id: str, traj: Trajectory) -> dict:
    """JSON document of one generated trajectory"""

    if isinstance(traj, PolyCurve):
        return {
            'id': agent_id,
            'cp': _points(traj),
            'duration': traj.duration,
        }

    return {
        'id': agent_id,
        'points': [[float(x), float(y)] for x, y in traj.points],
        'dt': traj.dt,
    }


def trajectory_from_dict(document: dict, line: int = None) -> Trajectory:
    """Rebuilds a trajectory from its JSON document"""

    try:
        if 'cp' in document:
            return PolyCurve(
                document['cp'], document.get('duration', FUTURE_DURATION)
            )
        if 'points' in document:
            return SampledTrajectory(
                document['points'], document.get('dt', SAMPLE_DT)
            )
    except (EPDError, TypeError, ValueError) as error:
        raise SceneDataError(str(error), line=line, field='samples')
    raise SceneDataError(
        'trajectory needs cp or points', line=line, field='samples'
    )


def samples_io_write(
    scenes: Sequence[Scene],
    samples: Sequence[Sequence[Sequence[Trajectory]]],
    representation: str,
    path: Union[str, Path],
) -> None:
    """Writes generated samples as JSON Lines, one scene per line"""

    with open(path, 'w', encoding='utf-8') as handle:
        for scene, scene_samples in zip(scenes, samples):
            document = {
                'scene_id': scene.scene_id,
                'representation': representation,
                'samples': [
                    [
                        trajectory_to_dict(agent.id, traj)
                        for agent, traj in zip(scene.agents, sample)
                    ]
                    for sample in scene_samples
                ],
            }
            handle.write(
                json.dumps(document, sort_keys=True, separators=(',', ':'))
            )
            handle.write('\n')


def samples_io_read(path: Union[str, Path]) -> dict:
    """
    Reads a samples file into a mapping of scene id to a list of samples,
    each a list of trajectories in agent order
    """

    result = {}
    with open(path, encoding='utf-8') as handle:
        for number, raw in enumerate(handle, start=1):
            if not raw.strip():
                continue
            try:
                document = json.loads(raw)
                scene_id = document['scene_id']
                samples = document['samples']
            except json.JSONDecodeError as error:
                raise SceneDataError(
                    f'invalid JSON ({error.msg})', line=number
                ) from error
            except (KeyError, TypeError) as error:
                raise SceneDataError(
                    'expected scene_id and samples', line=number
                ) from error
            result[scene_id] = [
                [trajectory_from_dict(entry, number) for entry in sample]
                for sample in samples
            ]

    return result
