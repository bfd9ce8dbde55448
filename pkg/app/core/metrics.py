"""
Distribution-based plausibility scores, regression metrics and hard-scene
selection.

Every trajectory is read at t = k * dt for k = 1..round(horizon / dt).
Distributional scores compare the ground truth against a smoothed histogram
of the sampled continuations, one histogram per timestep.
"""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import (
    Dict,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd

from core.exceptions import ConfigError, MetricError, ShapeError
from core.poly import PolyCurve, eval_derivative, project_points
from core.scene import (
    MIN_HEADING_SPEED,
    MapCategory,
    MapElement,
    Scene,
    Trajectory,
    agent_pose,
    constant_velocity_rollout,
    trajectory_positions,
)

logger = logging.getLogger(__name__)

KINEMATIC_FEATURES = ('speed', 'accel', 'jerk', 'heading_rate')
FAMILIES = ('kinematic', 'interactive', 'map')


def _default_bins() -> Dict[str, Tuple[float, float, int]]:
    return {
        'speed': (0.0, 30.0, 20),
        'accel': (0.0, 10.0, 20),
        'jerk': (0.0, 20.0, 20),
        'heading_rate': (-1.0, 1.0, 20),
        'agent_distance': (0.0, 50.0, 20),
        'lane_distance': (0.0, 10.0, 20),
    }


@dataclass(frozen=True)
class MetricConfig:
    """Sampling, histogram and weighting settings of the realism scores"""

    n_samples: int = 32
    dt: float = 0.1
    bins: Dict[str, Tuple[float, float, int]] = field(
        default_factory=_default_bins
    )
    smoothing: float = 0.5
    weights: Dict[str, float] = field(
        default_factory=lambda: {name: 1.0 / 3.0 for name in FAMILIES}
    )
    accel_band: float = 4.0
    jerk_band: float = 8.0
    off_lane_threshold: float = 5.0

    def __post_init__(self) -> None:
        """Validates sample count, bins, weights and bands"""

        bins = dict(_default_bins())
        unknown = set(self.bins) - set(bins)
        if unknown:
            raise ConfigError(f'bins: unknown features {sorted(unknown)}')
        bins.update({k: tuple(v) for k, v in self.bins.items()})
        object.__setattr__(self, 'bins', bins)
        if self.n_samples < 2:
            raise ConfigError('n_samples must be at least 2')
        if self.dt <= 0:
            raise ConfigError('dt must be positive')
        for name, (low, high, count) in bins.items():
            if not low < high or int(count) < 1:
                raise ConfigError(f'bins.{name}: need low < high, count >= 1')
        if self.smoothing <= 0:
            raise ConfigError('smoothing must be positive')
        if set(self.weights) != set(FAMILIES):
            raise ConfigError(f'weights must name exactly {FAMILIES}')
        values = np.array([self.weights[name] for name in FAMILIES])
        if np.any(values < 0) or abs(values.sum() - 1.0) > 1e-9:
            raise ConfigError('weights must be non-negative and sum to 1')
        for name in ('accel_band', 'jerk_band', 'off_lane_threshold'):
            if getattr(self, name) <= 0:
                raise ConfigError(f'{name} must be positive')

    def edges(self, feature: str) -> np.ndarray:
        """Histogram bin edges of a feature"""

        low, high, count = self.bins[feature]

        return np.linspace(low, high, int(count) + 1)


@dataclass
class MetricReport:
    """Scores of one scene"""

    scene_id: str
    realism_meta: float
    kinematic: float
    interactive: float
    map_adherence: Optional[float]
    minade: float
    coverage: float
    sub_scores: Dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


class Selection(NamedTuple):
    """Scene ids picked by select_challenging or select_random"""

    ids: List[str]
    truncated: bool


class KinematicProfile(NamedTuple):
    """Velocity, acceleration and jerk vectors at the evaluation times"""

    times: np.ndarray
    velocity: np.ndarray
    accel: np.ndarray
    jerk: np.ndarray


def evaluation_times(dt: float, horizon: float) -> np.ndarray:
    """Times k * dt for k = 1..round(horizon / dt)"""

    steps = int(round(horizon / dt))
    if steps < 1:
        raise MetricError(f'horizon {horizon:g} s is shorter than dt')

    return dt * np.arange(1, steps + 1)


def _horizon(traj: Trajectory, horizon: Optional[float]) -> float:
    return traj.duration if horizon is None else horizon


def kinematic_profile(
    traj: Trajectory, dt: float, horizon: float = None
) -> KinematicProfile:
    """
    Derivatives of a trajectory at the evaluation times: analytic for
    polynomial curves, central differences on the dt grid for sampled ones
    """

    times = evaluation_times(dt, _horizon(traj, horizon))
    if isinstance(traj, PolyCurve):
        clipped = np.clip(times, 0.0, traj.duration)
        return KinematicProfile(
            times,
            eval_derivative(traj, clipped, 1),
            eval_derivative(traj, clipped, 2),
            eval_derivative(traj, clipped, 3),
        )
    grid = np.concatenate([[0.0], times])
    positions = trajectory_positions(traj, grid)
    velocity = np.gradient(positions, dt, axis=0)
    accel = np.gradient(velocity, dt, axis=0)
    jerk = np.gradient(accel, dt, axis=0)

    return KinematicProfile(times, velocity[1:], accel[1:], jerk[1:])


def held_headings(
    velocity: np.ndarray, initial: float = 0.0
) -> np.ndarray:
    """Heading of the velocity, held at its last value while nearly static"""

    speed = np.linalg.norm(velocity, axis=-1)
    raw = np.arctan2(velocity[..., 1], velocity[..., 0])
    headings = np.empty(len(velocity))
    current = initial
    for index in range(len(velocity)):
        if speed[index] >= MIN_HEADING_SPEED:
            current = raw[index]
        headings[index] = current

    return headings


def kinematic_features(
    traj: Trajectory, dt: float, horizon: float = None
) -> Dict[str, np.ndarray]:
    """Per-timestep speed, |accel|, |jerk| and heading rate"""

    profile = kinematic_profile(traj, dt, horizon)
    velocity, accel = profile.velocity, profile.accel
    speed = np.linalg.norm(velocity, axis=1)
    cross = velocity[:, 0] * accel[:, 1] - velocity[:, 1] * accel[:, 0]
    moving = speed >= MIN_HEADING_SPEED
    heading_rate = np.where(
        moving, cross / np.where(moving, speed ** 2, 1.0), 0.0
    )

    return {
        'speed': speed,
        'accel': np.linalg.norm(accel, axis=1),
        'jerk': np.linalg.norm(profile.jerk, axis=1),
        'heading_rate': heading_rate,
    }


def longitudinal_profile(
    traj: Trajectory,
    dt: float,
    horizon: float = None,
    initial_heading: float = 0.0,
) -> Dict[str, np.ndarray]:
    """Heading, speed and longitudinal acceleration and jerk over time"""

    profile = kinematic_profile(traj, dt, horizon)
    headings = held_headings(profile.velocity, initial_heading)
    direction = np.stack([np.cos(headings), np.sin(headings)], axis=1)

    return {
        'time': profile.times,
        'heading': headings,
        'speed': np.linalg.norm(profile.velocity, axis=1),
        'accel': np.sum(profile.accel * direction, axis=1),
        'jerk': np.sum(profile.jerk * direction, axis=1),
    }


def comfort_band_violations(
    traj: Trajectory,
    cfg: MetricConfig,
    horizon: float = None,
    initial_heading: float = 0.0,
) -> Dict[str, float]:
    """Fractions of timesteps leaving the acceleration and jerk bands"""

    profile = longitudinal_profile(traj, cfg.dt, horizon, initial_heading)

    return {
        'accel': float(np.mean(np.abs(profile['accel']) > cfg.accel_band)),
        'jerk': float(np.mean(np.abs(profile['jerk']) > cfg.jerk_band)),
    }


def likelihood_score(
    gt_values: np.ndarray,
    sample_values: np.ndarray,
    edges: np.ndarray,
    smoothing: float = 0.5,
) -> float:
    """
    Geometric mean over timesteps of the smoothed histogram mass of the bin
    holding the ground-truth value. Values outside the edges count towards
    the outer bins.
    """

    gt_values = np.asarray(gt_values, dtype=float).reshape(-1)
    sample_values = np.asarray(sample_values, dtype=float)
    if sample_values.ndim == 1:
        sample_values = sample_values[:, None]
    n_samples, steps = sample_values.shape
    if n_samples < 2:
        raise MetricError('at least 2 samples are required')
    if steps != len(gt_values):
        raise ShapeError('samples and ground truth differ in timesteps')
    bins = len(edges) - 1

    def locate(values):
        return np.clip(np.digitize(values, edges) - 1, 0, bins - 1)

    sample_bins = locate(sample_values)
    gt_bins = locate(gt_values)
    hits = np.sum(sample_bins == gt_bins[None, :], axis=0)
    mass = (hits + smoothing / bins) / (n_samples + smoothing)

    return float(np.exp(np.mean(np.log(mass))))


def bernoulli_score(
    gt_flag: bool, sample_flags: Sequence[bool], smoothing: float = 0.5
) -> float:
    """Smoothed probability the samples assign to the ground-truth flag"""

    flags = np.asarray(sample_flags, dtype=bool)
    if len(flags) < 2:
        raise MetricError('at least 2 samples are required')
    agreeing = int(np.sum(flags == bool(gt_flag)))

    return (agreeing + smoothing / 2.0) / (len(flags) + smoothing)


def rectangle_corners(center, heading, size) -> np.ndarray:
    """Corners (..., 4, 2) of oriented rectangles of size (length, width)"""

    center = np.asarray(center, dtype=float)
    heading = np.asarray(heading, dtype=float)
    half_length, half_width = size[0] / 2.0, size[1] / 2.0
    local = np.array(
        [
            [half_length, half_width],
            [-half_length, half_width],
            [-half_length, -half_width],
            [half_length, -half_width],
        ]
    )
    cos, sin = np.cos(heading)[..., None], np.sin(heading)[..., None]
    x = local[:, 0] * cos - local[:, 1] * sin
    y = local[:, 0] * sin + local[:, 1] * cos

    return np.stack([x, y], axis=-1) + center[..., None, :]


def _box_axes(heading: np.ndarray) -> np.ndarray:
    cos, sin = np.cos(heading), np.sin(heading)

    return np.stack(
        [np.stack([cos, sin], -1), np.stack([-sin, cos], -1)], axis=-2
    )


def boxes_overlap(
    corners_a: np.ndarray,
    heading_a: np.ndarray,
    corners_b: np.ndarray,
    heading_b: np.ndarray,
) -> np.ndarray:
    """
    Separating-axis test on (..., 4, 2) corner arrays. Touching boxes count
    as overlapping.
    """

    axes = np.concatenate([_box_axes(heading_a), _box_axes(heading_b)], -2)
    project_a = np.einsum('...cx,...kx->...kc', corners_a, axes)
    project_b = np.einsum('...cx,...kx->...kc', corners_b, axes)
    separated = (project_a.max(-1) < project_b.min(-1)) | (
        project_b.max(-1) < project_a.min(-1)
    )

    return ~np.any(separated, axis=-1)


def rectangles_overlap(
    center_a, heading_a: float, size_a, center_b, heading_b: float, size_b
) -> bool:
    """Checks if two oriented rectangles overlap"""

    reach = (np.hypot(*size_a) + np.hypot(*size_b)) / 2.0
    if np.linalg.norm(np.subtract(center_a, center_b)) > reach:
        return False

    return bool(
        boxes_overlap(
            rectangle_corners(center_a, heading_a, size_a),
            np.asarray(heading_a),
            rectangle_corners(center_b, heading_b, size_b),
            np.asarray(heading_b),
        )
    )


def _trajectory_states(
    trajectories: Sequence[Trajectory],
    dt: float,
    horizon: float,
    initial_headings: Sequence[float] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    times = evaluation_times(dt, horizon)
    if initial_headings is None:
        initial_headings = [0.0] * len(trajectories)
    positions, headings = [], []
    for traj, initial in zip(trajectories, initial_headings):
        positions.append(trajectory_positions(traj, times))
        velocity = kinematic_profile(traj, dt, horizon).velocity
        headings.append(held_headings(velocity, initial))

    return np.array(positions), np.array(headings)


def collision_matrix(
    positions: np.ndarray, headings: np.ndarray, footprints
) -> np.ndarray:
    """(T, A, A) overlap flags of oriented boxes over time, i < j mirrored"""

    n_agents, steps = positions.shape[:2]
    collisions = np.zeros((steps, n_agents, n_agents), dtype=bool)
    corners = [
        rectangle_corners(positions[i], headings[i], footprints[i])
        for i in range(n_agents)
    ]
    reach = [np.hypot(*size) / 2.0 for size in footprints]
    for i, j in itertools.combinations(range(n_agents), 2):
        gaps = np.linalg.norm(positions[i] - positions[j], axis=1)
        near = gaps <= reach[i] + reach[j]
        if not np.any(near):
            continue
        hit = np.zeros(steps, dtype=bool)
        hit[near] = boxes_overlap(
            corners[i][near],
            headings[i][near],
            corners[j][near],
            headings[j][near],
        )
        collisions[:, i, j] = collisions[:, j, i] = hit

    return collisions


def collision_check(
    trajectories: Sequence[Trajectory],
    footprints,
    dt: float,
    horizon: float = None,
    initial_headings: Sequence[float] = None,
) -> np.ndarray:
    """
    Per-timestep (T, A, A) collision flags of agents moving along the
    trajectories, boxes oriented along their velocity
    """

    if horizon is None:
        horizon = min(traj.duration for traj in trajectories)
    positions, headings = _trajectory_states(
        trajectories, dt, horizon, initial_headings
    )

    return collision_matrix(positions, headings, footprints)


def _lanes(elements: Iterable[MapElement]) -> List[MapElement]:
    return [e for e in elements if e.category == MapCategory.LANE_CENTER]


def lane_distances(
    positions: np.ndarray, elements: Iterable[MapElement]
) -> np.ndarray:
    """Distance of every position to the nearest lane center"""

    lanes = _lanes(elements)
    if not lanes:
        raise MetricError('map has no lane centers')
    flat = positions.reshape(-1, 2)
    best = np.full(len(flat), np.inf)
    for lane in lanes:
        _, distances = project_points(lane.geometry, flat)
        best = np.minimum(best, distances)

    return best.reshape(positions.shape[:-1])


def map_distance(
    traj: Trajectory,
    elements: Iterable[MapElement],
    dt: float,
    horizon: float = None,
) -> np.ndarray:
    """Per-timestep distance to the nearest lane center, in meters"""

    times = evaluation_times(dt, _horizon(traj, horizon))

    return lane_distances(trajectory_positions(traj, times), elements)


def nearest_agent_distances(positions: np.ndarray) -> np.ndarray:
    """(A, T) distance of each agent to the closest other agent"""

    gaps = np.linalg.norm(
        positions[:, None, :, :] - positions[None, :, :, :], axis=-1
    )
    index = np.arange(len(positions))
    gaps[index, index, :] = np.inf

    return gaps.min(axis=1)


def _positions(trajectories, times) -> np.ndarray:
    return np.array(
        [trajectory_positions(traj, times) for traj in trajectories]
    )


def minade(
    samples: Sequence[Sequence[Trajectory]],
    gt: Sequence[Trajectory],
    dt: float,
    horizon: float,
) -> float:
    """
    Joint minADE: the lowest over samples of the displacement error averaged
    over agents and timesteps
    """

    if not samples:
        raise MetricError('at least 1 sample is required')
    times = evaluation_times(dt, horizon)
    truth = _positions(gt, times)
    errors = []
    for sample in samples:
        if len(sample) != len(gt):
            raise ShapeError('every sample needs one trajectory per agent')
        offsets = _positions(sample, times) - truth
        errors.append(float(np.mean(np.linalg.norm(offsets, axis=-1))))

    return min(errors)


def coverage(
    samples: Sequence[Sequence[Trajectory]], horizon: float = None
) -> float:
    """Mean over sample pairs of the agent-averaged final distance"""

    if len(samples) < 2:
        raise MetricError('coverage needs at least 2 samples')
    if horizon is None:
        horizon = min(traj.duration for traj in samples[0])
    finals = np.array(
        [_positions(sample, np.array([horizon]))[:, 0] for sample in samples]
    )
    spreads = [
        float(np.mean(np.linalg.norm(finals[a] - finals[b], axis=-1)))
        for a, b in itertools.combinations(range(len(finals)), 2)
    ]

    return math.fsum(spreads) / len(spreads)


def _mean(values: Iterable[float]) -> float:
    values = list(values)

    return math.fsum(values) / len(values)


class _SceneState(NamedTuple):
    features: Dict[str, np.ndarray]
    collided: np.ndarray
    agent_distance: Optional[np.ndarray]
    lane_distance: Optional[np.ndarray]


def _scene_state(scene, trajectories, cfg, horizon, initial, lanes):
    if len(trajectories) != len(scene.agents):
        raise ShapeError('every sample needs one trajectory per agent')
    features = {name: [] for name in KINEMATIC_FEATURES}
    for traj in trajectories:
        for name, values in kinematic_features(traj, cfg.dt, horizon).items():
            features[name].append(values)
    positions, headings = _trajectory_states(
        trajectories, cfg.dt, horizon, initial
    )
    footprints = [agent.footprint for agent in scene.agents]
    collided = collision_matrix(positions, headings, footprints).any(
        axis=(0, 2)
    )
    agent_distance = None
    if len(scene.agents) > 1:
        agent_distance = nearest_agent_distances(positions)
    lane_distance = lane_distances(positions, lanes) if lanes else None

    return _SceneState(
        {name: np.array(rows) for name, rows in features.items()},
        collided,
        agent_distance,
        lane_distance,
    )


def compute_report(
    scene: Scene,
    samples: Sequence[Sequence[Trajectory]],
    cfg: MetricConfig = None,
    horizon: float = None,
) -> MetricReport:
    """Scores sampled scene continuations against the ground truth"""

    cfg = cfg or MetricConfig()
    if len(samples) < 2:
        raise MetricError(
            f'scene {scene.scene_id}: at least 2 samples are required'
        )
    if not scene.has_futures:
        raise MetricError(f'scene {scene.scene_id}: ground truth missing')
    horizon = scene.eval_horizon_s if horizon is None else horizon
    initial = [agent_pose(agent)[1] for agent in scene.agents]
    lanes = _lanes(scene.map)
    gt = [agent.future for agent in scene.agents]
    truth = _scene_state(scene, gt, cfg, horizon, initial, lanes)
    states = [
        _scene_state(scene, sample, cfg, horizon, initial, lanes)
        for sample in samples
    ]

    def distribution(name, gt_rows, sample_rows, index):
        return likelihood_score(
            gt_rows[index],
            np.array([rows[index] for rows in sample_rows]),
            cfg.edges(name),
            cfg.smoothing,
        )

    sub_scores: Dict[str, List[float]] = {}
    n_agents = len(scene.agents)
    for name in KINEMATIC_FEATURES:
        sub_scores[name] = [
            distribution(
                name,
                truth.features[name],
                [state.features[name] for state in states],
                index,
            )
            for index in range(n_agents)
        ]
    if truth.agent_distance is not None:
        sub_scores['agent_distance'] = [
            distribution(
                'agent_distance',
                truth.agent_distance,
                [state.agent_distance for state in states],
                index,
            )
            for index in range(n_agents)
        ]
    sub_scores['collision'] = [
        bernoulli_score(
            truth.collided[index],
            [state.collided[index] for state in states],
            cfg.smoothing,
        )
        for index in range(n_agents)
    ]
    if lanes:
        sub_scores['lane_distance'] = [
            distribution(
                'lane_distance',
                truth.lane_distance,
                [state.lane_distance for state in states],
                index,
            )
            for index in range(n_agents)
        ]

        def off_lane(state):
            return np.any(state.lane_distance > cfg.off_lane_threshold, 1)

        gt_off = off_lane(truth)
        sample_off = [off_lane(state) for state in states]
        sub_scores['off_lane'] = [
            bernoulli_score(
                gt_off[index],
                [flags[index] for flags in sample_off],
                cfg.smoothing,
            )
            for index in range(n_agents)
        ]
    else:
        logger.info(
            'scene %s: no lane centers, map family skipped', scene.scene_id
        )

    families = {
        'kinematic': _mean(
            itertools.chain.from_iterable(
                sub_scores[name] for name in KINEMATIC_FEATURES
            )
        ),
        'interactive': _mean(
            itertools.chain.from_iterable(
                sub_scores[name]
                for name in ('agent_distance', 'collision')
                if name in sub_scores
            )
        ),
    }
    if lanes:
        families['map'] = _mean(
            sub_scores['lane_distance'] + sub_scores['off_lane']
        )
    total_weight = sum(cfg.weights[name] for name in families)
    if total_weight > 0:
        meta = math.fsum(
            cfg.weights[name] * score for name, score in families.items()
        ) / total_weight
    else:
        meta = _mean(families.values())

    flat = {name: _mean(values) for name, values in sub_scores.items()}
    violations = [
        comfort_band_violations(traj, cfg, horizon, initial[index])
        for sample in samples
        for index, traj in enumerate(sample)
    ]
    flat['accel_band_violation'] = _mean(v['accel'] for v in violations)
    flat['jerk_band_violation'] = _mean(v['jerk'] for v in violations)

    return MetricReport(
        scene_id=scene.scene_id,
        realism_meta=float(np.clip(meta, 0.0, 1.0)),
        kinematic=families['kinematic'],
        interactive=families['interactive'],
        map_adherence=families.get('map'),
        minade=minade(samples, gt, cfg.dt, horizon),
        coverage=coverage(samples, horizon),
        sub_scores=flat,
    )


def constant_velocity_samples(
    scene: Scene, n_samples: int
) -> List[List[PolyCurve]]:
    """The constant-velocity rollout repeated as n_samples continuations"""

    rollout = constant_velocity_rollout(scene, scene.horizon_s)

    return [list(rollout) for _ in range(n_samples)]


def select_challenging(
    scenes: Sequence[Scene],
    n: int,
    cfg: MetricConfig = None,
    horizon: float = None,
) -> Selection:
    """
    Picks the n scenes on which the constant-velocity model scores the
    lowest realism_meta over horizon (default: per scene), ties broken by
    scene id
    """

    cfg = cfg or MetricConfig()
    scored = []
    for scene in scenes:
        report = compute_report(
            scene,
            constant_velocity_samples(scene, cfg.n_samples),
            cfg,
            horizon,
        )
        scored.append((report.realism_meta, scene.scene_id))
    scored.sort()
    truncated = n > len(scored)
    if truncated:
        logger.warning(
            'requested %d scenes but the corpus holds %d', n, len(scored)
        )

    return Selection([scene_id for _, scene_id in scored[:n]], truncated)


def select_random(
    scenes: Sequence[Scene], fraction: float = 0.2, seed: int = 0
) -> Selection:
    """
    Draws a seeded random subset holding round(fraction * len(scenes))
    scenes, at least one for a non-empty corpus, listed by scene id
    """

    if not 0.0 < fraction <= 1.0:
        raise ConfigError('fraction must lie in (0, 1]')
    ids = sorted(scene.scene_id for scene in scenes)
    if not ids:
        return Selection([], False)
    count = max(1, int(round(fraction * len(ids))))
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(ids), size=count, replace=False)

    return Selection([ids[i] for i in sorted(picked)], False)


def write_reports(
    reports: Sequence[MetricReport],
    json_path: Union[str, Path],
    csv_path: Union[str, Path] = None,
) -> None:
    """
    Writes the per-scene reports as JSON and, optionally, the corpus mean
    and standard deviation of every score as CSV
    """

    documents = [report.as_dict() for report in reports]
    with open(json_path, 'w', encoding='utf-8') as handle:
        json.dump(documents, handle, indent=2, sort_keys=True)
        handle.write('\n')
    if csv_path is None:
        return

    frame = pd.DataFrame(
        [
            {
                'realism_meta': report.realism_meta,
                'kinematic': report.kinematic,
                'interactive': report.interactive,
                'map_adherence': report.map_adherence,
                'minade': report.minade,
                'coverage': report.coverage,
                **report.sub_scores,
            }
            for report in reports
        ]
    )
    summary = frame.astype(float).agg(['mean', 'std']).T
    summary.index.name = 'metric'
    summary.to_csv(csv_path, float_format='%.6f')

