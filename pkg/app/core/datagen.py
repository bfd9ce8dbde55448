"""
Deterministic synthetic traffic scenes.

Each scene is a small road layout of cubic lane centers and crosswalks in a
random global pose, populated with agents that follow the lanes with smooth
speed profiles. Histories are fitted from noisy 10 Hz samples, futures from
noiseless ones.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.exceptions import ConfigError
from core.metrics import rectangles_overlap
from core.poly import (
    FitConfig,
    PolyCurve,
    eval_curve,
    fit_bayesian,
    rigid_transform,
)
from core.scene import (
    FUTURE_DEGREE,
    FUTURE_DURATION,
    HISTORY_DEGREE,
    HISTORY_DURATION,
    SAMPLE_DT,
    DEFAULT_FOOTPRINTS,
    Agent,
    AgentCategory,
    MapCategory,
    MapElement,
    Scene,
)

logger = logging.getLogger(__name__)

MANEUVERS = ('lane_keep', 'left_turn', 'right_turn', 'stop')
LANE_SHAPES = ('straight', 'arc', 's_curve', 'crosswalk')
ARC_FACTOR = 4.0 / 3.0 * np.tan(np.pi / 8.0)
LANE_WIDTH = 3.5
ROAD_HALF_LENGTH = 60.0
PATH_EXTENSION = 150.0
MAX_ACCEL = 3.0
MAX_JERK = 5.0
PLACEMENT_ATTEMPTS = 100
PLACEMENT_MARGIN = 0.5
TURN_SPEED_CAP = 7.0
SHIFT_PRESET = {
    'speed_scale': 1.4,
    'curvature_scale': 1.6,
    'eval_horizon_s': 4.1,
}

SPEED_RANGES = {
    AgentCategory.EGO: (5.0, 12.0),
    AgentCategory.VEHICLE: (5.0, 12.0),
    AgentCategory.CYCLIST: (3.0, 6.0),
    AgentCategory.PEDESTRIAN: (1.0, 1.6),
}


@dataclass(frozen=True)
class DatagenConfig:
    """Size, mix and noise of a synthetic corpus"""

    n_scenes: int = 500
    agents_per_scene: Tuple[int, int] = (3, 8)
    map_elements: Tuple[int, int] = (5, 9)
    maneuver_mix: Dict[str, float] = field(
        default_factory=lambda: {
            'lane_keep': 0.55,
            'left_turn': 0.15,
            'right_turn': 0.15,
            'stop': 0.15,
        }
    )
    lane_shapes: Dict[str, float] = field(
        default_factory=lambda: {
            'straight': 0.35,
            'arc': 0.35,
            's_curve': 0.15,
            'crosswalk': 0.15,
        }
    )
    history_noise_std: float = 0.05
    speed_change_prob: float = 0.4
    late_appearance_prob: float = 0.1
    speed_scale: float = 1.0
    curvature_scale: float = 1.0
    eval_horizon_s: float = FUTURE_DURATION
    seed: int = 0
    fit: FitConfig = FitConfig()

    def __post_init__(self) -> None:
        """Validates ranges and probability tables"""

        object.__setattr__(
            self, 'agents_per_scene', tuple(self.agents_per_scene)
        )
        object.__setattr__(self, 'map_elements', tuple(self.map_elements))
        if isinstance(self.fit, dict):
            object.__setattr__(self, 'fit', FitConfig(**self.fit))
        if self.n_scenes < 0:
            raise ConfigError('n_scenes must be non-negative')
        for name in ('agents_per_scene', 'map_elements'):
            low, high = getattr(self, name)
            if not 1 <= low <= high:
                raise ConfigError(f'{name} must be a non-empty range')
        _check_probabilities('maneuver_mix', self.maneuver_mix, MANEUVERS)
        _check_probabilities('lane_shapes', self.lane_shapes, LANE_SHAPES)
        if self.history_noise_std < 0:
            raise ConfigError('history_noise_std must be non-negative')
        for name in ('speed_change_prob', 'late_appearance_prob'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f'{name} must lie in [0, 1]')
        for name in ('speed_scale', 'curvature_scale'):
            if getattr(self, name) <= 0:
                raise ConfigError(f'{name} must be positive')
        if not 0 < self.eval_horizon_s <= FUTURE_DURATION:
            raise ConfigError(
                f'eval_horizon_s must lie in (0, {FUTURE_DURATION}]'
            )


def shifted_config(cfg: DatagenConfig) -> DatagenConfig:
    """
    Out-of-distribution variant of cfg: faster agents on sharper turns,
    evaluated over a shorter horizon
    """

    return replace(cfg, **SHIFT_PRESET)


def _check_probabilities(name: str, table: dict, keys) -> None:
    unknown = set(table) - set(keys)
    if unknown:
        raise ConfigError(f'{name}: unknown keys {sorted(unknown)}')
    values = np.array([table.get(key, 0.0) for key in keys])
    if np.any(values < 0) or abs(values.sum() - 1.0) > 1e-9:
        raise ConfigError(f'{name}: probabilities must sum to 1')


def _probabilities(table: dict, keys) -> np.ndarray:
    return np.array([table.get(key, 0.0) for key in keys])


def straight_lane(start, end) -> PolyCurve:
    """Cubic with equally spaced control points on the segment"""

    start, end = np.asarray(start, float), np.asarray(end, float)
    weights = np.linspace(0.0, 1.0, 4)[:, None]

    return PolyCurve((1.0 - weights) * start + weights * end)


def quarter_arc(
    start, heading: float, radius: float, left: bool
) -> PolyCurve:
    """Cubic approximation of a 90 degree turn starting at start"""

    start = np.asarray(start, float)
    turn = 1.0 if left else -1.0
    tangent = np.array([np.cos(heading), np.sin(heading)])
    normal = turn * np.array([-tangent[1], tangent[0]])
    center = start + radius * normal
    end = center + radius * tangent
    end_tangent = normal

    return PolyCurve(
        np.stack(
            [
                start,
                start + ARC_FACTOR * radius * tangent,
                end - ARC_FACTOR * radius * end_tangent,
                end,
            ]
        )
    )


def s_curve(start, length: float, offset: float) -> PolyCurve:
    """Lateral shift by offset over length, starting and ending along +x"""

    x, y = np.asarray(start, float)

    return PolyCurve(
        [
            [x, y],
            [x + length / 2.0, y],
            [x + length / 2.0, y + offset],
            [x + length, y + offset],
        ]
    )


def generate_map(cfg: DatagenConfig, rng: np.random.Generator):
    """
    Returns the map elements of one layout: a main straight lane plus lanes,
    turns and crosswalks drawn from cfg.lane_shapes, in a random pose
    """

    low, high = cfg.map_elements
    count = int(rng.integers(low, high + 1))
    shape_p = _probabilities(cfg.lane_shapes, LANE_SHAPES)
    kinds = ['straight'] + [
        LANE_SHAPES[i] for i in rng.choice(4, size=count - 1, p=shape_p)
    ]
    curves: List[Tuple[str, MapCategory, PolyCurve]] = []
    straight_count = arc_count = 0
    for index, kind in enumerate(kinds):
        if kind == 'straight':
            lane = straight_count // 2
            side = -1.0 if straight_count % 2 == 0 else 1.0
            y = side * (LANE_WIDTH / 2.0 + lane * LANE_WIDTH)
            ends = [[-ROAD_HALF_LENGTH, y], [ROAD_HALF_LENGTH, y]]
            if side > 0:
                ends.reverse()
            curve = straight_lane(*ends)
            category = MapCategory.LANE_CENTER
            straight_count += 1
        elif kind == 'arc':
            left = arc_count % 2 == 0
            radius = rng.uniform(15.0, 25.0) if left else rng.uniform(8, 15)
            radius /= cfg.curvature_scale
            start_x = rng.uniform(-15.0, 5.0)
            curve = quarter_arc(
                [start_x, -LANE_WIDTH / 2.0], 0.0, radius, left
            )
            category = MapCategory.LANE_CENTER
            arc_count += 1
        elif kind == 's_curve':
            curve = s_curve(
                [rng.uniform(-40.0, 0.0), -LANE_WIDTH / 2.0],
                rng.uniform(30.0, 50.0) / cfg.curvature_scale,
                -LANE_WIDTH,
            )
            category = MapCategory.LANE_CENTER
        else:
            x = rng.uniform(-40.0, 40.0)
            ends = [[x, -8.0], [x, 8.0]]
            if rng.random() < 0.5:
                ends.reverse()
            curve = straight_lane(*ends)
            category = MapCategory.CROSSWALK
        curves.append((f'{kind}-{index}', category, curve))

    rotation = rng.uniform(-np.pi, np.pi)
    translation = rng.uniform(-50.0, 50.0, size=2)

    return [
        MapElement(
            name, category, rigid_transform(curve, rotation, translation)
        )
        for name, category, curve in curves
    ]


class LanePath:
    """Arc-length parameterized polyline along a curve with extensions"""

    def __init__(self, curve: PolyCurve, samples: int = 400) -> None:
        points = eval_curve(curve, np.linspace(0.0, 1.0, samples))
        start_dir = self._direction(points[1] - points[0])
        end_dir = self._direction(points[-1] - points[-2])
        before = points[0] - PATH_EXTENSION * start_dir
        after = points[-1] + PATH_EXTENSION * end_dir
        self.points = np.vstack([before, points, after])
        steps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        keep = np.concatenate([[True], steps > 1e-9])
        self.points = self.points[keep]
        steps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        self.arc = np.concatenate([[0.0], np.cumsum(steps)])
        self.curve_start = PATH_EXTENSION
        self.curve_length = self.arc[-1] - 2 * PATH_EXTENSION

    @staticmethod
    def _direction(vector: np.ndarray) -> np.ndarray:
        return vector / np.linalg.norm(vector)

    def position(self, s: np.ndarray) -> np.ndarray:
        """Positions at arc lengths s"""

        s = np.clip(s, 0.0, self.arc[-1])

        return np.stack(
            [
                np.interp(s, self.arc, self.points[:, 0]),
                np.interp(s, self.arc, self.points[:, 1]),
            ],
            axis=-1,
        )

    def heading(self, s: float) -> float:
        """Tangent direction at arc length s"""

        ahead = self.position(s + 0.05) - self.position(s - 0.05)

        return float(np.arctan2(ahead[1], ahead[0]))


@dataclass(frozen=True)
class SpeedProfile:
    """Constant speed with at most one smoothstep change from v0 to v1"""

    v0: float
    v1: float
    t_start: float = 0.0
    t_change: float = 1.0

    @classmethod
    def comfortable(cls, v0: float, v1: float, t_start: float):
        """Shortest change respecting the acceleration and jerk caps"""

        delta = abs(v1 - v0)
        t_change = max(1.5 * delta / MAX_ACCEL, np.sqrt(6 * delta / MAX_JERK))

        return cls(v0, v1, t_start, max(t_change, 1e-3))

    def distance(self, t: np.ndarray) -> np.ndarray:
        """Distance travelled since t=0"""

        t = np.asarray(t, dtype=float)
        x = np.clip((t - self.t_start) / self.t_change, 0, 1)
        # integral of the smoothstep, then full speed change after the ramp
        ramp = self.t_change * (x ** 3 - 0.5 * x ** 4)
        ramp = ramp + np.maximum(t - self.t_start - self.t_change, 0.0)

        return self.v0 * t + (self.v1 - self.v0) * ramp

    def speed(self, t: np.ndarray) -> np.ndarray:
        """Speed at time t"""

        x = np.clip((np.asarray(t) - self.t_start) / self.t_change, 0, 1)

        return self.v0 + (self.v1 - self.v0) * (3 * x ** 2 - 2 * x ** 3)


def _pick_lane(elements, maneuver, category, rng) -> Optional[MapElement]:
    crosswalks = [e for e in elements if e.category == MapCategory.CROSSWALK]
    lanes = [e for e in elements if e.category == MapCategory.LANE_CENTER]
    if category == AgentCategory.PEDESTRIAN:
        pool = crosswalks
    elif maneuver in ('left_turn', 'right_turn'):
        prefix = 'arc-'
        pool = [
            e
            for e in lanes
            if e.id.startswith(prefix) and _turns_left(e) == (
                maneuver == 'left_turn'
            )
        ]
    else:
        pool = [e for e in lanes if not e.id.startswith('arc-')]
    if not pool:
        return None

    return pool[int(rng.integers(len(pool)))]


def _turns_left(element: MapElement) -> bool:
    points = element.geometry.control_points
    first, last = points[1] - points[0], points[3] - points[2]

    return first[0] * last[1] - first[1] * last[0] > 0


def _speed_profile(category, maneuver, rng, cfg) -> SpeedProfile:
    low, high = (v * cfg.speed_scale for v in SPEED_RANGES[category])
    cap = TURN_SPEED_CAP * cfg.speed_scale
    if maneuver in ('left_turn', 'right_turn'):
        high = min(high, cap)
        low = min(low, high * 0.6)
    if maneuver == 'stop':
        high = min(high, cap)
        low = min(low, high)
        v0 = rng.uniform(low, high)
        return SpeedProfile.comfortable(v0, 0.0, rng.uniform(5.0, 5.5))
    v0 = rng.uniform(low, high)
    if maneuver == 'lane_keep' and rng.random() < cfg.speed_change_prob:
        v1 = float(np.clip(v0 * rng.uniform(0.6, 1.3), 0.5, high))
        return SpeedProfile.comfortable(v0, v1, rng.uniform(0.0, 9.0))

    return SpeedProfile(v0, v0)


def _category(index: int, rng) -> AgentCategory:
    if index == 0:
        return AgentCategory.EGO
    draw = rng.random()
    if draw < 0.7:
        return AgentCategory.VEHICLE
    if draw < 0.85:
        return AgentCategory.CYCLIST

    return AgentCategory.PEDESTRIAN


def _start_offset(element, path, profile, rng) -> float:
    if element.category == MapCategory.CROSSWALK:
        return path.curve_start + rng.uniform(-2.0, 4.0)
    if element.id.startswith('straight-'):
        return path.curve_start + rng.uniform(20.0, path.curve_length - 60)
    enter_time = rng.uniform(3.0, 8.0)

    return path.curve_start - float(profile.distance(enter_time))


def _fit_agent(agent_id, category, path, s0, profile, cfg, rng) -> Agent:
    total = HISTORY_DURATION + FUTURE_DURATION
    times = np.round(np.arange(0.0, total + 1e-9, SAMPLE_DT), 10)
    truth = path.position(s0 + profile.distance(times))
    history_count = int(round(HISTORY_DURATION / SAMPLE_DT)) + 1

    first = 0.0
    if rng.random() < cfg.late_appearance_prob:
        first = round(float(rng.uniform(1.0, 3.0)), 1)
    observed = (times >= first - 1e-9) & (times <= HISTORY_DURATION + 1e-9)
    noisy = truth[observed] + rng.normal(
        0.0, cfg.history_noise_std, size=truth[observed].shape
    )
    history_fit = replace(
        cfg.fit, obs_noise_std=max(cfg.history_noise_std, 1e-4)
    )
    history = fit_bayesian(
        times[observed], noisy, HISTORY_DEGREE, history_fit, HISTORY_DURATION
    )

    future_times = times[history_count - 1 :] - HISTORY_DURATION
    future_truth = truth[history_count - 1 :]
    shift = eval_curve(history, HISTORY_DURATION) - future_truth[0]
    future = fit_bayesian(
        future_times,
        future_truth + shift,
        FUTURE_DEGREE,
        cfg.fit,
        FUTURE_DURATION,
    )

    return Agent(
        id=agent_id,
        category=category,
        history=history,
        time_window=(first, HISTORY_DURATION),
        future=future,
    )


def generate_scene(
    cfg: DatagenConfig, rng: np.random.Generator, scene_id: str = 'scene'
) -> Scene:
    """Generates one scene with ground-truth futures"""

    elements = generate_map(cfg, rng)
    low, high = cfg.agents_per_scene
    target = int(rng.integers(low, high + 1))
    maneuver_p = _probabilities(cfg.maneuver_mix, MANEUVERS)
    agents: List[Agent] = []
    boxes: List[Tuple[np.ndarray, float, Tuple[float, float]]] = []
    flags = []
    for index in range(target):
        placed = None
        for _ in range(PLACEMENT_ATTEMPTS):
            category = _category(index, rng)
            maneuver = MANEUVERS[rng.choice(len(MANEUVERS), p=maneuver_p)]
            element = _pick_lane(elements, maneuver, category, rng)
            if element is None and category == AgentCategory.PEDESTRIAN:
                category = AgentCategory.VEHICLE
                element = _pick_lane(elements, maneuver, category, rng)
            if element is None:
                maneuver = 'stop' if maneuver == 'stop' else 'lane_keep'
                element = _pick_lane(elements, maneuver, category, rng)
            path = LanePath(element.geometry)
            profile = _speed_profile(category, maneuver, rng, cfg)
            s0 = _start_offset(element, path, profile, rng)
            position = path.position(s0)
            heading = path.heading(s0)
            length, width = DEFAULT_FOOTPRINTS[category]
            size = (length + PLACEMENT_MARGIN, width + PLACEMENT_MARGIN)
            if any(
                rectangles_overlap(position, heading, size, *box)
                for box in boxes
            ):
                continue
            placed = (category, path, s0, profile)
            boxes.append((position, heading, size))
            break
        if placed is None:
            logger.warning(
                'scene %s: placed %d of %d agents', scene_id, index, target
            )
            flags.append('placement_shortfall')
            break
        category, path, s0, profile = placed
        agents.append(
            _fit_agent(
                f'agent-{index}', category, path, s0, profile, cfg, rng
            )
        )

    return Scene(
        scene_id,
        agents,
        elements,
        eval_horizon_s=cfg.eval_horizon_s,
        flags=flags,
    )


def _scene_for_index(args) -> Scene:
    cfg, index = args
    rng = np.random.default_rng([cfg.seed, index])

    return generate_scene(cfg, rng, scene_id=f'scene-{cfg.seed}-{index:05d}')


def generate_corpus(cfg: DatagenConfig, workers: int = 1) -> List[Scene]:
    """
    Generates cfg.n_scenes scenes. Every scene draws from its own stream
    seeded by (seed, index), so serial and parallel runs agree.
    """

    jobs = [(cfg, index) for index in range(cfg.n_scenes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            scenes = list(pool.map(_scene_for_index, jobs, chunksize=8))
    else:
        scenes = [_scene_for_index(job) for job in jobs]
    logger.info('generated %d scenes (seed %d)', len(scenes), cfg.seed)

    return scenes
