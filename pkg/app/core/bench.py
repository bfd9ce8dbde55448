"""Inference latency as a function of the number of DDIM steps"""
import logging
import time
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch

from core.datagen import straight_lane
from core.diffusion import NoiseSchedule, generate
from core.exceptions import ConfigError
from core.net.model import SceneDiffuser
from core.poly import PolyCurve, elevate_degree
from core.scene import (
    HISTORY_DEGREE,
    HISTORY_DURATION,
    Agent,
    AgentCategory,
    MapCategory,
    MapElement,
    Scene,
)

logger = logging.getLogger(__name__)

DEFAULT_STEPS = (1, 2, 5, 10, 100)
WARMUP_RUNS = 2
MIN_REPEATS = 5


class BenchRow(NamedTuple):
    k: int
    ms: float


def synthetic_scene(n_agents: int, n_map: int, seed: int = 0) -> Scene:
    """
    A grid of parallel straight lanes with agents driving along them at
    constant speed, sized by agent and map element count
    """

    if n_agents < 1 or n_map < 0:
        raise ConfigError('need at least one agent and no negative map size')
    rng = np.random.default_rng(seed)
    elements = []
    for index in range(n_map):
        y = 4.0 * (index % 50)
        x = 80.0 * (index // 50)
        elements.append(
            MapElement(
                f'lane-{index}',
                MapCategory.LANE_CENTER,
                straight_lane([x, y], [x + 80.0, y]),
            )
        )
    agents = []
    for index in range(n_agents):
        start = np.array([8.0 * (index // 25), 4.0 * (index % 25)])
        speed = rng.uniform(3.0, 12.0)
        curve = PolyCurve(
            [start, start + [speed * HISTORY_DURATION, 0.0]],
            HISTORY_DURATION,
        )
        while curve.degree < HISTORY_DEGREE:
            curve = elevate_degree(curve)
        agents.append(Agent(f'agent-{index}', AgentCategory.VEHICLE, curve))

    return Scene(f'bench-{n_agents}x{n_map}', agents, elements)


def bench(
    scene: Scene,
    model: SceneDiffuser,
    sched: NoiseSchedule,
    k_list: Sequence[int] = DEFAULT_STEPS,
    n_samples: int = 6,
    repeats: int = MIN_REPEATS,
    threads: Optional[int] = None,
) -> List[BenchRow]:
    """
    Median wall-clock time of generating n_samples futures for the scene,
    per DDIM step count, after two warmup runs
    """

    if repeats < MIN_REPEATS:
        raise ConfigError(f'repeats must be at least {MIN_REPEATS}')
    if threads:
        torch.set_num_threads(int(threads))
    rows = []
    for k in k_list:
        for _ in range(WARMUP_RUNS):
            generate(scene, model, sched, k, n_samples, 0)
        timings = []
        for _ in range(repeats):
            start = time.perf_counter()
            generate(scene, model, sched, k, n_samples, 0)
            timings.append(time.perf_counter() - start)
        row = BenchRow(int(k), 1000.0 * float(np.median(timings)))
        logger.info('K=%d: %.2f ms per scene', row.k, row.ms)
        rows.append(row)

    return rows


def write_bench(rows: Sequence[BenchRow], path: Union[str, Path]) -> None:
    """Writes the latency table as a K,ms CSV"""

    frame = pd.DataFrame(rows, columns=['K', 'ms'])
    frame.to_csv(path, index=False, float_format='%.3f')
