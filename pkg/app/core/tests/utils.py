from typing import Sequence

import numpy as np

from core.datagen import straight_lane
from core.poly import PolyCurve, elevate_degree
from core.scene import (
    FUTURE_DEGREE,
    FUTURE_DURATION,
    HISTORY_DEGREE,
    HISTORY_DURATION,
    Agent,
    AgentCategory,
    MapCategory,
    MapElement,
    Scene,
)


def straight_curve(
    start: Sequence[float],
    velocity: Sequence[float],
    duration: float,
    degree: int,
) -> PolyCurve:
    """Creates a uniform straight motion as a curve of the given degree"""

    start = np.asarray(start, dtype=float)
    curve = PolyCurve(
        [start, start + duration * np.asarray(velocity, dtype=float)],
        duration,
    )
    while curve.degree < degree:
        curve = elevate_degree(curve)

    return curve


def create_agent(
    agent_id: str = 'a',
    end: Sequence[float] = (0.0, 0.0),
    velocity: Sequence[float] = (5.0, 0.0),
    with_future: bool = True,
    category: AgentCategory = AgentCategory.VEHICLE,
) -> Agent:
    """Creates an Agent in uniform motion whose history ends at end"""

    end = np.asarray(end, dtype=float)
    velocity = np.asarray(velocity, dtype=float)
    history = straight_curve(
        end - HISTORY_DURATION * velocity,
        velocity,
        HISTORY_DURATION,
        HISTORY_DEGREE,
    )
    future = None
    if with_future:
        future = straight_curve(
            end, velocity, FUTURE_DURATION, FUTURE_DEGREE
        )

    return Agent(agent_id, category, history, future=future)


def create_scene(
    scene_id: str = 'scene',
    agents: Sequence[Agent] = None,
    with_map: bool = True,
    **params: float,
) -> Scene:
    """Creates a Scene with two agents and a straight lane by default"""

    if agents is None:
        agents = [
            create_agent('a', (0.0, 0.0), (5.0, 0.0)),
            create_agent('b', (20.0, 3.5), (-4.0, 0.0)),
        ]
    elements = []
    if with_map:
        elements = [
            MapElement(
                'lane-0',
                MapCategory.LANE_CENTER,
                straight_lane([-60.0, 0.0], [60.0, 0.0]),
            ),
            MapElement(
                'lane-1',
                MapCategory.LANE_CENTER,
                straight_lane([60.0, 3.5], [-60.0, 3.5]),
            ),
        ]

    return Scene(scene_id, agents, elements, **params)
