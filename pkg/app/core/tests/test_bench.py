import os
import tempfile
from unittest import skipUnless

import pandas as pd

from django.test import SimpleTestCase

from core.bench import BenchRow, bench, synthetic_scene, write_bench
from core.diffusion import build_linear_schedule
from core.exceptions import ConfigError
from core.scene import pack_features

from .test_diffusion import tiny_model
from .test_training import SLOW_TESTS


class TestSyntheticScene(SimpleTestCase):
    """Tests for the benchmark scene"""

    def test_sizes(self) -> None:
        """Tests the agent and map element counts"""

        scene = synthetic_scene(50, 150)

        self.assertEqual(len(scene.agents), 50)
        self.assertEqual(len(scene.map), 150)
        self.assertEqual(scene.scene_id, 'bench-50x150')
        self.assertFalse(pack_features(scene).heading_fallback.any())

    def test_deterministic(self) -> None:
        """Tests if one seed yields the same speeds"""

        first = synthetic_scene(3, 2, seed=1)
        second = synthetic_scene(3, 2, seed=1)

        for a, b in zip(first.agents, second.agents):
            self.assertEqual(
                a.history.control_points.tolist(),
                b.history.control_points.tolist(),
            )

    def test_needs_an_agent(self) -> None:
        """Tests what happens when no agent is requested"""

        with self.assertRaises(ConfigError):
            synthetic_scene(0, 10)


class TestBench(SimpleTestCase):
    """Tests for the latency benchmark"""

    def test_rows(self) -> None:
        """Tests if one row is timed per step count"""

        rows = bench(
            synthetic_scene(4, 6),
            tiny_model(),
            build_linear_schedule(50),
            k_list=(1, 5),
            n_samples=2,
        )

        self.assertEqual([row.k for row in rows], [1, 5])
        self.assertTrue(all(row.ms > 0 for row in rows))

    def test_more_steps_take_longer(self) -> None:
        """Tests if 50 DDIM steps take longer than 1"""

        rows = bench(
            synthetic_scene(8, 12),
            tiny_model(),
            build_linear_schedule(50),
            k_list=(1, 50),
            n_samples=2,
        )

        self.assertGreater(rows[1].ms, rows[0].ms)

    @skipUnless(SLOW_TESTS, 'set EPD_SLOW_TESTS=1 to run')
    def test_latency_grows_with_steps(self) -> None:
        """Tests if the median latency rises strictly over K = 1 to 100"""

        rows = bench(
            synthetic_scene(20, 40),
            tiny_model(steps=100),
            build_linear_schedule(100),
            k_list=(1, 2, 5, 10, 100),
            n_samples=6,
            repeats=7,
        )
        latencies = [row.ms for row in rows]

        self.assertEqual(latencies, sorted(latencies))
        self.assertEqual(len(set(latencies)), len(latencies))

    def test_too_few_repeats(self) -> None:
        """Tests what happens when fewer than 5 repeats are requested"""

        with self.assertRaises(ConfigError):
            bench(
                synthetic_scene(1, 1),
                tiny_model(),
                build_linear_schedule(50),
                repeats=3,
            )

    def test_write_bench(self) -> None:
        """Tests the K,ms table"""

        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'bench.csv')
            write_bench([BenchRow(1, 2.5), BenchRow(10, 12.25)], path)
            frame = pd.read_csv(path)

        self.assertEqual(list(frame.columns), ['K', 'ms'])
        self.assertEqual(frame['K'].tolist(), [1, 10])
        self.assertEqual(frame['ms'].tolist(), [2.5, 12.25])
