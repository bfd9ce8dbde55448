from argparse import ArgumentParser
from pathlib import Path
from typing import Any, Dict

from core.config import RunConfig
from core.management.base import ExperimentCommand, read_scenes
from core.metrics import select_challenging, select_random

MODES = ('challenging', 'random')


class Command(ExperimentCommand):
    help = (
        'Lists the scenes on which the constant-velocity model scores the '
        'lowest realism, or a seeded random subset with --mode random'
    )
    name = 'select_hard'

    def add_command_arguments(self, parser: ArgumentParser) -> None:
        parser.add_argument('--scenes', help='scenes with ground truth')
        parser.add_argument(
            '--mode',
            choices=MODES,
            default='challenging',
            help='challenging: lowest CV realism; random: seeded subset',
        )
        parser.add_argument(
            '-n',
            type=int,
            default=10,
            help='number of scenes to pick (challenging mode)',
        )
        parser.add_argument(
            '--fraction',
            type=float,
            default=0.2,
            help='share of the corpus to pick (random mode, default: 0.2)',
        )
        parser.add_argument(
            '--horizon',
            type=float,
            help=(
                'scoring horizon in seconds, challenging mode '
                '(default: per scene)'
            ),
        )
        parser.add_argument(
            '--samples', type=int, help='samples per scene (default: 32)'
        )

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {'metric': {'n_samples': options.get('samples')}}

    def paths(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {'out': options['out'], 'scenes': options.get('scenes')}

    def run(
        self, config: RunConfig, options: Dict[str, Any], out: Path
    ) -> None:
        scenes = [
            scene
            for scene in read_scenes(options.get('scenes'))
            if scene.has_futures
        ]
        if options.get('mode') == 'random':
            seed = 0 if config.seed is None else config.seed
            selection = select_random(scenes, options['fraction'], seed)
        else:
            selection = select_challenging(
                scenes, options['n'], config.metric, options.get('horizon')
            )
        with open(out / 'hard.txt', 'w') as handle:
            for scene_id in selection.ids:
                handle.write(f'{scene_id}\n')
        self.write_config(config, out)
        for scene_id in selection.ids:
            self.stdout.write(scene_id)
