import logging
from argparse import ArgumentParser
from pathlib import Path
from typing import Any, Dict

from django.conf import settings

from core.config import RunConfig
from core.datagen import SHIFT_PRESET, generate_corpus
from core.management.base import ExperimentCommand
from core.scene import scene_io_write

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = 'Generates a seeded synthetic scene corpus as JSON Lines'
    name = 'datagen'
    seed_required = True

    def add_command_arguments(self, parser: ArgumentParser) -> None:
        parser.add_argument('--n-scenes', type=int, help='corpus size')
        parser.add_argument(
            '--workers',
            type=int,
            help='worker processes (default: EPD_THREADS or 1)',
        )
        parser.add_argument(
            '--shift',
            action='store_true',
            help=(
                'out-of-distribution corpus: faster agents, sharper '
                'turns and a 4.1 s evaluation horizon'
            ),
        )
        parser.add_argument(
            '--filename',
            default='scenes.jsonl',
            help='name of the written file inside --out',
        )

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        datagen = {'n_scenes': options.get('n_scenes')}
        if options.get('shift'):
            datagen.update(SHIFT_PRESET)

        return {'datagen': datagen}

    def run(
        self, config: RunConfig, options: Dict[str, Any], out: Path
    ) -> None:
        workers = options.get('workers') or settings.EPD_THREADS or 1
        scenes = generate_corpus(config.datagen, workers=workers)
        path = out / options['filename']
        scene_io_write(scenes, path)
        self.write_config(config, out)
        shortfalls = sum(
            'placement_shortfall' in scene.flags for scene in scenes
        )
        if shortfalls:
            logger.warning(
                '%d scenes hold fewer agents than drawn', shortfalls
            )
        self.stdout.write(f'{len(scenes)} scenes written to {path}')
