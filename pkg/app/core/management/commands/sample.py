import logging
from argparse import ArgumentParser
from pathlib import Path
from typing import Any, Dict

from core.config import RunConfig
from core.diffusion import generate
from core.management.base import ExperimentCommand, load_model, read_scenes
from core.metrics import constant_velocity_samples
from core.net.representation import POLYNOMIAL
from core.scene import samples_io_write

logger = logging.getLogger(__name__)

SAMPLERS = ('model', 'cv')


class Command(ExperimentCommand):
    help = 'Samples joint scene continuations and writes them as JSON Lines'
    name = 'sample'
    seed_required = True

    def add_command_arguments(self, parser: ArgumentParser) -> None:
        parser.add_argument('--scenes', help='scenes to continue')
        parser.add_argument('--checkpoint', help='trained model')
        parser.add_argument(
            '--samples', type=int, help='samples per scene (default: 32)'
        )
        parser.add_argument(
            '--ddim-steps', type=int, help='DDIM steps (default: 10)'
        )
        parser.add_argument(
            '--sampler', choices=SAMPLERS, default='model', help='sampler'
        )
        parser.add_argument(
            '--filename',
            default='samples.jsonl',
            help='name of the written file inside --out',
        )

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {
            'metric': {'n_samples': options.get('samples')},
            'diffusion': {'ddim_steps': options.get('ddim_steps')},
        }

    def paths(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {
            'out': options['out'],
            'scenes': options.get('scenes'),
            'checkpoint': options.get('checkpoint'),
        }

    def run(
        self, config: RunConfig, options: Dict[str, Any], out: Path
    ) -> None:
        scenes = read_scenes(options.get('scenes'))
        n_samples = config.metric.n_samples
        if options['sampler'] == 'cv':
            representation = POLYNOMIAL
            samples = [
                constant_velocity_samples(scene, n_samples)
                for scene in scenes
            ]
        else:
            model = load_model(options.get('checkpoint'), config)
            representation = model.config.representation
            sched = config.diffusion.schedule()
            samples = []
            for scene in scenes:
                samples.append(
                    generate(
                        scene,
                        model,
                        sched,
                        config.diffusion.ddim_steps,
                        n_samples,
                        config.seed,
                        config.diffusion.clip_x0,
                    )
                )
                logger.info('sampled scene %s', scene.scene_id)
        path = out / options['filename']
        samples_io_write(scenes, samples, representation, path)
        self.write_config(config, out)
        self.stdout.write(
            f'{n_samples} samples of {len(scenes)} scenes written to {path}'
        )
