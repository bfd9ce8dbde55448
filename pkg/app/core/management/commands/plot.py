from argparse import ArgumentParser
from pathlib import Path
from typing import Any, Dict

from core.config import RunConfig
from core.diffusion import generate
from core.exceptions import ConfigError
from core.management.base import ExperimentCommand, load_model, read_scenes
from core.plots import plot_kinematics, plot_scene
from core.scene import samples_io_read


class Command(ExperimentCommand):
    help = 'Draws a scene with its sampled futures and their kinematics'
    name = 'plot'

    def add_command_arguments(self, parser: ArgumentParser) -> None:
        parser.add_argument('--scenes', help='scene file')
        parser.add_argument(
            '--scene-id', help='scene to draw (default: the first)'
        )
        parser.add_argument(
            '--predictions', help='samples file written by sample'
        )
        parser.add_argument(
            '--checkpoint', help='sample with this model instead'
        )
        parser.add_argument('--samples', type=int, default=6)
        parser.add_argument(
            '--ddim-steps', type=int, help='DDIM steps (default: 10)'
        )
        parser.add_argument(
            '--agent', type=int, default=0, help='agent of the kinematics'
        )

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {'diffusion': {'ddim_steps': options.get('ddim_steps')}}

    def paths(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {
            'out': options['out'],
            'scenes': options.get('scenes'),
            'predictions': options.get('predictions'),
            'checkpoint': options.get('checkpoint'),
        }

    def run(
        self, config: RunConfig, options: Dict[str, Any], out: Path
    ) -> None:
        scenes = read_scenes(options.get('scenes'))
        scene_id = options.get('scene_id')
        if scene_id is None:
            if not scenes:
                raise ConfigError('the scene file is empty')
            scene = scenes[0]
        else:
            matches = [s for s in scenes if s.scene_id == scene_id]
            if not matches:
                raise ConfigError(f'scene {scene_id} not found')
            scene = matches[0]

        samples = []
        if options.get('predictions'):
            samples = samples_io_read(options['predictions']).get(
                scene.scene_id, []
            )
        elif options.get('checkpoint'):
            model = load_model(options['checkpoint'], config)
            samples = generate(
                scene,
                model,
                config.diffusion.schedule(),
                config.diffusion.ddim_steps,
                options['samples'],
                config.seed or 0,
                config.diffusion.clip_x0,
            )

        plot_scene(scene, samples, out / f'{scene.scene_id}.svg')
        agent = options['agent']
        if not 0 <= agent < len(scene.agents):
            raise ConfigError(f'agent index {agent} out of range')
        if samples or scene.agents[agent].future is not None:
            plot_kinematics(
                scene,
                samples,
                agent,
                config.metric,
                out / f'{scene.scene_id}-kinematics.svg',
            )
        self.stdout.write(f'plots of {scene.scene_id} written to {out}')
