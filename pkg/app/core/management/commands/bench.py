from argparse import ArgumentParser
from pathlib import Path
from typing import Any, Dict

from django.conf import settings

from core.bench import DEFAULT_STEPS, bench, synthetic_scene, write_bench
from core.config import RunConfig
from core.exceptions import ConfigError
from core.management.base import ExperimentCommand, load_model
from core.net.model import init_params


def step_list(value: str):
    """Parses a comma separated list of DDIM step counts"""

    try:
        return [int(item) for item in value.split(',') if item.strip()]
    except ValueError:
        raise ConfigError(f'invalid step list {value!r}')


class Command(ExperimentCommand):
    help = 'Measures generation latency for several DDIM step counts'
    name = 'bench'

    def add_command_arguments(self, parser: ArgumentParser) -> None:
        parser.add_argument(
            '--checkpoint',
            help='trained model (default: randomly initialized)',
        )
        parser.add_argument('--agents', type=int, default=50)
        parser.add_argument('--map-elements', type=int, default=150)
        parser.add_argument(
            '--steps',
            default=','.join(str(k) for k in DEFAULT_STEPS),
            help='comma separated DDIM step counts',
        )
        parser.add_argument('--samples', type=int, default=6)
        parser.add_argument('--repeats', type=int, default=5)
        parser.add_argument(
            '--threads',
            type=int,
            help='torch threads (default: EPD_THREADS)',
        )

    def run(
        self, config: RunConfig, options: Dict[str, Any], out: Path
    ) -> None:
        steps = step_list(options['steps'])
        for k in steps:
            if not 1 <= k <= config.diffusion.steps:
                raise ConfigError(
                    f'DDIM steps must lie in [1, {config.diffusion.steps}]'
                )
        if options.get('checkpoint'):
            model = load_model(options['checkpoint'], config)
        else:
            model = init_params(config.model, config.seed or 0)
        scene = synthetic_scene(
            options['agents'], options['map_elements'], config.seed or 0
        )
        rows = bench(
            scene,
            model,
            config.diffusion.schedule(),
            steps,
            options['samples'],
            options['repeats'],
            options.get('threads') or settings.EPD_THREADS,
        )
        write_bench(rows, out / 'bench.csv')
        self.write_config(config, out)
        for row in rows:
            self.stdout.write(f'{row.k},{row.ms:.3f}')
