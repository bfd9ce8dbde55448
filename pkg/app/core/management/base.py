import logging
import os
from argparse import ArgumentParser
from pathlib import Path
from typing import Any, Dict, List, Optional

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from core.config import RunConfig, load_config
from core.exceptions import ConfigError, EPDError
from core.net.checkpoint import checkpoint_load
from core.net.model import SceneDiffuser
from core.scene import Scene, scene_io_read

logger = logging.getLogger(__name__)


class ExperimentCommand(BaseCommand):
    """
    Base class of the experiment commands. Resolves the configuration
    document and flags into a RunConfig and maps library errors onto exit
    codes: 2 for configuration errors, 3 for everything else.
    """

    name = ''
    seed_required = False

    def add_arguments(self, parser: ArgumentParser) -> None:
        """Adds the flags shared by every experiment command"""

        parser.add_argument(
            '--config',
            help='JSON configuration document (default: EPD_CONFIG)',
        )
        parser.add_argument('--seed', type=int, help='random seed')
        parser.add_argument(
            '--out', default='.', help='output directory (default: .)'
        )
        parser.add_argument(
            '--print-config',
            action='store_true',
            help='print the resolved configuration and exit',
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser: ArgumentParser) -> None:
        """Adds the flags of a particular command"""

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        """Section values taken from the command's flags"""

        return {}

    def paths(self, options: Dict[str, Any]) -> Dict[str, Any]:
        """Input and output paths recorded in the RunConfig"""

        return {'out': options['out']}

    def resolve_config(self, options: Dict[str, Any]) -> RunConfig:
        """Loads the configuration document and applies the flags"""

        path = options.get('config')
        if path is None and os.path.exists(settings.EPD_CONFIG):
            path = settings.EPD_CONFIG
        config = load_config(path, self.name)
        if options.get('seed') is None and self.seed_required:
            if not options.get('print_config'):
                raise ConfigError(f'{self.name} requires --seed')

        return config.with_overrides(
            seed=options.get('seed'),
            paths=self.paths(options),
            **self.overrides(options),
        )

    def handle(self, *args: Any, **options: Any) -> Optional[str]:
        """Runs the command, translating library errors into exit codes"""

        try:
            config = self.resolve_config(options)
            if options['print_config']:
                self.stdout.write(config.dumps())
                return None
            out = Path(options['out'])
            out.mkdir(parents=True, exist_ok=True)
            logger.info('%s started (seed %s)', self.name, config.seed)
            self.run(config, options, out)
            logger.info('%s finished', self.name)
        except ConfigError as error:
            raise CommandError(str(error), returncode=2)
        except (EPDError, OSError) as error:
            raise CommandError(str(error), returncode=3)

        return None

    def run(
        self, config: RunConfig, options: Dict[str, Any], out: Path
    ) -> None:
        raise NotImplementedError

    def write_config(self, config: RunConfig, out: Path) -> None:
        """Stores the resolved configuration next to the outputs"""

        with open(out / f'{self.name}-config.json', 'w') as handle:
            handle.write(config.dumps())
            handle.write('\n')


def read_scenes(path: Optional[str]) -> List[Scene]:
    """Reads the scene file given with --scenes"""

    if not path:
        raise ConfigError('--scenes is required')

    return scene_io_read(path)


def load_model(
    path: Optional[str], config: RunConfig
) -> SceneDiffuser:
    """Loads --checkpoint, falling back to EPD_CHECKPOINT"""

    path = path or settings.EPD_CHECKPOINT
    if not path:
        raise ConfigError('--checkpoint is required')
    model = checkpoint_load(path)
    if model.config.steps != config.diffusion.steps:
        raise ConfigError(
            f'checkpoint uses {model.config.steps} diffusion steps, '
            f'config has {config.diffusion.steps}'
        )

    return model