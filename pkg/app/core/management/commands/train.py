from argparse import ArgumentParser
from pathlib import Path
from typing import Any, Dict

import pandas as pd

from core.config import RunConfig
from core.management.base import ExperimentCommand, read_scenes
from core.models import TrainingRun
from core.net.checkpoint import checkpoint_save
from core.net.representation import REPRESENTATIONS
from core.net.train import EpochLog, train


class Command(ExperimentCommand):
    help = 'Trains the scene diffusion model on a scene corpus'
    name = 'train'
    seed_required = True

    def add_command_arguments(self, parser: ArgumentParser) -> None:
        parser.add_argument(
            '--scenes', help='training corpus (JSON Lines)'
        )
        parser.add_argument(
            '--representation',
            choices=REPRESENTATIONS,
            help=(
                'input and target representation; train only, sample, '
                'eval and plot read it from the checkpoint'
            ),
        )
        parser.add_argument('--epochs', type=int, help='training epochs')
        parser.add_argument(
            '--checkpoint-name',
            default='model.ckpt',
            help='name of the checkpoint inside --out',
        )
        parser.add_argument(
            '--record',
            action='store_true',
            help='store the run and its epoch losses in the database',
        )
        parser.add_argument('--name', default='', help='name of the run')

    def overrides(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {
            'model': {'representation': options.get('representation')},
            'train': {'epochs': options.get('epochs')},
        }

    def paths(self, options: Dict[str, Any]) -> Dict[str, Any]:
        return {'out': options['out'], 'scenes': options.get('scenes')}

    def run(
        self, config: RunConfig, options: Dict[str, Any], out: Path
    ) -> None:
        corpus = read_scenes(options.get('scenes'))
        result = train(
            corpus, config.model, config.train, config.diffusion.schedule()
        )
        checkpoint = out / options['checkpoint_name']
        checkpoint_save(result.model, checkpoint)
        pd.DataFrame(result.history, columns=EpochLog._fields).to_csv(
            out / 'history.csv', index=False
        )
        self.write_config(config, out)
        if options['record']:
            run = TrainingRun.objects.record(
                result,
                name=options['name'] or checkpoint.stem,
                config=config.as_dict(),
                seed=config.seed,
                checkpoint_path=str(checkpoint),
            )
            self.stdout.write(f'recorded run {run.pk}')
        self.stdout.write(
            f'{result.model.parameter_count} parameters, '
            f'checkpoint written to {checkpoint}'
        )
