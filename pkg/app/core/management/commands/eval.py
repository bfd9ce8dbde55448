import logging
from argparse import ArgumentParser
from pathlib import Path
from typing import Any, Dict

from core.config import RunConfig
from core.diffusion import generate
from core.exceptions import ConfigError, SceneDataError
from core.management.base import ExperimentCommand, load_model, read_scenes
from core.metrics import (
    compute_report,
    constant_velocity_samples,
    write_reports,
)
from core.models import SceneReport, TrainingRun
from core.scene import samples_io_read

logger = logging.getLogger(__name__)


class Command(ExperimentCommand):
    help = 'Scores sampled continuations against the ground truth'
    name = 'eval'

    def add_command_arguments(self, parser: ArgumentParser) -> None:
        parser.add_argument('--scenes', help='scenes with ground truth')
        parser.add_argument(
            '--predictions', help='samples file written by sample'
        )
        parser.add_argument(
            '--sampler',
            choices=('model', 'cv'),
            help='sample on the fly instead of reading --predictions',
        )
        parser.add_argument('--checkpoint', help='model for --sampler model')
        parser.add_argument(
            '--samples', type=int, help='samples per scene (default: 32)'
        )
        parser.add_argument(
            '--ddim-steps', type=int, help='DDIM steps (default: 10)'
        )
        parser.add_argument(
            '--horizon',
            type=float,
            help=(
                'evaluation horizon in seconds (default: per scene); '
                'select_hard takes it too'
            ),
        )
        parser.add_argument(
            '--record',
            action='store_true',
            help='store the reports in the database',
        )
        parser.add_argument(
            '--run', type=int, help='training run the reports belong to'
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
            'predictions': options.get('predictions'),
            'checkpoint': options.get('checkpoint'),
        }

    def _samples(self, config: RunConfig, options: Dict[str, Any], scenes):
        if options.get('predictions'):
            stored = samples_io_read(options['predictions'])
            missing = [s.scene_id for s in scenes if s.scene_id not in stored]
            if missing:
                raise SceneDataError(
                    f'no samples for scenes {", ".join(missing)}'
                )
            return [stored[scene.scene_id] for scene in scenes]
        if options.get('sampler') == 'cv':
            return [
                constant_velocity_samples(scene, config.metric.n_samples)
                for scene in scenes
            ]
        if options.get('sampler') == 'model':
            model = load_model(options.get('checkpoint'), config)
            sched = config.diffusion.schedule()
            return [
                generate(
                    scene,
                    model,
                    sched,
                    config.diffusion.ddim_steps,
                    config.metric.n_samples,
                    config.seed or 0,
                    config.diffusion.clip_x0,
                )
                for scene in scenes
            ]
        raise ConfigError('eval needs --predictions or --sampler')

    def run(
        self, config: RunConfig, options: Dict[str, Any], out: Path
    ) -> None:
        run = None
        if options.get('run') is not None:
            run = TrainingRun.objects.filter(pk=options['run']).first()
            if run is None:
                raise ConfigError(f'training run {options["run"]} not found')
        corpus = read_scenes(options.get('scenes'))
        scenes = [scene for scene in corpus if scene.has_futures]
        if len(scenes) < len(corpus):
            logger.warning(
                '%d scenes without ground truth skipped',
                len(corpus) - len(scenes),
            )
        samples = self._samples(config, options, scenes)
        reports = []
        for scene, scene_samples in zip(scenes, samples):
            reports.append(
                compute_report(
                    scene, scene_samples, config.metric, options['horizon']
                )
            )
        write_reports(reports, out / 'reports.json', out / 'summary.csv')
        self.write_config(config, out)
        if options['record']:
            for report in reports:
                SceneReport.objects.create_from_report(report, run)
        self.stdout.write(f'{len(reports)} scenes scored')
