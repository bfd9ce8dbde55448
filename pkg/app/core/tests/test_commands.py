import json
import os
import tempfile
from io import StringIO

import pandas as pd

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from core.management.commands.eval import Command as EvalCommand
from core.management.commands.train import Command as TrainCommand
from core.models import SceneReport, TrainingRun
from core.net.checkpoint import checkpoint_save

from .test_diffusion import tiny_model

SMALL_CONFIG = {
    'datagen': {
        'n_scenes': 6,
        'agents_per_scene': [2, 4],
        'map_elements': [5, 7],
    },
    'diffusion': {'steps': 50, 'ddim_steps': 5},
    'model': {
        'hidden_dim': 16,
        'n_enc_blocks': 1,
        'n_denoise_blocks': 1,
        'n_heads': 2,
        'steps': 50,
    },
    'train': {'epochs': 1, 'warmup_epochs': 0, 'batch_size': 4},
    'metric': {'n_samples': 4},
}


class CommandTestCase(TestCase):
    """Base class running commands inside a temporary directory"""

    def setUp(self) -> None:
        """Creates the directory, a small config and a scene corpus"""

        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)
        self.config = self.path('config.json')
        with open(self.config, 'w') as handle:
            json.dump(SMALL_CONFIG, handle)
        self.scenes = self.path('corpus', 'scenes.jsonl')
        self.call('datagen', '--seed', '3', '--out', self.path('corpus'))

    def path(self, *parts: str) -> str:
        return os.path.join(self.directory.name, *parts)

    def call(self, name: str, *args: str) -> str:
        """Runs a command with the small config and returns its output"""

        out = StringIO()
        call_command(name, '--config', self.config, *args, stdout=out)

        return out.getvalue()

    def read(self, *parts: str) -> bytes:
        with open(self.path(*parts), 'rb') as handle:
            return handle.read()


class TestDatagenCommand(CommandTestCase):
    """Tests for the datagen command"""

    def test_corpus_written(self) -> None:
        """Tests if the corpus and the resolved config are written"""

        lines = self.read('corpus', 'scenes.jsonl').splitlines()
        config = json.loads(self.read('corpus', 'datagen-config.json'))

        self.assertEqual(len(lines), 6)
        self.assertEqual(config['seed'], 3)
        self.assertEqual(config['datagen']['seed'], 3)

    def test_same_seed_same_bytes(self) -> None:
        """Tests if a second run with one seed writes the same file"""

        self.call('datagen', '--seed', '3', '--out', self.path('again'))

        self.assertEqual(
            self.read('again', 'scenes.jsonl'),
            self.read('corpus', 'scenes.jsonl'),
        )

    def test_seed_required(self) -> None:
        """Tests what happens when datagen is called without a seed"""

        with self.assertRaises(CommandError) as context:
            self.call('datagen', '--out', self.path('unseeded'))

        self.assertEqual(context.exception.returncode, 2)

    def test_print_config(self) -> None:
        """Tests if --print-config prints without writing anything"""

        output = self.call(
            'datagen', '--print-config', '--out', self.path('printed')
        )

        self.assertEqual(json.loads(output)['datagen']['n_scenes'], 6)
        self.assertFalse(os.path.exists(self.path('printed')))

    def test_shifted_corpus(self) -> None:
        """Tests if --shift writes the out-of-distribution preset"""

        self.call(
            'datagen', '--seed', '3', '--shift', '--out', self.path('ood')
        )
        config = json.loads(self.read('ood', 'datagen-config.json'))
        scenes = [
            json.loads(line)
            for line in self.read('ood', 'scenes.jsonl').splitlines()
        ]

        self.assertEqual(config['datagen']['speed_scale'], 1.4)
        self.assertEqual(config['datagen']['curvature_scale'], 1.6)
        self.assertEqual(len(scenes), 6)
        for scene in scenes:
            self.assertEqual(scene['eval_horizon_s'], 4.1)
        self.assertNotEqual(
            self.read('ood', 'scenes.jsonl'),
            self.read('corpus', 'scenes.jsonl'),
        )


class TestTrainCommand(CommandTestCase):
    """Tests for the train command"""

    def test_train_and_record(self) -> None:
        """Tests if a run is trained, checkpointed and recorded"""

        output = self.call(
            'train',
            '--seed',
            '1',
            '--scenes',
            self.scenes,
            '--out',
            self.path('run'),
            '--record',
            '--name',
            'small',
        )
        history = pd.read_csv(self.path('run', 'history.csv'))
        run = TrainingRun.objects.get()

        self.assertTrue(os.path.exists(self.path('run', 'model.ckpt')))
        self.assertEqual(list(history.columns), ['epoch', 'mean_loss', 'lr'])
        self.assertEqual(run.name, 'small')
        self.assertEqual(run.seed, 1)
        self.assertEqual(run.epochs.count(), 1)
        self.assertIn(f'recorded run {run.pk}', output)

    def test_missing_scenes_file(self) -> None:
        """Tests what happens when the corpus does not exist"""

        with self.assertRaises(CommandError) as context:
            self.call(
                'train',
                '--seed',
                '1',
                '--scenes',
                self.path('missing.jsonl'),
                '--out',
                self.path('run'),
            )

        self.assertEqual(context.exception.returncode, 3)

    def test_scenes_required(self) -> None:
        """Tests what happens when no corpus is given"""

        with self.assertRaises(CommandError) as context:
            self.call('train', '--seed', '1', '--out', self.path('run'))

        self.assertEqual(context.exception.returncode, 2)


class TestSampleCommand(CommandTestCase):
    """Tests for the sample command"""

    def setUp(self) -> None:
        """Stores an untrained checkpoint"""

        super().setUp()
        self.checkpoint = self.path('model.ckpt')
        checkpoint_save(tiny_model(), self.checkpoint)

    def sample(self, directory: str, seed: str = '7') -> bytes:
        self.call(
            'sample',
            '--seed',
            seed,
            '--scenes',
            self.scenes,
            '--checkpoint',
            self.checkpoint,
            '--samples',
            '2',
            '--out',
            self.path(directory),
        )

        return self.read(directory, 'samples.jsonl')

    def test_reproducible(self) -> None:
        """Tests if one seed writes byte-identical samples"""

        first = self.sample('first')
        second = self.sample('second')

        self.assertEqual(first, second)
        self.assertEqual(len(first.splitlines()), 6)
        self.assertNotEqual(first, self.sample('other', seed='8'))

    def test_schedule_mismatch(self) -> None:
        """Tests what happens when the checkpoint uses other steps"""

        checkpoint_save(tiny_model(steps=60), self.checkpoint)

        with self.assertRaises(CommandError) as context:
            self.sample('mismatch')

        self.assertEqual(context.exception.returncode, 2)

    def test_eval_of_predictions(self) -> None:
        """Tests if eval scores a samples file"""

        self.sample('first')
        self.call(
            'eval',
            '--scenes',
            self.scenes,
            '--predictions',
            self.path('first', 'samples.jsonl'),
            '--samples',
            '2',
            '--out',
            self.path('scores'),
        )
        reports = json.loads(self.read('scores', 'reports.json'))

        self.assertEqual(len(reports), 6)


class TestEvalCommand(CommandTestCase):
    """Tests for the eval command"""

    def test_constant_velocity(self) -> None:
        """Tests scoring the constant-velocity sampler"""

        self.call(
            'eval',
            '--seed',
            '0',
            '--scenes',
            self.scenes,
            '--sampler',
            'cv',
            '--out',
            self.path('cv'),
            '--record',
        )
        summary = pd.read_csv(
            self.path('cv', 'summary.csv'), index_col='metric'
        )
        reports = json.loads(self.read('cv', 'reports.json'))

        self.assertEqual(len(reports), 6)
        self.assertEqual(SceneReport.objects.count(), 6)
        self.assertEqual(list(summary.columns), ['mean', 'std'])
        for name in ('realism_meta', 'kinematic', 'interactive'):
            self.assertTrue(0.0 <= summary.loc[name, 'mean'] <= 1.0)

    def test_sampler_required(self) -> None:
        """Tests what happens when neither samples nor sampler are given"""

        with self.assertRaises(CommandError) as context:
            self.call(
                'eval', '--scenes', self.scenes, '--out', self.path('cv')
            )

        self.assertEqual(context.exception.returncode, 2)

    def test_unknown_run(self) -> None:
        """Tests what happens when reports refer to a missing run"""

        with self.assertRaises(CommandError) as context:
            self.call(
                'eval',
                '--scenes',
                self.scenes,
                '--sampler',
                'cv',
                '--run',
                '404',
                '--out',
                self.path('cv'),
            )

        self.assertEqual(context.exception.returncode, 2)


class TestSelectHardCommand(CommandTestCase):
    """Tests for the select_hard command"""

    def test_selection(self) -> None:
        """Tests if the requested number of scene ids is listed"""

        output = self.call(
            'select_hard',
            '--scenes',
            self.scenes,
            '-n',
            '2',
            '--samples',
            '4',
            '--out',
            self.path('hard'),
        )
        ids = self.read('hard', 'hard.txt').decode().split()

        self.assertEqual(len(ids), 2)
        self.assertEqual(output.split(), ids)
        for scene_id in ids:
            self.assertTrue(scene_id.startswith('scene-3-'))

    def test_horizon(self) -> None:
        """Tests if a scoring horizon is accepted"""

        output = self.call(
            'select_hard',
            '--scenes',
            self.scenes,
            '-n',
            '2',
            '--horizon',
            '2.0',
            '--samples',
            '4',
            '--out',
            self.path('short'),
        )

        self.assertEqual(len(output.split()), 2)

    def test_random_selection(self) -> None:
        """Tests if --mode random lists a seeded share of the corpus"""

        args = (
            '--scenes',
            self.scenes,
            '--mode',
            'random',
            '--fraction',
            '0.5',
            '--seed',
            '1',
        )
        self.call('select_hard', *args, '--out', self.path('first'))
        self.call('select_hard', *args, '--out', self.path('second'))
        ids = self.read('first', 'hard.txt').decode().split()

        self.assertEqual(len(ids), 3)
        self.assertEqual(ids, sorted(ids))
        self.assertEqual(
            self.read('first', 'hard.txt'), self.read('second', 'hard.txt')
        )


class TestBenchCommand(CommandTestCase):
    """Tests for the bench command"""

    def test_bench(self) -> None:
        """Tests if one row per step count is written"""

        self.call(
            'bench',
            '--agents',
            '3',
            '--map-elements',
            '4',
            '--steps',
            '1,5',
            '--samples',
            '2',
            '--out',
            self.path('bench'),
        )
        frame = pd.read_csv(self.path('bench', 'bench.csv'))

        self.assertEqual(frame['K'].tolist(), [1, 5])

    def test_steps_out_of_range(self) -> None:
        """Tests what happens when K exceeds the schedule length"""

        with self.assertRaises(CommandError) as context:
            self.call('bench', '--steps', '1,100', '--out', self.path('b'))

        self.assertEqual(context.exception.returncode, 2)


class TestPlotCommand(CommandTestCase):
    """Tests for the plot command"""

    def test_plot_first_scene(self) -> None:
        """Tests if the first scene and its kinematics are drawn"""

        output = self.call(
            'plot', '--scenes', self.scenes, '--out', self.path('plots')
        )
        names = sorted(os.listdir(self.path('plots')))

        self.assertIn('scene-3-00000.svg', names)
        self.assertIn('scene-3-00000-kinematics.svg', names)
        self.assertIn('scene-3-00000', output)

    def test_unknown_scene(self) -> None:
        """Tests what happens when the scene id is not in the file"""

        with self.assertRaises(CommandError) as context:
            self.call(
                'plot',
                '--scenes',
                self.scenes,
                '--scene-id',
                'nowhere',
                '--out',
                self.path('plots'),
            )

        self.assertEqual(context.exception.returncode, 2)


class TestFlagHelp(TestCase):
    """Tests for the help of flags that only some commands take"""

    def help_text(self, command, name: str) -> str:
        parser = command.create_parser('manage.py', name)

        return ' '.join(parser.format_help().split())

    def test_representation_is_train_only(self) -> None:
        """Tests if train says where the representation comes from"""

        text = self.help_text(TrainCommand(), 'train')

        self.assertIn('train only', text)
        self.assertIn('read it from the checkpoint', text)

    def test_horizon_commands(self) -> None:
        """Tests if eval names the other command taking --horizon"""

        self.assertIn(
            'select_hard takes it too', self.help_text(EvalCommand(), 'eval')
        )
