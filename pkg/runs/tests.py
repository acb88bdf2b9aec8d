"""Tests for run configs, the command base class and the run ledger"""
from contextlib import redirect_stderr
from datetime import timedelta
from io import StringIO
from pathlib import Path
import tempfile
from unittest import mock

import numpy as np
import torch
from django.core.management import call_command, get_commands, load_command_class
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, override_settings

from corpus.builder import corpus_vocabulary
from corpus.container import CorpusRecord, read_corpus, write_corpus
from corpus.vocabulary import NULL_ID
from flows.schedule import preset_schedule
from motionflow.exceptions import (
    FormatError, InvalidArgument, InvalidConfig, TokenizationError, TrainingDiverged,
)
from motionvae.network import MotionVAE, VAEConfig
from tmdit.network import TMDiT, TMDiTConfig
from training.flow import LatentScaler

from .command import EXIT_CODES, exit_code_for
from .config import CONFIG_COPY, RESOLVED_COPY, load_run_config
from .factories import ArtifactFactory, RunFactory
from .forms import SampleForm, ScheduleForm
from .management.commands.inspect_schedule import Command as InspectScheduleCommand
from .models import Artifact, Run
from .sampling import generate_motions, prompt_requests, samples_corpus, split_requests

CONFIG = """\
seed: 7
paths:
  corpus: data/corpus.mfc
schedule:
  scales: ["1/3", "2/3", 1]
sample:
  steps: 4
"""


class ConfigTestCase(SimpleTestCase):
    """Test loading and overriding run configs"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)
        self.path = self.dir / 'run.yaml'
        self.path.write_text(CONFIG)

    def test_load(self):
        """Test that sections and the seed are read from YAML"""
        config = load_run_config(self.path)
        self.assertEqual(config.seed, 7)
        self.assertEqual(config.section('schedule')['scales'], ['1/3', '2/3', 1])
        self.assertEqual(config.path('corpus'), Path('data/corpus.mfc'))
        self.assertEqual(config.section('eval'), {})

    def test_overrides(self):
        """Test that dotted overrides and the seed flag win over the file"""
        config = load_run_config(self.path, ['sample.steps=12', 'tmdit.model_dim=32'], seed=3)
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.section('sample')['steps'], 12)
        self.assertEqual(config.section('tmdit')['model_dim'], 32)

    def test_seed_is_mandatory(self):
        """Test that a config without a seed is rejected"""
        with self.assertRaises(InvalidConfig):
            load_run_config(None, ['schedule.preset=two_stage'])
        self.assertEqual(load_run_config(None, ['seed=1']).seed, 1)

    def test_bad_override(self):
        """Test that an override without '=' is a config error"""
        with self.assertRaises(InvalidConfig):
            load_run_config(self.path, ['sample.steps'])

    def test_unparsable_file(self):
        """Test that broken YAML is a config error"""
        self.path.write_text('seed: [1, 2\n')
        with self.assertRaises(InvalidConfig):
            load_run_config(self.path)

    def test_missing_path(self):
        """Test that a path the command needs but the config lacks is a config error"""
        with self.assertRaises(InvalidConfig):
            load_run_config(self.path).path('vae')
        self.assertIsNone(load_run_config(self.path).optional_path('vae'))

    def test_copy_is_verbatim(self):
        """Test that the config file lands in the output directory byte for byte"""
        out = self.dir / 'out'
        load_run_config(self.path, ['sample.steps=2']).copy_to(out)
        self.assertEqual((out / CONFIG_COPY).read_bytes(), self.path.read_bytes())
        self.assertIn('steps: 2', (out / RESOLVED_COPY).read_text())


class FormTestCase(SimpleTestCase):
    """Test the schedule and sampling sections"""

    def test_default_schedule(self):
        """Test that an empty section gives the three-stage preset"""
        sched = ScheduleForm({}).config()['schedule']
        self.assertEqual(sched, preset_schedule('three_stage'))

    def test_explicit_fractions(self):
        """Test that fraction strings are accepted as scales"""
        sched = ScheduleForm({'scales': ['1/4', '1/2', 1]}).config()['schedule']
        self.assertAlmostEqual(sched.scales[0], 0.25)
        self.assertEqual(sched.K, 3)

    def test_invalid_schedules(self):
        """Test that conflicting or out-of-order schedules are config errors"""
        for section in ({'preset': 'two_stage', 'scales': [1]},
                        {'times': [0, 1]},
                        {'scales': [1, 0.5]},
                        {'preset': 'nine_stage'}):
            with self.assertRaises(InvalidConfig, msg=section):
                ScheduleForm(section).config()

    def test_sample_defaults(self):
        """Test that the sampling section defaults to Euler with guidance 2.5"""
        opts = SampleForm({}).config()
        self.assertEqual((opts['solver'], opts['guidance'], opts['steps']), ('euler', 2.5, 10))

    def test_prompt_sources_are_exclusive(self):
        """Test that prompt, prompt file and split prompts cannot be combined"""
        with self.assertRaises(InvalidConfig):
            SampleForm({'prompt': 'a person jumps', 'prompt_file': 'p.txt'}).config()
        with self.assertRaises(InvalidConfig):
            SampleForm({'prompt': 'a person jumps', 'from_split': 'test'}).config()
        with self.assertRaises(InvalidConfig):
            SampleForm({'solver': 'rk4'}).config()


class ExitCodeTestCase(SimpleTestCase):
    """Test the mapping from errors to exit codes"""

    def test_mapping(self):
        """Test that each error family has its documented code"""
        cases = [
            (InvalidConfig('x'), 3),
            (FileNotFoundError('x'), 4),
            (InvalidArgument('x'), 5),
            (FormatError('x'), 5),
            (TokenizationError('x'), 5),
            (TrainingDiverged('x'), 6),
            (RuntimeError('x'), 1),
        ]
        for exc, code in cases:
            self.assertEqual(exit_code_for(exc), code, msg=type(exc).__name__)
        self.assertEqual(EXIT_CODES['usage'], 2)


PIPELINE_COMMANDS = {
    'gen_data': [],
    'train_vae': [],
    'train_tmdit': [],
    'sample': ['--prompt'],
    'evaluate': [],
    'retention': [],
    'diagnose': [],
    'inspect_schedule': ['--length'],
}
SHARED_FLAGS = ['--config', '--seed', '--set', '--out', '--progress']


class CommandLineTestCase(SimpleTestCase):
    """Test the flags every pipeline command accepts"""

    def parser(self, name, from_command_line=False):
        command = load_command_class(get_commands()[name], name)
        command._called_from_command_line = from_command_line
        return command.create_parser('manage.py', name)

    def test_help_lists_every_flag(self):
        """Test that each command's help shows the shared flags and its own"""
        for name, extra in PIPELINE_COMMANDS.items():
            help_text = self.parser(name).format_help()
            for flag in SHARED_FLAGS + extra:
                with self.subTest(command=name, flag=flag):
                    self.assertIn(flag, help_text)

    def test_unknown_flag_is_a_usage_error(self):
        """Test that an unknown flag stops the command with the usage exit code"""
        for name in PIPELINE_COMMANDS:
            with self.subTest(command=name):
                with self.assertRaises(CommandError):
                    call_command(name, '--no-such-flag')
                with redirect_stderr(StringIO()), self.assertRaises(SystemExit) as ctx:
                    self.parser(name, from_command_line=True).parse_args(['--no-such-flag'])
                self.assertEqual(ctx.exception.code, EXIT_CODES['usage'])


class LedgerTestCase(TestCase):
    """Test the run ledger models"""

    def test_finish(self):
        """Test that finishing a run stores its outcome"""
        run = RunFactory()
        run.finish(0)
        run.refresh_from_db()
        self.assertEqual(run.status, 'succeeded')
        self.assertIsNotNone(run.duration)

        failed = RunFactory(command='train_vae')
        failed.finish(6, 'loss became non-finite')
        self.assertEqual(Run.objects.get(pk=failed.pk).status, 'failed')

    def test_add_artifact(self):
        """Test that artifacts record the file hash and size"""
        run = RunFactory()
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'report.json'
            path.write_text('{}\n')
            artifact = run.add_artifact('report', path)
        self.assertEqual(artifact.size, 3)
        self.assertEqual(artifact.sha256, 'ca3d163bab055381827226140568f3bef7eaac187cebd76878e0b63e9e442356')
        self.assertEqual(list(run.artifacts.all()), [artifact])

    def test_ordering(self):
        """Test that the newest run comes first"""
        older = RunFactory()
        newer = RunFactory(started_at=older.started_at + timedelta(seconds=5))
        self.assertEqual(list(Run.objects.all()[:2]), [newer, older])
        ArtifactFactory(run=newer)
        self.assertEqual(Artifact.objects.filter(run=newer).count(), 1)


@override_settings(MOTIONFLOW_RUN_LEDGER=True)
class CommandTestCase(TestCase):
    """Test the command base class through inspect_schedule"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def call(self, *args):
        stdout = StringIO()
        call_command('inspect_schedule', *args, '--out', str(self.out), stdout=stdout)
        return stdout.getvalue()

    def test_stage_table(self):
        """Test that length 18 at [1/3, 2/3, 1] gives stage lengths 6, 12 and 18"""
        output = self.call('--set', 'seed=0', '--set', 'schedule.preset=three_stage', '--length', '18')
        lengths = [int(line.split()[-1]) for line in output.splitlines()[1:4]]
        self.assertEqual(lengths, [6, 12, 18])
        self.assertTrue((self.out / 'stages.csv').exists())

    def test_ledger_records_run(self):
        """Test that a successful command leaves a run with its artifacts"""
        self.call('--set', 'seed=4')
        run = Run.objects.get(command='inspect_schedule')
        self.assertEqual((run.status, run.exit_code, run.seed), ('succeeded', 0, 4))
        kinds = sorted(run.artifacts.values_list('kind', flat=True))
        self.assertEqual(kinds, ['config', 'table'])

    def test_missing_config_file(self):
        """Test that a missing config file exits with code 4"""
        with self.assertRaises(CommandError) as ctx:
            self.call('--config', str(self.out / 'absent.yaml'))
        self.assertEqual(ctx.exception.returncode, 4)

    def test_invalid_config(self):
        """Test that an invalid schedule exits with code 3 and is logged as failed"""
        with self.assertRaises(CommandError) as ctx:
            self.call('--set', 'seed=0', '--set', 'schedule.scales=[1,0.5]')
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertEqual(Run.objects.get().status, 'failed')

    def test_missing_seed(self):
        """Test that a config without a seed exits with code 3"""
        with self.assertRaises(CommandError) as ctx:
            self.call('--set', 'schedule.preset=two_stage')
        self.assertEqual(ctx.exception.returncode, 3)

    def test_command_error_marks_run_failed(self):
        """Test that a CommandError raised by the command closes its run as failed"""
        with mock.patch.object(InspectScheduleCommand, 'run', side_effect=CommandError('no table', returncode=5)):
            with self.assertRaises(CommandError) as ctx:
                self.call('--set', 'seed=0')
        self.assertEqual(ctx.exception.returncode, 5)
        run = Run.objects.get()
        self.assertEqual((run.status, run.exit_code, run.error), ('failed', 5, 'no table'))
        self.assertIsNotNone(run.finished_at)

    @override_settings(MOTIONFLOW_RUN_LEDGER=False)
    def test_ledger_can_be_disabled(self):
        """Test that no run is recorded with the ledger off"""
        self.call('--set', 'seed=0')
        self.assertFalse(Run.objects.exists())


class SamplingTestCase(SimpleTestCase):
    """Test generation from tokens through the decoder"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.vocabulary = corpus_vocabulary()
        cls.sched = preset_schedule('three_stage')
        torch.manual_seed(0)
        cls.vae = MotionVAE(VAEConfig(hidden=8, latent_dim=4)).eval()
        cls.model = TMDiT(TMDiTConfig(n_blocks=2, n_separate=1, n_shared=1, model_dim=32, n_heads=2,
                                      ffn_dim=64, latent_dim=4, scales=list(cls.sched.scales))).eval()
        cls.scaler = LatentScaler(torch.zeros(6, 4), torch.ones(6, 4))

    def generate(self, requests, seed=0, **kwargs):
        return generate_motions(self.vae, self.model, self.scaler, self.sched, requests, self.vocabulary,
                                frames=kwargs.pop('frames', 32), steps=2, seed=seed, **kwargs)

    def test_prompt_requests(self):
        """Test that an empty prompt list asks for the null condition"""
        requests = prompt_requests([], self.vocabulary, 3)
        self.assertEqual([r.tokens for r in requests], [[NULL_ID]] * 3)
        with self.assertRaises(TokenizationError):
            prompt_requests(['a person moonwalks'], self.vocabulary, 1)

    def test_split_requests(self):
        """Test that split prompts keep their labels, grouped by program"""
        records = [
            CorpusRecord(i, i, program, {'speed': 1.0}, 'a person walks', [2], 'test',
                         np.zeros((8, 15, 6), dtype=np.float32))
            for i, program in enumerate(['walk_forward', 'jump', 'walk_forward', 'walk_forward'])
        ]
        requests = split_requests(records, 2)
        self.assertEqual([r.label['program'] for r in requests], ['jump', 'walk_forward', 'walk_forward'])
        with self.assertRaises(InvalidArgument):
            split_requests([], 2)

    def test_shapes_and_determinism(self):
        """Test that generation gives one motion per request and repeats under a seed"""
        requests = prompt_requests(['a person jumps'], self.vocabulary, 3)
        first = self.generate(requests, batch_size=2)
        second = self.generate(requests, batch_size=2)
        self.assertEqual(len(first), 3)
        self.assertEqual(first[0].shape, (32, 15, 6))
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
        other = self.generate(requests, seed=1, batch_size=2)
        self.assertFalse(np.array_equal(first[0], other[0]))

    def test_odd_frame_counts(self):
        """Test that a frame count off the latent grid is honoured"""
        motions = self.generate(prompt_requests([''], self.vocabulary, 1), frames=30)
        self.assertEqual(motions[0].shape[0], 30)

    def test_samples_container(self):
        """Test that generated motions are written in the corpus container"""
        requests = prompt_requests(['a person jumps'], self.vocabulary, 2)
        motions = self.generate(requests)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_corpus(Path(tmp) / 'samples.mfc', samples_corpus(requests, motions, self.vocabulary, 0))
            corpus = read_corpus(path)
        self.assertEqual(len(corpus), 2)
        self.assertEqual(corpus.records[0].split, 'generated')
        self.assertIsNone(corpus.records[0].program)
        np.testing.assert_array_equal(corpus.records[1].motion, motions[1])
