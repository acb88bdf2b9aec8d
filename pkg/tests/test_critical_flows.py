"""Tests for the end-to-end pipeline: corpus, both training stages, sampling and evaluation"""
import json
import shutil
import tempfile
import unittest
from io import StringIO
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings

from corpus.builder import CorpusSpec, build_corpus
from corpus.container import read_corpus
from corpus.vocabulary import Vocabulary
from evaluation.metrics import frechet_pose_distance
from evaluation.rules import semantic_accuracy
from flows.schedule import preset_schedule
from motionvae.network import VAEConfig
from runs.sampling import generate_motions, split_requests
from tmdit.network import TMDiTConfig
from training.config import TrainConfig
from training.flow import train_tmdit
from training.vae import reconstruction_mse, train_vae

PIPELINE_CONFIG = """\
seed: 11
paths:
  corpus: {root}/data/corpus.mfc
  vae: {root}/vae/vae.mfk
  tmdit: {root}/tmdit/tmdit.mfk
corpus:
  n_per_program: 4
  min_frames: 32
  max_frames: 40
schedule:
  preset: three_stage
vae:
  hidden: 8
  latent_dim: 4
tmdit:
  desk: true
  n_blocks: 2
  n_separate: 1
  n_shared: 1
  model_dim: 32
  n_heads: 2
  ffn_dim: 64
train_vae:
  steps: 2
  batch_size: 4
  split: all
  log_every: 0
train_tmdit:
  steps: 2
  batch_size: 4
  split: all
  log_every: 0
sample:
  prompt: a person jumps
  n_samples: 3
  frames: 32
  steps: 2
eval:
  split: all
  n_pairs: 50
retention:
  split: all
  ratios: [1.0, 0.2]
diagnose:
  seeds: [0, 1]
  steps: 2
  frames: 16
"""


def run(command, *args):
    stdout = StringIO()
    call_command(command, *args, stdout=stdout)
    return stdout.getvalue()


@override_settings(MOTIONFLOW_RUN_LEDGER=False)
class PipelineTestCase(SimpleTestCase):
    """Test every command on a tiny corpus with tiny models"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.root = Path(tempfile.mkdtemp())
        cls.config = cls.root / 'run.yaml'
        cls.config.write_text(PIPELINE_CONFIG.format(root=cls.root))
        cls.command('gen_data', 'data')
        cls.command('train_vae', 'vae')
        cls.command('train_tmdit', 'tmdit')

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.root, ignore_errors=True)
        super().tearDownClass()

    @classmethod
    def command(cls, name, out, *args):
        return run(name, '--config', str(cls.config), '--out', str(cls.root / out), *args)

    def report(self, out):
        return json.loads((self.root / out / 'report.json').read_text())

    def test_artifacts(self):
        """Test that each stage wrote its outputs and a verbatim config copy"""
        for out, name in [('data', 'corpus.mfc'), ('vae', 'vae.mfk'), ('tmdit', 'tmdit.mfk'),
                          ('vae', 'metrics.csv'), ('tmdit', 'metrics.csv')]:
            self.assertTrue((self.root / out / name).exists(), msg=f'{out}/{name}')
        self.assertEqual((self.root / 'data' / 'config.yaml').read_bytes(), self.config.read_bytes())
        self.assertEqual(len(read_corpus(self.root / 'data' / 'corpus.mfc')), 24)

    def test_gen_data_is_reproducible(self):
        """Test that regenerating with the same config gives identical bytes"""
        self.command('gen_data', 'data_again')
        self.assertEqual((self.root / 'data' / 'corpus.mfc').read_bytes(),
                         (self.root / 'data_again' / 'corpus.mfc').read_bytes())

    def test_sample_is_deterministic(self):
        """Test that sampling twice with one config and seed gives byte-identical files"""
        self.command('sample', 'sample_a')
        self.command('sample', 'sample_b')
        for name in ('samples.mfc', 'trajectory.csv'):
            self.assertEqual((self.root / 'sample_a' / name).read_bytes(),
                             (self.root / 'sample_b' / name).read_bytes(), msg=name)
        samples = read_corpus(self.root / 'sample_a' / 'samples.mfc')
        self.assertEqual(len(samples), 3)
        self.assertEqual(samples.records[0].motion.shape, (32, 15, 6))
        self.assertEqual(samples.records[0].text, 'a person jumps')

    def test_sample_from_split(self):
        """Test that split prompts carry their labels into the samples"""
        self.command('sample', 'sample_split', '--set', 'sample.prompt=', '--set', 'sample.from_split=train',
                     '--set', 'sample.n_samples=1')
        samples = read_corpus(self.root / 'sample_split' / 'samples.mfc')
        self.assertTrue(all(r.program is not None for r in samples))

    def test_sample_unknown_word(self):
        """Test that a prompt outside the vocabulary exits with a domain error"""
        with self.assertRaises(CommandError) as ctx:
            self.command('sample', 'sample_bad', '--prompt', 'a person moonwalks')
        self.assertEqual(ctx.exception.returncode, 5)

    def test_sample_missing_checkpoint(self):
        """Test that a missing checkpoint exits with code 4"""
        with self.assertRaises(CommandError) as ctx:
            self.command('sample', 'sample_missing', '--set', f'paths.tmdit={self.root}/absent.mfk')
        self.assertEqual(ctx.exception.returncode, 4)

    def test_evaluate_ground_truth_halves(self):
        """Test that two halves of the ground truth score full accuracy and sit close together"""
        output = self.command('evaluate', 'eval_gt')
        report = self.report('eval_gt')
        self.assertEqual(report['mode'], 'split_halves')
        self.assertEqual(report['semantic_accuracy'], 1.0)

        records = read_corpus(self.root / 'data' / 'corpus.mfc').records
        reference = [r.motion for r in records[1::2]]
        rng = np.random.default_rng(0)
        noise = [rng.standard_normal(r.motion.shape).astype(np.float32) for r in records[0::2]]
        from_noise = frechet_pose_distance(noise, reference)
        self.assertGreaterEqual(report['frechet_pose_distance'], 0.0)
        self.assertLess(report['frechet_pose_distance'], 0.5 * from_noise)
        self.assertIn('Semantic accuracy', output)

    def test_evaluate_samples(self):
        """Test that generated motions are scored against the corpus"""
        self.command('sample', 'sample_eval')
        self.command('evaluate', 'eval_samples', '--set', f'eval.samples={self.root}/sample_eval/samples.mfc')
        report = self.report('eval_samples')
        self.assertEqual(report['n_generated'], 3)
        self.assertIsNone(report['semantic_accuracy'])
        self.assertGreater(report['diversity'], 0.0)

    def test_retention(self):
        """Test that ground truth passes its rules at full rate"""
        self.command('retention', 'retention')
        lines = (self.root / 'retention' / 'retention.csv').read_text().splitlines()
        self.assertEqual(lines[0], 'ratio,accuracy,n')
        self.assertEqual(self.report('retention')['accuracy']['1.0'], 1.0)

    def test_diagnose(self):
        """Test that the consistent rule is exact and draws nothing after the initial noise"""
        self.command('diagnose', 'diagnose')
        report = self.report('diagnose')
        self.assertEqual(report['consistent_fresh_draws'], 0)
        self.assertEqual(report['consistent_transition_gap'], 0.0)
        self.assertEqual(report['naive_fresh_draws'], 2 * 2 * 2)
        self.assertGreater(report['naive_transition_gap'], 0.0)

    def test_zero_step_vae(self):
        """Test that zero training steps still write a loadable checkpoint"""
        self.command('train_vae', 'vae_init', '--set', 'train_vae.steps=0')
        self.assertTrue((self.root / 'vae_init' / 'vae.mfk').exists())
        self.assertIsNone(self.report('vae_init')['final_loss'])


@unittest.skipUnless(settings.MOTIONFLOW_SLOW_TESTS, 'set MOTIONFLOW_SLOW_TESTS to run the long training runs')
class DeskScaleAcceptanceTestCase(SimpleTestCase):
    """Test the desk-scale training targets (long running)"""

    def test_vae_reconstruction(self):
        """Test that 5k VAE steps on 1.2k records reach a tenth of the data variance"""
        corpus = build_corpus(CorpusSpec(n_per_program=200, min_frames=64, max_frames=64, seed=0))
        model, _ = train_vae(corpus.records, VAEConfig(), TrainConfig(steps=5000, seed=0))
        # normalized units: every channel has unit variance
        self.assertLess(reconstruction_mse(model, corpus.split('test')), 0.1)

    def test_end_to_end_generation(self):
        """Test that generated motions follow their prompts and sit closest to their own label"""
        programs = ['walk_forward', 'turn', 'jump']
        corpus = build_corpus(CorpusSpec(n_per_program=700, seed=0, programs=programs))
        vocabulary = Vocabulary.from_list(corpus.header['vocabulary'])
        sched = preset_schedule('three_stage')
        train = corpus.split('train')

        vae, _ = train_vae(train, VAEConfig(), TrainConfig(steps=5000, seed=0))
        tmdit_config = TMDiTConfig.desk(scales=list(sched.scales))
        model, _, scaler = train_tmdit(train, vae, tmdit_config, sched, TrainConfig(steps=10000, seed=0),
                                       vocabulary)

        requests = split_requests(corpus.split('test'), 100)
        motions = generate_motions(vae, model, scaler, sched, requests, vocabulary, frames=64, steps=10,
                                   guidance=2.5, seed=0)
        samples = [(m, r.label) for m, r in zip(motions, requests)]
        self.assertGreaterEqual(semantic_accuracy(samples), 0.8)

        test_groups = corpus.by_program(corpus.split('test'))
        for program in programs:
            generated = [m for m, label in samples if label['program'] == program]
            distances = {other: frechet_pose_distance(generated, [r.motion for r in test_groups[other]])
                         for other in programs}
            self.assertEqual(min(distances, key=distances.get), program)
