"""Tests for the training stages and the checkpoint format"""
import math
import tempfile
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
from django.test import SimpleTestCase

from corpus.builder import CorpusSpec, build_corpus
from corpus.vocabulary import NULL_ID, Vocabulary
from flows.hierarchy import FlowEndpoints, training_sample
from flows.schedule import preset_schedule
from motionflow.exceptions import FormatError, InvalidArgument, InvalidConfig
from motionvae.network import VAEConfig
from skeleton.layout import layout_from_dict, layout_to_dict, pooled_layout, reference_layout
from tmdit.network import TMDiT, TMDiTConfig

from .checkpoints import (
    MAGIC, VERSION, Checkpoint, _PREFIX, _dumps, checkpoint_bytes, load_checkpoint, load_tmdit, load_vae,
    model_checkpoint, save_checkpoint,
)
from .config import TrainConfig
from .data import MotionBatcher, motion_statistics
from .flow import LatentScaler, draw_stages, drop_conditions, flow_loss, train_tmdit
from .forms import TMDiTConfigForm, TrainConfigForm, VAEConfigForm
from .schedules import lr_multiplier, step_decay
from .vae import build_vae, reconstruction_mse, train_vae

VAE_CONFIG = VAEConfig(hidden=8, latent_dim=4)


def small_corpus():
    return build_corpus(CorpusSpec(n_per_program=2, min_frames=32, max_frames=40, seed=0))


def tiny_tmdit_config(sched):
    return TMDiTConfig(n_blocks=2, n_separate=1, n_shared=1, model_dim=32, n_heads=2, ffn_dim=64,
                       latent_dim=4, scales=[sched.scale(k) for k in sched.stages])


def train_config(**overrides):
    values = dict(steps=3, batch_size=4, lr=1e-3, seed=5, log_every=0)
    values.update(overrides)
    return TrainConfig(**values)


def state_equal(a, b):
    a, b = a.state_dict(), b.state_dict()
    return a.keys() == b.keys() and all(torch.equal(a[k], b[k]) for k in a)


class ScheduleTestCase(SimpleTestCase):
    """Test the step-decay learning-rate schedule"""

    def test_multiplier_values(self):
        """Test that the rate drops by the factor at half and at three quarters of training"""
        self.assertEqual(lr_multiplier(40, 100), 1.0)
        self.assertAlmostEqual(lr_multiplier(60, 100), 0.2)
        self.assertAlmostEqual(lr_multiplier(90, 100), 0.04)

    def test_multiplier_out_of_range(self):
        """Test that steps outside the run are rejected"""
        with self.assertRaises(InvalidArgument):
            lr_multiplier(101, 100)
        with self.assertRaises(InvalidArgument):
            lr_multiplier(0, 0)

    def test_scheduler_drives_optimizer(self):
        """Test that the scheduler applies the multiplier to the optimizer"""
        param = torch.nn.Parameter(torch.zeros(1))
        optimizer = torch.optim.SGD([param], lr=1.0)
        scheduler = step_decay(optimizer, 10)
        rates = []
        for _ in range(10):
            rates.append(optimizer.param_groups[0]['lr'])
            optimizer.step()
            scheduler.step()
        self.assertEqual(rates[4], 1.0)
        self.assertAlmostEqual(rates[5], 0.2)
        self.assertAlmostEqual(rates[8], 0.04)


class DataTestCase(SimpleTestCase):
    """Test batching over corpus records"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.records = small_corpus().records

    def test_crop_is_multiple_of_four(self):
        """Test that every batch length is a multiple of four no longer than its shortest record"""
        batcher = MotionBatcher(self.records, 5, seed=0)
        for _ in range(6):
            motion, records = batcher.next_batch()
            self.assertEqual(motion.shape[1] % 4, 0)
            self.assertLessEqual(motion.shape[1], min(r.frames for r in records))
            self.assertEqual(tuple(motion.shape[2:]), (15, 6))
            self.assertEqual(motion.dtype, torch.float32)

    def test_epoch_visits_every_record(self):
        """Test that one epoch's worth of batches covers each record once"""
        batcher = MotionBatcher(self.records, 4, seed=1)
        seen = []
        for _ in range(len(self.records) // 4):
            seen.extend(r.index for r in batcher.next_batch()[1])
        self.assertEqual(len(seen), len(set(seen)))

    def test_batches_are_seeded(self):
        """Test that the same seed gives the same batches"""
        a = MotionBatcher(self.records, 4, seed=2).next_batch()[0]
        b = MotionBatcher(self.records, 4, seed=2).next_batch()[0]
        self.assertTrue(torch.equal(a, b))

    def test_statistics_shape(self):
        """Test that statistics are per joint and channel"""
        mean, std = motion_statistics(self.records)
        self.assertEqual(mean.shape, (15, 6))
        self.assertTrue(np.all(std >= 0))
        with self.assertRaises(InvalidArgument):
            motion_statistics([])


class CheckpointTestCase(SimpleTestCase):
    """Test the checkpoint container"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)
        self.vae = build_vae(VAE_CONFIG, small_corpus().records, seed=0)

    def test_round_trip(self):
        """Test that a saved VAE loads back with identical weights"""
        path = save_checkpoint(self.dir / 'vae.mfk', model_checkpoint('vae', self.vae))
        loaded, checkpoint = load_vae(path)
        self.assertEqual(checkpoint.kind, 'vae')
        self.assertTrue(state_equal(loaded, self.vae))

    def test_bytes_are_deterministic(self):
        """Test that saving the same model twice gives the same bytes"""
        a = save_checkpoint(self.dir / 'a.mfk', model_checkpoint('vae', self.vae))
        b = save_checkpoint(self.dir / 'b.mfk', model_checkpoint('vae', self.vae))
        self.assertEqual(a.read_bytes(), b.read_bytes())

    def test_extras_and_dtypes(self):
        """Test that extras and every supported dtype survive a round trip"""
        checkpoint = Checkpoint(
            kind='tmdit', config={'a': 1},
            tensors={'f': torch.arange(3, dtype=torch.float32), 'd': torch.ones(2, 2, dtype=torch.float64),
                     'i': torch.tensor([7, -1])},
            vocabulary=['<pad>', '<null>', 'walks'], extras={'latent_mean': [0.5]},
        )
        path = self.dir / 'x.mfk'
        path.write_bytes(checkpoint_bytes(checkpoint))
        loaded = load_checkpoint(path)
        self.assertEqual(loaded.extras, {'latent_mean': [0.5]})
        self.assertEqual(len(loaded.vocab()), 3)
        for name, tensor in checkpoint.tensors.items():
            self.assertEqual(loaded.tensors[name].dtype, tensor.dtype)
            self.assertTrue(torch.equal(loaded.tensors[name], tensor))

    def test_format_errors(self):
        """Test that bad magic, wrong kind and stray bytes are format errors"""
        good = checkpoint_bytes(model_checkpoint('vae', self.vae))
        cases = {
            'magic': b'NOTACKPT' + good[len(MAGIC):],
            'truncated': good[:-5],
            'trailing': good + b'\x00',
        }
        for name, data in cases.items():
            path = self.dir / f'{name}.mfk'
            path.write_bytes(data)
            with self.assertRaises(FormatError, msg=name):
                load_checkpoint(path)
        path = self.dir / 'vae.mfk'
        path.write_bytes(good)
        with self.assertRaises(FormatError):
            load_tmdit(path)

    def test_resave_is_byte_identical(self):
        """Test that save, load, save again gives the same bytes for both model kinds"""
        first = save_checkpoint(self.dir / 'first.mfk', model_checkpoint('vae', self.vae))
        second = save_checkpoint(self.dir / 'second.mfk', load_checkpoint(first))
        self.assertEqual(first.read_bytes(), second.read_bytes())
        loaded, _ = load_vae(first)
        third = save_checkpoint(self.dir / 'third.mfk', model_checkpoint('vae', loaded))
        self.assertEqual(first.read_bytes(), third.read_bytes())

        torch.manual_seed(0)
        model = TMDiT(tiny_tmdit_config(preset_schedule('three_stage')))
        packed = model_checkpoint('tmdit', model, extras={'latent_mean': [0.0]})
        first = save_checkpoint(self.dir / 'tmdit.mfk', packed)
        loaded, checkpoint = load_tmdit(first)
        repacked = model_checkpoint('tmdit', loaded, extras=checkpoint.extras)
        again = save_checkpoint(self.dir / 'tmdit2.mfk', repacked)
        self.assertEqual(first.read_bytes(), again.read_bytes())

    def test_missing_header_keys(self):
        """Test that a header without its tensor table, kind or tensor fields is a format error"""
        good = {'kind': 'vae', 'config': {}, 'tensors': [
            {'name': 'w', 'dtype': '<f4', 'shape': [1], 'offset': 0, 'nbytes': 4}]}
        cases = {
            'tensors': {k: v for k, v in good.items() if k != 'tensors'},
            'config': {k: v for k, v in good.items() if k != 'config'},
            'nbytes': dict(good, tensors=[{k: v for k, v in good['tensors'][0].items() if k != 'nbytes'}]),
            'shape': dict(good, tensors=[dict(good['tensors'][0], shape='one')]),
        }
        for name, header in cases.items():
            header = _dumps(header)
            path = self.dir / f'{name}.mfk'
            path.write_bytes(MAGIC + _PREFIX.pack(VERSION, len(header)) + header + b'\x00' * 4)
            with self.assertRaises(FormatError, msg=name):
                load_checkpoint(path)

    def test_velocity_checkpoint_keeps_its_skeleton(self):
        """Test that a velocity model reloads on the latent skeleton it was trained on"""
        default = pooled_layout(reference_layout())
        data = layout_to_dict(default)
        data['name'] = 'wide'
        for joint in data['joints']:
            joint['tpose'] = [2 * joint['tpose'][0], 2 * joint['tpose'][1]]
        wide = layout_from_dict(data)
        sched = preset_schedule('three_stage')
        torch.manual_seed(0)
        model = TMDiT(tiny_tmdit_config(sched), layout=wide).eval()
        nn.init.normal_(model.final_layer.linear.weight, std=0.02)

        path = save_checkpoint(self.dir / 'wide.mfk', model_checkpoint('tmdit', model))
        loaded, _ = load_tmdit(path)
        self.assertEqual(loaded.layout, wide)
        self.assertNotEqual(loaded.layout, default)
        x = torch.randn(1, 4, 6, 4, generator=torch.Generator().manual_seed(1))
        tokens = torch.tensor([[2, 3]])
        with torch.no_grad():
            self.assertTrue(torch.equal(loaded(x, 0.9, tokens, 1.0), model(x, 0.9, tokens, 1.0)))

        checkpoint = load_checkpoint(path)
        del checkpoint.extras['layout']
        save_checkpoint(path, checkpoint)
        with self.assertRaises(FormatError):
            load_tmdit(path)

    def test_unknown_kind(self):
        """Test that only known model kinds are packed"""
        with self.assertRaises(FormatError):
            model_checkpoint('gan', self.vae)


class TrainVAETestCase(SimpleTestCase):
    """Test the first training stage"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.records = small_corpus().records

    def test_zero_steps_is_initialization(self):
        """Test that a zero-step run returns the seeded initialization"""
        model, history = train_vae(self.records, VAE_CONFIG, train_config(steps=0))
        self.assertTrue(state_equal(model, build_vae(VAE_CONFIG, self.records, seed=5)))
        self.assertEqual(len(history), 0)

    def test_loss_trace_is_deterministic(self):
        """Test that two runs with one seed give the same loss trace"""
        _, a = train_vae(self.records, VAE_CONFIG, train_config())
        _, b = train_vae(self.records, VAE_CONFIG, train_config())
        self.assertEqual(a['loss'].tolist(), b['loss'].tolist())
        self.assertEqual(list(a.columns), ['step', 'loss', 'recon_mse', 'kl', 'aug', 'aug_ratio', 'lr'])
        self.assertTrue(((a['aug_ratio'] >= 0.3) & (a['aug_ratio'] <= 1.0)).all())

    def test_training_lowers_reconstruction_error(self):
        """Test that a short run reconstructs the corpus better than the initialization"""
        config = train_config(steps=300)
        model, history = train_vae(self.records, VAE_CONFIG, config)
        initial = build_vae(VAE_CONFIG, self.records, seed=config.seed).eval()
        self.assertLess(reconstruction_mse(model, self.records), reconstruction_mse(initial, self.records))
        self.assertLess(history['recon_mse'].tail(50).mean(), history['recon_mse'].head(10).mean())

    def test_statistics_are_buffers(self):
        """Test that the data statistics travel with the weights"""
        model = build_vae(VAE_CONFIG, self.records, seed=0)
        mean, _ = motion_statistics(self.records)
        self.assertTrue(np.allclose(model.data_mean.numpy(), mean, atol=1e-6))
        self.assertIn('data_std', model.state_dict())


class TrainTMDiTTestCase(SimpleTestCase):
    """Test the second training stage"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        corpus = small_corpus()
        cls.records = corpus.records
        cls.vocabulary = Vocabulary.from_list(corpus.header['vocabulary'])
        cls.sched = preset_schedule('three_stage')
        cls.vae = build_vae(VAE_CONFIG, cls.records, seed=0).eval()

    def train(self, **overrides):
        return train_tmdit(self.records, self.vae, tiny_tmdit_config(self.sched), self.sched,
                           train_config(**overrides), self.vocabulary)

    def test_vae_stays_frozen(self):
        """Test that velocity training leaves every VAE weight bitwise unchanged"""
        before = {k: v.clone() for k, v in self.vae.state_dict().items()}
        self.train()
        after = self.vae.state_dict()
        self.assertTrue(all(torch.equal(before[k], after[k]) for k in before))

    def test_full_dropout(self):
        """Test that dropout probability one trains only on the null condition"""
        _, history, _ = self.train(cfg_dropout=1.0)
        self.assertTrue((history['uncond_fraction'] == 1.0).all())
        _, history, _ = self.train(cfg_dropout=0.0)
        self.assertTrue((history['uncond_fraction'] == 0.0).all())

    def test_stage_counts(self):
        """Test that each step's stage draws add up to the batch"""
        _, history, _ = self.train()
        stage_columns = [f'stage_{k}' for k in self.sched.stages]
        self.assertTrue((history[stage_columns].sum(axis=1) == 4).all())

    def test_deterministic(self):
        """Test that two runs with one seed give the same loss trace"""
        _, a, scaler = self.train()
        _, b, _ = self.train()
        self.assertEqual(a['loss'].tolist(), b['loss'].tolist())
        self.assertEqual(tuple(scaler.mean.shape), (6, 4))

    def test_incompatible_models(self):
        """Test that mismatched latent widths are rejected"""
        config = TMDiTConfig(n_blocks=2, n_separate=1, n_shared=1, model_dim=32, n_heads=2, ffn_dim=64,
                             latent_dim=8)
        with self.assertRaises(InvalidArgument):
            train_tmdit(self.records, self.vae, config, self.sched, train_config(), self.vocabulary)

    def test_stage_draws_cover_schedule(self):
        """Test that the per-sample stage draw reaches every stage"""
        torch.manual_seed(0)
        model = TMDiT(tiny_tmdit_config(self.sched))
        x1 = torch.randn(64, 4, 6, 4)
        tokens = torch.full((64, 1), NULL_ID, dtype=torch.long)
        loss, stages = flow_loss(model, self.sched, x1, tokens, torch.Generator().manual_seed(0))
        self.assertTrue(torch.isfinite(loss))
        self.assertEqual(set(stages.tolist()), {1, 2, 3})

    def test_stage_draws_are_uniform(self):
        """Test that every stage count over many draws lies within three sigma of N/K"""
        n, K = 3000, self.sched.K
        stages = draw_stages(self.sched, n, torch.Generator().manual_seed(0))
        sigma = math.sqrt(n * (1 / K) * (1 - 1 / K))
        for k in self.sched.stages:
            count = int((stages == k).sum())
            self.assertLessEqual(abs(count - n / K), 3 * sigma, msg=f'stage {k}: {count} draws')
        self.assertEqual(int(stages.min()), 1)
        self.assertEqual(int(stages.max()), K)

    def test_initial_loss_is_target_energy(self):
        """Test that an untrained model's loss is the mean square of its regression targets"""
        torch.manual_seed(0)
        model = TMDiT(tiny_tmdit_config(self.sched))
        x1 = torch.randn(16, 8, 6, 4, generator=torch.Generator().manual_seed(3))
        tokens = torch.full((16, 1), NULL_ID, dtype=torch.long)
        loss, _ = flow_loss(model, self.sched, x1, tokens, torch.Generator().manual_seed(7))

        generator = torch.Generator().manual_seed(7)
        x0 = torch.randn(x1.shape, generator=generator, dtype=x1.dtype)
        stages = draw_stages(self.sched, len(x1), generator)
        energies = []
        for i, k in enumerate(stages.tolist()):
            ep = FlowEndpoints(x0[i:i + 1], x1[i:i + 1], time_dim=1)
            target = training_sample(ep, self.sched, k, self.sched.interval(k)[0]).target
            energies.append(float(target.pow(2).mean()))
        expected = sum(energies) / len(energies)
        self.assertAlmostEqual(float(loss), expected, delta=1e-5 * expected)

    def test_loss_decreases(self):
        """Test that a short run on the tiny corpus lowers the flow loss"""
        _, history, _ = self.train(steps=300, cfg_dropout=0.0)
        self.assertLess(history['loss'].tail(50).mean(), 0.9 * history['loss'].head(10).mean())


class FlowHelpersTestCase(SimpleTestCase):
    """Test latent scaling and condition dropout"""

    def test_scaler_round_trip(self):
        """Test that restoring a standardized latent gives the latent back"""
        scaler = LatentScaler(torch.full((6, 4), 0.5), torch.full((6, 4), 2.0))
        z = torch.randn(2, 8, 6, 4, dtype=torch.float64)
        self.assertTrue(torch.allclose(scaler.restore(scaler.standardize(z)), z))
        again = LatentScaler.from_extras(scaler.to_extras())
        self.assertTrue(torch.equal(again.std, scaler.std))
        with self.assertRaises(InvalidArgument):
            LatentScaler.from_extras({})

    def test_drop_conditions(self):
        """Test that dropped rows become the single null token"""
        rows, dropped = drop_conditions([[5, 6], [7]], 1.0, np.random.default_rng(0))
        self.assertEqual(rows, [[NULL_ID], [NULL_ID]])
        self.assertTrue(dropped.all())


class FormTestCase(SimpleTestCase):
    """Test the training config sections"""

    def test_defaults(self):
        """Test that an empty section gives the default training config"""
        config = TrainConfigForm({}).train_config(seed=3)
        self.assertEqual(config.steps, 5000)
        self.assertEqual(config.seed, 3)
        self.assertEqual(config.lr_drops, [0.5, 0.75])

    def test_unknown_key(self):
        """Test that a misspelt key is a config error"""
        with self.assertRaises(InvalidConfig) as ctx:
            TrainConfigForm({'step': 10}).config()
        self.assertIn('__all__', ctx.exception.errors)

    def test_bad_value(self):
        """Test that a negative batch size is reported against its field"""
        with self.assertRaises(InvalidConfig) as ctx:
            TrainConfigForm({'batch_size': 0}).config()
        self.assertIn('batch_size', ctx.exception.errors)

    def test_vae_section(self):
        """Test that the VAE section builds a VAE config"""
        self.assertEqual(VAEConfigForm({'latent_dim': 4}).vae_config().latent_dim, 4)
        self.assertTrue(VAEConfigForm({}).vae_config().topology)
        self.assertFalse(VAEConfigForm({'topology': False}).vae_config().topology)

    def test_tmdit_desk_preset(self):
        """Test that the desk flag starts from the small preset and takes overrides"""
        config = TMDiTConfigForm({'model_dim': 32, 'n_heads': 2}).tmdit_config([0.5, 1.0])
        self.assertEqual((config.n_blocks, config.model_dim, config.scales), (4, 32, [0.5, 1.0]))
        full = TMDiTConfigForm({'desk': False}).tmdit_config([1.0])
        self.assertEqual(full.model_dim, 384)

    def test_tmdit_invalid_combination(self):
        """Test that a head width the rotary split cannot use is a config error"""
        with self.assertRaises(InvalidConfig):
            TMDiTConfigForm({'model_dim': 24, 'n_heads': 2}).tmdit_config([1.0])
