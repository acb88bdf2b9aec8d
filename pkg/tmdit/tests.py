"""Tests for the velocity model"""
import torch
import torch.nn as nn
from django.test import SimpleTestCase

from flows.hierarchy import hfm_loss
from flows.schedule import make_schedule
from motionflow.exceptions import InvalidArgument, InvalidConfig
from skeleton.rope import RopeConfig, rope_angles, text_positions, token_positions

from .blocks import TMDiTBlock
from .conditioning import null_tokens
from .network import TMDiT, TMDiTConfig, predict_velocity

SCALES = [1 / 3, 2 / 3, 1.0]


def tiny_model(dtype=torch.float64, seed=0, **overrides):
    torch.manual_seed(seed)
    values = dict(n_blocks=2, n_separate=1, n_shared=1, model_dim=32, n_heads=2, ffn_dim=64,
                  vocab_size=20, max_words=8, latent_dim=4, scales=SCALES)
    values.update(overrides)
    model = TMDiT(TMDiTConfig(**values))
    # the shipped read-out starts at zero; give it weights so outputs depend on the inputs
    nn.init.normal_(model.final_layer.linear.weight, std=0.02)
    nn.init.normal_(model.final_layer.linear.bias, std=0.02)
    return model.to(dtype).eval()


def latents(batch, frames, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(batch, frames, 6, 4, generator=g, dtype=dtype)


def words(batch, n, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randint(2, 20, (batch, n), generator=g)


class ConfigTestCase(SimpleTestCase):
    """Test configuration validation"""

    def test_full_scale_defaults(self):
        """Test that the default config is the full-size one"""
        cfg = TMDiTConfig()
        self.assertEqual((cfg.n_blocks, cfg.n_separate, cfg.n_shared), (9, 3, 6))
        self.assertEqual((cfg.model_dim, cfg.n_heads, cfg.head_dim), (384, 6, 64))

    def test_block_split_must_add_up(self):
        """Test that n_separate + n_shared must equal n_blocks"""
        with self.assertRaises(InvalidConfig):
            TMDiTConfig(n_blocks=4, n_separate=1, n_shared=2)

    def test_head_dim_divisible_by_sixteen(self):
        """Test that head_dim must split into the four rotary segments"""
        with self.assertRaises(InvalidConfig):
            TMDiTConfig.desk(model_dim=40, n_heads=4)

    def test_round_trip_through_dict(self):
        """Test that to_dict and from_dict agree and unknown keys are rejected"""
        cfg = TMDiTConfig.desk()
        self.assertEqual(TMDiTConfig.from_dict(cfg.to_dict()), cfg)
        with self.assertRaises(InvalidConfig):
            TMDiTConfig.from_dict(dict(cfg.to_dict(), depth=3))


class ConditioningTestCase(SimpleTestCase):
    """Test the fused conditioning vector"""

    def setUp(self):
        self.model = tiny_model()
        self.c_vec = torch.randn(1, 32, dtype=torch.float64, generator=torch.Generator().manual_seed(1))

    def test_deterministic(self):
        """Test that identical inputs give identical y"""
        a = self.model.fuse_conditioning(0.3, self.c_vec, 2 / 3)
        b = self.model.fuse_conditioning(0.3, self.c_vec, 2 / 3)
        self.assertTrue(torch.equal(a, b))

    def test_time_changes_y(self):
        """Test that t=0 and t=1 give distinct y"""
        a = self.model.fuse_conditioning(0.0, self.c_vec, 1.0)
        b = self.model.fuse_conditioning(1.0, self.c_vec, 1.0)
        self.assertGreater(float((a - b).abs().max()), 1e-6)

    def test_null_condition(self):
        """Test that the null token gives a finite conditioning vector"""
        cond = self.model.condition(null_tokens(2), 0.5, 1.0)
        y = self.model.fuse_conditioning(cond.t, cond.c_vec, 1.0)
        self.assertEqual(tuple(y.shape), (2, 32))
        self.assertTrue(torch.isfinite(y).all())

    def test_out_of_range_inputs(self):
        """Test that t outside [0, 1] and scales outside (0, 1] or off the table are rejected"""
        for t, scale in [(-0.1, 1.0), (1.5, 1.0), (0.5, 0.0), (0.5, 1.2), (0.5, 0.5)]:
            with self.subTest(t=t, scale=scale), self.assertRaises(InvalidArgument):
                self.model.fuse_conditioning(t, self.c_vec, scale)

    def test_empty_token_row(self):
        """Test that a row of padding only is rejected"""
        with self.assertRaises(InvalidArgument):
            self.model.condition(torch.zeros(1, 3, dtype=torch.long), 0.5, 1.0)


class BlockTestCase(SimpleTestCase):
    """Test a single dual-stream block"""

    def setUp(self):
        torch.manual_seed(3)
        self.rope = RopeConfig(head_dim=16)
        self.model = tiny_model()
        g = torch.Generator().manual_seed(4)
        self.x = torch.randn(2, 12, 32, generator=g, dtype=torch.float64)
        self.c = torch.randn(2, 5, 32, generator=g, dtype=torch.float64)
        self.y = torch.randn(2, 32, generator=g, dtype=torch.float64)
        self.motion_angles = rope_angles(token_positions(self.model.layout, 2, 1.0), self.rope)
        self.text_angles = rope_angles(text_positions(5), self.rope)

    def block(self, **kwargs):
        return TMDiTBlock(32, 2, 64, self.rope, **kwargs).to(torch.float64)

    def test_shapes(self):
        """Test that both streams keep their shapes"""
        x, c = self.block()(self.x, self.c, self.y, self.motion_angles, self.text_angles)
        self.assertEqual(x.shape, self.x.shape)
        self.assertEqual(c.shape, self.c.shape)

    def test_zero_gates_are_identity(self):
        """Test that zeroed modulation makes the block an exact identity"""
        block = self.block()
        for stream in (block.motion, block.text):
            nn.init.zeros_(stream.adaLN_modulation[-1].weight)
            nn.init.zeros_(stream.adaLN_modulation[-1].bias)
        x, c = block(self.x, self.c, self.y, self.motion_angles, self.text_angles)
        self.assertTrue(torch.equal(x, self.x))
        self.assertTrue(torch.equal(c, self.c))

    def test_text_order_does_not_matter_without_text_rope(self):
        """Test that permuting text tokens leaves the motion stream unchanged"""
        block = self.block()
        perm = torch.tensor([3, 0, 4, 2, 1])
        x1, _ = block(self.x, self.c, self.y, self.motion_angles, None)
        x2, _ = block(self.x, self.c[:, perm], self.y, self.motion_angles, None)
        self.assertTrue(torch.allclose(x1, x2, atol=1e-10))

    def test_padding_is_masked(self):
        """Test that masked text tokens do not affect the motion stream"""
        block = self.block()
        mask = torch.tensor([[True, True, True, False, False]] * 2)
        altered = self.c.clone()
        altered[:, 3:] = 100.0
        x1, _ = block(self.x, self.c, self.y, self.motion_angles, self.text_angles, mask)
        x2, _ = block(self.x, altered, self.y, self.motion_angles, self.text_angles, mask)
        self.assertTrue(torch.allclose(x1, x2, atol=1e-10))

    def test_width_mismatch(self):
        """Test that tokens of the wrong width are rejected"""
        with self.assertRaises(InvalidArgument):
            self.block()(self.x[..., :16], self.c, self.y, self.motion_angles, self.text_angles)

    def test_shared_block_weight_identity(self):
        """Test that a shared block's streams use the same parameter storage"""
        block = self.block(shared=True)
        self.assertIs(block.text, block.motion)
        with torch.no_grad():
            block.motion.qkv.weight[0, 0] = 42.0
        self.assertEqual(float(block.text.qkv.weight[0, 0]), 42.0)
        separate = self.block()
        self.assertNotEqual(separate.text.qkv.weight.data_ptr(), separate.motion.qkv.weight.data_ptr())


class NetworkTestCase(SimpleTestCase):
    """Test the full velocity network"""

    def test_shapes_at_every_scale(self):
        """Test that the output shape equals the input shape at each stage scale"""
        model = tiny_model()
        tokens = words(2, 4)
        for scale, frames in zip(SCALES, (5, 11, 16)):
            x = latents(2, frames)
            self.assertEqual(model(x, 0.5, tokens, scale).shape, x.shape)

    def test_deterministic(self):
        """Test that two calls agree bitwise"""
        model, x, tokens = tiny_model(), latents(1, 8), words(1, 3)
        self.assertTrue(torch.equal(model(x, 0.2, tokens, 1.0), model(x, 0.2, tokens, 1.0)))

    def test_scale_conditioning_is_live(self):
        """Test that changing the stage scale changes the output"""
        model, x, tokens = tiny_model(), latents(1, 8), words(1, 3)
        a = model(x, 0.5, tokens, 1 / 3)
        b = model(x, 0.5, tokens, 2 / 3)
        self.assertGreater(float((a - b).abs().max()), 1e-6)

    def test_fresh_model_predicts_zero(self):
        """Test that an untrained model's read-out is zero while its inputs still get gradients"""
        torch.manual_seed(0)
        model = TMDiT(TMDiTConfig(n_blocks=2, n_separate=1, n_shared=1, model_dim=32, n_heads=2,
                                  ffn_dim=64, vocab_size=20, max_words=8, latent_dim=4, scales=SCALES))
        x = latents(2, 5, dtype=torch.float32)
        out = model(x, 0.4, words(2, 3), 2 / 3)
        self.assertTrue(torch.equal(out, torch.zeros_like(x)))
        (out - 1).pow(2).sum().backward()
        self.assertGreater(float(model.final_layer.linear.weight.grad.abs().max()), 0.0)

    def test_shared_blocks(self):
        """Test that blocks past n_separate share their streams"""
        model = tiny_model(n_blocks=3, n_separate=1, n_shared=2)
        self.assertIsNot(model.blocks[0].text, model.blocks[0].motion)
        self.assertIs(model.blocks[1].text, model.blocks[1].motion)
        self.assertIs(model.blocks[2].text, model.blocks[2].motion)

    def test_adaln_baseline(self):
        """Test that the motion-only baseline has no text stream and still runs"""
        model = tiny_model(arch='adaln')
        self.assertIsNone(model.text_embed)
        self.assertTrue(all(block.text is None for block in model.blocks))
        x = latents(2, 6)
        self.assertEqual(model(x, 0.5, words(2, 3), 1.0).shape, x.shape)

    def test_bad_inputs(self):
        """Test that malformed latents and token batches are rejected"""
        model = tiny_model()
        with self.assertRaises(InvalidArgument):
            model(latents(1, 4)[..., :3], 0.5, words(1, 2), 1.0)
        with self.assertRaises(InvalidArgument):
            model(latents(2, 4), 0.5, words(1, 2), 1.0)
        bad = latents(1, 4)
        bad[0, 0, 0, 0] = float('inf')
        with self.assertRaises(InvalidArgument):
            model(bad, 0.5, words(1, 2), 1.0)

    def test_velocity_fn_adapter(self):
        """Test that the sampler adapter handles unbatched points and the null condition"""
        model = tiny_model()
        sched = make_schedule(SCALES)
        vfn = model.velocity_fn(sched)
        x = latents(1, 5)[0]
        self.assertEqual(vfn(x, 0.1, 1, None).shape, x.shape)
        self.assertEqual(vfn(x, 0.1, 1, words(1, 3)[0]).shape, x.shape)
        expected = predict_velocity(model, x.unsqueeze(0), 0.1, null_tokens(1), sched, 1)[0]
        self.assertTrue(torch.equal(vfn(x, 0.1, 1, None), expected))

    def test_latent_length_limit(self):
        """Test that latents longer than l_max are rejected and l_max itself is accepted"""
        model = tiny_model(l_max=6)
        sched = make_schedule(SCALES)
        self.assertEqual(predict_velocity(model, latents(1, 6), 0.9, words(1, 2), sched, 3).shape, (1, 6, 6, 4))
        with self.assertRaises(InvalidArgument):
            predict_velocity(model, latents(1, 7), 0.9, words(1, 2), sched, 3)
        with self.assertRaises(InvalidConfig):
            TMDiTConfig(l_max=0)

    def test_long_prompt_is_truncated_with_warning(self):
        """Test that words past max_words are dropped and the drop is logged"""
        model, x = tiny_model(), latents(1, 4)
        tokens = words(1, 12)
        with self.assertLogs('tmdit.network', level='WARNING') as logs:
            truncated = model(x, 0.5, tokens, 1.0)
        self.assertIn('keeping the first 8', logs.output[0])
        self.assertTrue(torch.equal(truncated, model(x, 0.5, tokens[:, :8], 1.0)))


class GradientTestCase(SimpleTestCase):
    """Test flow-loss gradients against central finite differences"""

    def test_parameter_gradients(self):
        """Test that autograd matches finite differences on random parameter entries"""
        model = tiny_model(seed=5)
        sched = make_schedule(SCALES)
        x, target, tokens = latents(2, 6, seed=1), latents(2, 6, seed=2), words(2, 3)
        t = torch.tensor([0.7, 0.8], dtype=torch.float64)

        def loss():
            return hfm_loss(predict_velocity(model, x, t, tokens, sched, 3), target)

        model.zero_grad()
        loss().backward()
        params = [p for p in model.parameters() if p.grad is not None and p.grad.abs().max() > 0]
        g = torch.Generator().manual_seed(0)
        eps = 1e-4
        for trial in range(6):
            p = params[int(torch.randint(len(params), (1,), generator=g))]
            flat = p.data.view(-1)
            i = int(torch.randint(flat.numel(), (1,), generator=g))
            analytic = float(p.grad.view(-1)[i])
            saved = float(flat[i])
            with torch.no_grad():
                flat[i] = saved + eps
                up = float(loss())
                flat[i] = saved - eps
                down = float(loss())
                flat[i] = saved
            numeric = (up - down) / (2 * eps)
            with self.subTest(trial=trial):
                self.assertLessEqual(abs(analytic - numeric), 1e-4 * max(abs(analytic), abs(numeric)) + 1e-8)
