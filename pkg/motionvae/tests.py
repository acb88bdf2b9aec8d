"""Tests for the motion VAE"""
import torch
from django.test import SimpleTestCase

from flows.resample import resample
from motionflow.exceptions import InvalidArgument, InvalidConfig
from skeleton.layout import synthetic_layout

from .graph import GraphConv, GraphSpec, assignment_matrix, normalized_adjacency
from .losses import aug_loss, composite_loss, kl_divergence, vae_losses
from .network import MotionVAE, VAEConfig


def tiny_vae(dtype=torch.float32, seed=0):
    torch.manual_seed(seed)
    model = MotionVAE(VAEConfig(hidden=8, latent_dim=4))
    return model.to(dtype).eval()


def motion(frames, batch=2, seed=0, dtype=torch.float32):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(batch, frames, 15, 6, generator=g, dtype=dtype)


class GraphTestCase(SimpleTestCase):
    """Test the skeleton graph operators"""

    def test_assignment_rows_are_one_hot(self):
        """Test that every joint belongs to exactly one group and every group is used"""
        M = assignment_matrix(synthetic_layout())
        self.assertEqual(tuple(M.shape), (15, 6))
        self.assertTrue(torch.equal(M.sum(dim=1), torch.ones(15, dtype=M.dtype)))
        self.assertTrue((M.sum(dim=0) > 0).all())

    def test_adjacency_is_symmetric(self):
        """Test that the normalized adjacency is symmetric with a positive diagonal"""
        A = normalized_adjacency(synthetic_layout())
        self.assertTrue(torch.allclose(A, A.T))
        self.assertTrue((A.diagonal() > 0).all())

    def test_pooling_averages(self):
        """Test that pooling rows sum to one"""
        P = GraphSpec.from_layout(synthetic_layout()).pooling()
        self.assertTrue(torch.allclose(P.sum(dim=1), torch.ones(6, dtype=P.dtype)))


class ShapeTestCase(SimpleTestCase):
    """Test encoder and decoder shapes"""

    def test_encode_downsamples_by_four(self):
        """Test that L=64 gives 16 latent frames over 6 latent joints"""
        vae = tiny_vae()
        mean, logvar = vae.encode(motion(64))
        self.assertEqual(tuple(mean.shape), (2, 16, 6, 4))
        self.assertEqual(tuple(logvar.shape), (2, 16, 6, 4))

    def test_encode_floors_odd_lengths(self):
        """Test that L=67 gives 16 latent frames"""
        mean, _ = tiny_vae().encode(motion(67))
        self.assertEqual(mean.shape[1], 16)

    def test_encode_unbatched(self):
        """Test that a single motion is accepted without a batch axis"""
        mean, _ = tiny_vae().encode(motion(32, batch=1)[0])
        self.assertEqual(tuple(mean.shape), (8, 6, 4))

    def test_encode_is_deterministic(self):
        """Test that encoding the same motion twice gives identical posteriors"""
        vae, m = tiny_vae(), motion(40)
        first, second = vae.encode(m), vae.encode(m)
        self.assertTrue(torch.equal(first[0], second[0]))
        self.assertTrue(torch.equal(first[1], second[1]))

    def test_short_motion_rejected(self):
        """Test that fewer than four frames is an invalid argument"""
        with self.assertRaises(InvalidArgument):
            tiny_vae().encode(motion(3))

    def test_decode_upsamples_by_four(self):
        """Test that l'=16 and l'=5 decode to 64 and 20 frames"""
        vae = tiny_vae()
        for latent_frames, frames in [(16, 64), (5, 20), (1, 4)]:
            z = torch.randn(1, latent_frames, 6, 4)
            self.assertEqual(vae.decode(z).shape[1], frames)

    def test_decode_rejects_non_finite(self):
        """Test that non-finite latents are rejected"""
        z = torch.zeros(1, 4, 6, 4)
        z[0, 1, 2, 3] = float('nan')
        with self.assertRaises(InvalidArgument):
            tiny_vae().decode(z)

    def test_round_trip_shape(self):
        """Test that decode(encode(M)) has M's shape for lengths that are not multiples of four"""
        vae = tiny_vae()
        for frames in (4, 17, 64, 67):
            m = motion(frames, batch=1)
            mean, _ = vae.encode(m)
            self.assertEqual(vae.decode(mean, frames=frames).shape, m.shape)
            recon, *_ = vae(m, sample=False)
            self.assertEqual(recon.shape, m.shape)

    def test_mismatched_skeleton_rejected(self):
        """Test that a config disagreeing with the skeleton is rejected"""
        with self.assertRaises(InvalidConfig):
            MotionVAE(VAEConfig(joints=22))

    def test_statistics_round_trip(self):
        """Test that normalize and denormalize invert each other and tiny stds are floored"""
        vae = tiny_vae()
        std = torch.full((15, 6), 2.0)
        std[0, 5] = 0.0
        vae.set_statistics(torch.ones(15, 6), std)
        self.assertEqual(float(vae.data_std[0, 5]), 1.0)
        m = motion(8)
        self.assertTrue(torch.allclose(vae.denormalize(vae.normalize(m)), m, atol=1e-6))


class LossTestCase(SimpleTestCase):
    """Test the VAE losses"""

    def test_closed_forms(self):
        """Test perfect reconstruction, standard-normal KL and the unit-mean KL"""
        m = motion(8)
        zeros = torch.zeros(2, 2, 6, 4)
        parts = vae_losses(m, m.clone(), zeros, zeros)
        self.assertEqual(float(parts['recon_mse']), 0.0)
        self.assertEqual(float(parts['kl']), 0.0)
        self.assertAlmostEqual(float(kl_divergence(torch.ones(3, 4), torch.zeros(3, 4))), 0.5)

    def test_kl_non_negative(self):
        """Test that the KL term is non-negative for random posteriors"""
        g = torch.Generator().manual_seed(1)
        for _ in range(100):
            mean = torch.randn(5, 3, generator=g) * 3
            logvar = torch.randn(5, 3, generator=g) * 3
            self.assertGreaterEqual(float(kl_divergence(mean, logvar)), 0.0)

    def test_shape_mismatch(self):
        """Test that mismatched reconstructions are rejected"""
        zeros = torch.zeros(1, 1, 6, 4)
        with self.assertRaises(InvalidArgument):
            vae_losses(motion(8), motion(12), zeros, zeros)

    def test_aug_ratio_range(self):
        """Test that ratios outside [0.3, 1] are rejected"""
        vae, m = tiny_vae(), motion(16)
        z, _ = vae.encode(m)
        for ratio in (0.2, 1.1):
            with self.assertRaises(InvalidArgument):
                aug_loss(vae, z, m, ratio)

    def test_aug_at_full_ratio_matches_reconstruction(self):
        """Test that r=1 reproduces the reconstruction error exactly"""
        vae = tiny_vae(torch.float64)
        m = motion(64, dtype=torch.float64)
        with torch.no_grad():
            recon, mean, logvar, z = vae(m, generator=torch.Generator().manual_seed(3))
            recon_mse = vae_losses(m, recon, mean, logvar)['recon_mse']
            self.assertLessEqual(abs(float(aug_loss(vae, z, m, 1.0) - recon_mse)), 1e-12)

    def test_aug_zero_when_target_is_the_decoding(self):
        """Test that a motion equal to the shortened decoding gives zero loss at r=0.5"""
        vae = tiny_vae(torch.float64)
        z = torch.randn(1, 16, 6, 4, dtype=torch.float64)
        with torch.no_grad():
            target = vae.decode(resample(z, 0.5, dim=1))
            value = aug_loss(vae, z, target, 0.5)
        self.assertEqual(float(value), 0.0)

    def test_aug_finite_for_random_ratios(self):
        """Test that the augmentation loss is finite and non-negative for sampled ratios"""
        vae, m = tiny_vae(), motion(48)
        z, _ = vae.encode(m)
        g = torch.Generator().manual_seed(5)
        with torch.no_grad():
            for _ in range(10):
                ratio = 0.3 + 0.7 * float(torch.rand((), generator=g))
                value = float(aug_loss(vae, z, m, ratio))
                self.assertTrue(value >= 0.0 and value == value)


class GradientTestCase(SimpleTestCase):
    """Test composite-loss gradients against central finite differences"""

    def test_parameter_gradients(self):
        """Test that autograd matches finite differences on random parameter entries"""
        vae = tiny_vae(torch.float64, seed=2)
        m = motion(16, dtype=torch.float64, seed=4)

        def loss():
            total, _ = composite_loss(vae, m, generator=torch.Generator().manual_seed(9), ratio=0.5)
            return total

        vae.zero_grad()
        loss().backward()
        params = [p for p in vae.parameters() if p.requires_grad]
        g = torch.Generator().manual_seed(0)
        eps = 1e-6
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


class PlainVAETestCase(SimpleTestCase):
    """Test the VAE variant without the skeleton graph"""

    def setUp(self):
        torch.manual_seed(0)
        self.vae = MotionVAE(VAEConfig(hidden=8, latent_dim=4, topology=False)).eval()

    def test_no_graph_operators(self):
        """Test that no graph convolution or joint pooling is built"""
        self.assertFalse(any(isinstance(m, GraphConv) for m in self.vae.modules()))
        self.assertNotIn('pool', dict(self.vae.named_buffers()))
        self.assertNotIn('unpool', dict(self.vae.named_buffers()))

    def test_latent_shape_matches_graph_variant(self):
        """Test that both variants produce the same latent and output shapes"""
        m = motion(18)
        mean, logvar = self.vae.encode(m)
        self.assertEqual(tuple(mean.shape), (2, 4, 6, 4))
        self.assertEqual(mean.shape, tiny_vae().encode(m)[0].shape)
        self.assertEqual(logvar.shape, mean.shape)
        self.assertEqual(tuple(self.vae.decode(mean).shape), (2, 16, 15, 6))
        recon, *_ = self.vae(m, sample=False)
        self.assertEqual(recon.shape, m.shape)

    def test_aug_at_full_ratio_matches_reconstruction(self):
        """Test that the augmentation loss at ratio one is the reconstruction error"""
        m = motion(16, dtype=torch.float64)
        vae = self.vae.to(torch.float64)
        z, _ = vae.encode(m)
        expected = (vae.decode(z, frames=16) - m).pow(2).mean()
        self.assertLessEqual(abs(float(aug_loss(vae, z, m, 1.0)) - float(expected)), 1e-12)

    def test_skeleton_joint_count_not_checked(self):
        """Test that the plain variant accepts pose sizes the skeleton does not have"""
        vae = MotionVAE(VAEConfig(joints=22, channels=12, hidden=8, latent_dim=4, topology=False))
        mean, _ = vae.encode(torch.randn(1, 8, 22, 12))
        self.assertEqual(tuple(mean.shape), (1, 2, 6, 4))

    def test_config_round_trip(self):
        """Test that the flag survives the config dictionary"""
        config = VAEConfig.from_dict(self.vae.config.to_dict())
        self.assertFalse(config.topology)
        self.assertTrue(VAEConfig.from_dict({}).topology)
