"""
Motion VAE.

Encoder: two blocks of (graph conv, GELU, stride-2 temporal conv), then mean
pooling of the 15 joints into 6 body-part groups and linear heads for the
posterior mean and log-variance. A motion of L frames becomes floor(L/4)
latent frames.

Decoder: broadcast each group feature back to its member joints, add a
learned per-joint embedding, then two blocks of (graph conv, GELU, stride-2
transposed temporal conv) and a linear read-out. l latent frames become 4l
motion frames.

With `topology=False` the skeleton is ignored: each frame is flattened into
one pose vector, the same temporal convolutions run on it, and the heads
reshape to the same [l, 6, d] latent. The 6 latent slots then carry no
body-part meaning. This is the baseline the skeleton-aware model is compared
against.
"""
from dataclasses import asdict, dataclass, fields
import logging

import torch
import torch.nn as nn
import torch.nn.functional as F

from flows.resample import resample_to
from motionflow.exceptions import InvalidArgument, InvalidConfig
from skeleton.layout import synthetic_layout

from .graph import GraphConv, GraphSpec

logger = logging.getLogger(__name__)

DOWNSAMPLE = 4


@dataclass
class VAEConfig:
    joints: int = 15
    channels: int = 6
    hidden: int = 64
    latent_dim: int = 8
    latent_joints: int = 6
    kl_weight: float = 1e-2
    aug_weight: float = 0.5
    topology: bool = True

    def __post_init__(self):
        if min(self.joints, self.channels, self.hidden, self.latent_dim, self.latent_joints) < 1:
            raise InvalidConfig('VAE widths must be positive')
        if self.kl_weight < 0 or self.aug_weight < 0:
            raise InvalidConfig('loss weights must be non-negative')
        self.topology = bool(self.topology)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f'unknown VAE config keys: {", ".join(sorted(unknown))}')
        return cls(**data)


class TemporalConv(nn.Module):
    """Per-joint 1D convolution over time on [B, T, J, C] tensors."""

    def __init__(self, channels, transpose=False):
        super().__init__()
        conv = nn.ConvTranspose1d if transpose else nn.Conv1d
        self.conv = conv(channels, channels, kernel_size=4, stride=2, padding=1)

    def forward(self, x):
        B, T, J, C = x.shape
        h = x.permute(0, 2, 3, 1).reshape(B * J, C, T)
        h = self.conv(h)
        return h.reshape(B, J, C, h.shape[-1]).permute(0, 3, 1, 2)


class MotionVAE(nn.Module):

    def __init__(self, config=None, layout=None):
        super().__init__()
        self.config = config or VAEConfig()
        cfg = self.config
        self.register_buffer('data_mean', torch.zeros(cfg.joints, cfg.channels))
        self.register_buffer('data_std', torch.ones(cfg.joints, cfg.channels))
        if cfg.topology:
            self._build_graph(layout or synthetic_layout())
        else:
            self._build_plain()

    def _build_graph(self, layout):
        cfg = self.config
        graph = GraphSpec.from_layout(layout)
        if graph.n_joints != cfg.joints or graph.n_groups != cfg.latent_joints:
            raise InvalidConfig(
                f'skeleton has {graph.n_joints} joints / {graph.n_groups} groups, '
                f'config says {cfg.joints} / {cfg.latent_joints}'
            )
        A = graph.adjacency
        self.register_buffer('pool', graph.pooling().float())
        self.register_buffer('unpool', graph.assignment.float())

        self.enc_in = GraphConv(A, cfg.channels, cfg.hidden)
        self.enc_down1 = TemporalConv(cfg.hidden)
        self.enc_gcn = GraphConv(A, cfg.hidden, cfg.hidden)
        self.enc_down2 = TemporalConv(cfg.hidden)
        self.mean_head = nn.Linear(cfg.hidden, cfg.latent_dim)
        self.logvar_head = nn.Linear(cfg.hidden, cfg.latent_dim)

        self.dec_in = nn.Linear(cfg.latent_dim, cfg.hidden)
        self.joint_embed = nn.Parameter(torch.randn(cfg.joints, cfg.hidden) * 0.02)
        self.dec_gcn1 = GraphConv(A, cfg.hidden, cfg.hidden)
        self.dec_up1 = TemporalConv(cfg.hidden, transpose=True)
        self.dec_gcn2 = GraphConv(A, cfg.hidden, cfg.hidden)
        self.dec_up2 = TemporalConv(cfg.hidden, transpose=True)
        self.dec_out = nn.Linear(cfg.hidden, cfg.channels)

    def _build_plain(self):
        cfg = self.config
        pose = cfg.joints * cfg.channels
        latent = cfg.latent_joints * cfg.latent_dim

        self.enc_in = nn.Linear(pose, cfg.hidden)
        self.enc_down1 = TemporalConv(cfg.hidden)
        self.enc_mid = nn.Linear(cfg.hidden, cfg.hidden)
        self.enc_down2 = TemporalConv(cfg.hidden)
        self.mean_head = nn.Linear(cfg.hidden, latent)
        self.logvar_head = nn.Linear(cfg.hidden, latent)

        self.dec_in = nn.Linear(latent, cfg.hidden)
        self.dec_mid1 = nn.Linear(cfg.hidden, cfg.hidden)
        self.dec_up1 = TemporalConv(cfg.hidden, transpose=True)
        self.dec_mid2 = nn.Linear(cfg.hidden, cfg.hidden)
        self.dec_up2 = TemporalConv(cfg.hidden, transpose=True)
        self.dec_out = nn.Linear(cfg.hidden, pose)

    # -- data normalization --------------------------------------------

    def set_statistics(self, mean, std, floor=1e-6):
        mean = torch.as_tensor(mean, dtype=self.data_mean.dtype)
        std = torch.as_tensor(std, dtype=self.data_std.dtype)
        self.data_mean.copy_(mean)
        self.data_std.copy_(torch.where(std < floor, torch.ones_like(std), std))

    def normalize(self, motion):
        return (motion - self.data_mean.to(motion.dtype)) / self.data_std.to(motion.dtype)

    def denormalize(self, motion):
        return motion * self.data_std.to(motion.dtype) + self.data_mean.to(motion.dtype)

    # -- encode / decode -------------------------------------------------

    @staticmethod
    def _batched(x):
        return (x.unsqueeze(0), True) if x.dim() == 3 else (x, False)

    def encode(self, motion):
        """Posterior (mean, logvar), each [B, floor(L/4), 6, d], of normalized motion."""
        x, unbatched = self._batched(motion)
        if x.dim() != 4 or x.shape[2:] != (self.config.joints, self.config.channels):
            raise InvalidArgument(
                f'motion must be [B, L, {self.config.joints}, {self.config.channels}], got {tuple(motion.shape)}'
            )
        if x.shape[1] < DOWNSAMPLE:
            raise InvalidArgument(f'motions need at least {DOWNSAMPLE} frames, got {x.shape[1]}')
        mean, logvar = self._encode_graph(x) if self.config.topology else self._encode_plain(x)
        if unbatched:
            return mean[0], logvar[0]
        return mean, logvar

    def _encode_graph(self, x):
        h = F.gelu(self.enc_in(x))
        h = self.enc_down1(h)
        h = F.gelu(self.enc_gcn(h))
        h = self.enc_down2(h)
        h = torch.einsum('gj,btjc->btgc', self.pool.to(h.dtype), h)
        return self.mean_head(h), self.logvar_head(h)

    def _encode_plain(self, x):
        B, T = x.shape[:2]
        h = F.gelu(self.enc_in(x.reshape(B, T, 1, -1)))
        h = self.enc_down1(h)
        h = F.gelu(self.enc_mid(h))
        h = self.enc_down2(h)
        shape = (B, h.shape[1], self.config.latent_joints, self.config.latent_dim)
        return self.mean_head(h).reshape(shape), self.logvar_head(h).reshape(shape)

    def decode(self, z, frames=None):
        """Normalized motion [B, 4l, J, C]; resampled to `frames` when given."""
        x, unbatched = self._batched(z)
        if x.dim() != 4 or x.shape[2:] != (self.config.latent_joints, self.config.latent_dim):
            raise InvalidArgument(
                f'latents must be [B, l, {self.config.latent_joints}, {self.config.latent_dim}], '
                f'got {tuple(z.shape)}'
            )
        if not torch.isfinite(x).all():
            raise InvalidArgument('cannot decode non-finite latents')
        out = self._decode_graph(x) if self.config.topology else self._decode_plain(x)
        if frames is not None and frames != out.shape[1]:
            out = resample_to(out, frames, dim=1)
        return out[0] if unbatched else out

    def _decode_graph(self, x):
        h = self.dec_in(x)
        h = torch.einsum('jg,btgc->btjc', self.unpool.to(h.dtype), h) + self.joint_embed.to(h.dtype)
        h = F.gelu(self.dec_gcn1(h))
        h = F.gelu(self.dec_up1(h))
        h = F.gelu(self.dec_gcn2(h))
        h = self.dec_up2(h)
        return self.dec_out(F.gelu(h))

    def _decode_plain(self, x):
        B, l = x.shape[:2]
        h = self.dec_in(x.reshape(B, l, 1, -1))
        h = F.gelu(self.dec_mid1(h))
        h = F.gelu(self.dec_up1(h))
        h = F.gelu(self.dec_mid2(h))
        h = self.dec_up2(h)
        out = self.dec_out(F.gelu(h))
        return out.reshape(B, out.shape[1], self.config.joints, self.config.channels)

    @staticmethod
    def reparameterize(mean, logvar, generator=None):
        noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype, device=mean.device)
        return mean + torch.exp(0.5 * logvar) * noise

    def forward(self, motion, generator=None, sample=True):
        mean, logvar = self.encode(motion)
        z = self.reparameterize(mean, logvar, generator) if sample else mean
        recon = self.decode(z, frames=motion.shape[-3])
        return recon, mean, logvar, z
