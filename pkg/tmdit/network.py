"""
TMDiT: the text-motion diffusion transformer that serves as the velocity field.

Latent tokens (one per frame and latent joint) and word tokens run through
`n_blocks` blocks of joint attention. The first `n_separate` blocks keep
separate weights per stream; the last `n_shared` blocks use one set of
weights for both. Only the motion stream is read out.
"""
from dataclasses import asdict, dataclass, field, fields
import logging

import torch
import torch.nn as nn

from motionflow.exceptions import InvalidArgument, InvalidConfig
from skeleton.layout import pooled_layout, reference_layout
from skeleton.rope import RopeConfig, rope_angles, segment_dims, text_positions, token_positions

from .blocks import FinalLayer, TMDiTBlock
from .conditioning import (
    ConditioningBundle, ConditionFuser, TextEncoder, check_scale, check_time, null_tokens,
)

logger = logging.getLogger(__name__)

ARCHITECTURES = ('dual', 'adaln')


@dataclass
class TMDiTConfig:
    n_blocks: int = 9
    n_separate: int = 3
    n_shared: int = 6
    model_dim: int = 384
    n_heads: int = 6
    ffn_dim: int = 1536
    vocab_size: int = 64
    max_words: int = 16
    l_max: int = 64
    latent_joints: int = 6
    latent_dim: int = 8
    text_dim: int = 0          # 0 means model_dim
    scales: list = field(default_factory=lambda: [1 / 3, 2 / 3, 1.0])
    rope_base: float = 10000.0
    text_rope: bool = True
    arch: str = 'dual'

    def __post_init__(self):
        self.scales = [float(r) for r in self.scales]
        if self.arch not in ARCHITECTURES:
            raise InvalidConfig(f'arch must be one of {ARCHITECTURES}, got {self.arch!r}')
        if self.n_separate + self.n_shared != self.n_blocks:
            raise InvalidConfig(
                f'n_separate ({self.n_separate}) + n_shared ({self.n_shared}) '
                f'must equal n_blocks ({self.n_blocks})'
            )
        if min(self.max_words, self.l_max, self.vocab_size) < 1:
            raise InvalidConfig('max_words, l_max and vocab_size must be positive')
        if min(self.n_blocks, self.model_dim, self.n_heads, self.ffn_dim) < 1 or self.n_separate < 0 or self.n_shared < 0:
            raise InvalidConfig('block counts and widths must be positive')
        if self.model_dim % self.n_heads:
            raise InvalidConfig(f'model_dim {self.model_dim} is not divisible by n_heads {self.n_heads}')
        segment_dims(self.head_dim)
        if not self.scales:
            raise InvalidConfig('the model needs at least one stage scale')

    @property
    def head_dim(self):
        return self.model_dim // self.n_heads

    @property
    def text_width(self):
        return self.text_dim or self.model_dim

    @classmethod
    def desk(cls, **overrides):
        """Desk-scale defaults: width 64, 2 separate + 2 shared blocks."""
        values = dict(n_blocks=4, n_separate=2, n_shared=2, model_dim=64, n_heads=4, ffn_dim=256)
        values.update(overrides)
        return cls(**values)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f'unknown TMDiT config keys: {", ".join(sorted(unknown))}')
        return cls(**data)


class TMDiT(nn.Module):

    def __init__(self, config, layout=None):
        super().__init__()
        self.config = config
        self.layout = layout or pooled_layout(reference_layout())
        if len(self.layout) != config.latent_joints:
            raise InvalidConfig(
                f'latent skeleton has {len(self.layout)} joints, config says {config.latent_joints}'
            )
        dim = config.model_dim
        self.rope = RopeConfig(head_dim=config.head_dim, base=config.rope_base)
        dual = config.arch == 'dual'

        self.x_embed = nn.Linear(config.latent_dim, dim)
        self.text_encoder = TextEncoder(config.vocab_size, config.text_width)
        self.text_embed = nn.Linear(config.text_width, dim) if dual else None
        self.fuser = ConditionFuser(dim, config.text_width, len(config.scales))
        self.blocks = nn.ModuleList([
            TMDiTBlock(dim, config.n_heads, config.ffn_dim, self.rope,
                       shared=dual and i >= config.n_separate, text_stream=dual)
            for i in range(config.n_blocks)
        ])
        self.final_layer = FinalLayer(dim, config.latent_dim)
        self.initialize_weights()

    def initialize_weights(self):
        # zero read-out: an untrained model predicts zero velocity
        nn.init.constant_(self.final_layer.linear.weight, 0)
        nn.init.constant_(self.final_layer.linear.bias, 0)

    # -- conditioning -------------------------------------------------

    def stage_index(self, scale):
        """Row of the scale table for stage scale `scale`."""
        check_scale(scale)
        for i, r in enumerate(self.config.scales):
            if abs(r - scale) < 1e-9:
                return i
        raise InvalidArgument(f'scale {scale} is not one of the model scales {self.config.scales}')

    def fuse_conditioning(self, t, c_vec, scale):
        check_time(t)
        if not torch.is_tensor(t):
            t = torch.full((c_vec.shape[0],), float(t), dtype=c_vec.dtype, device=c_vec.device)
        return self.fuser(t, c_vec, self.stage_index(scale))

    def condition(self, tokens, t, scale):
        if tokens.shape[1] > self.config.max_words:
            logger.warning('Prompt has %d tokens; keeping the first %d', tokens.shape[1], self.config.max_words)
            tokens = tokens[:, :self.config.max_words]
        c, c_vec, mask = self.text_encoder(tokens)
        if not torch.is_tensor(t):
            t = torch.full((tokens.shape[0],), float(t), dtype=c.dtype, device=c.device)
        return ConditioningBundle(c=c, c_vec=c_vec, mask=mask, t=t, scale=scale)

    # -- forward ------------------------------------------------------

    def forward(self, x, t, tokens, scale):
        """Velocity for latents `x` of shape [B, l, j, d] at flow time `t`.

        `t` is a float or a [B] tensor; `tokens` is [B, n_words] (padded with
        PAD); `scale` is the stage scale r_k of this call.
        """
        if x.dim() != 4 or x.shape[2] != self.config.latent_joints or x.shape[3] != self.config.latent_dim:
            raise InvalidArgument(
                f'latents must be [B, l, {self.config.latent_joints}, {self.config.latent_dim}], '
                f'got {tuple(x.shape)}'
            )
        if x.shape[1] > self.config.l_max:
            raise InvalidArgument(f'latent length {x.shape[1]} exceeds l_max {self.config.l_max}')
        if not torch.isfinite(x).all():
            raise InvalidArgument('latents must be finite')
        if tokens.shape[0] != x.shape[0]:
            raise InvalidArgument(f'{tokens.shape[0]} token rows for a batch of {x.shape[0]}')

        B, l, j, d = x.shape
        cond = self.condition(tokens, t, scale)
        y = self.fuse_conditioning(cond.t, cond.c_vec, scale)

        h = self.x_embed(x.reshape(B, l * j, d))
        motion_angles = rope_angles(token_positions(self.layout, l, scale).to(x.device), self.rope)
        c = text_angles = None
        if self.text_embed is not None:
            c = self.text_embed(cond.c)
            text_angles = rope_angles(
                text_positions(c.shape[1], enabled=self.config.text_rope).to(x.device), self.rope,
            )

        for block in self.blocks:
            h, c = block(h, c, y, motion_angles, text_angles, cond.mask)
        out = self.final_layer(h, y)
        return out.reshape(B, l, j, d)

    def velocity_fn(self, sched):
        """Adapter with the (point, t, k, condition) signature the sampler expects.

        The condition is a token tensor; `None` means the null condition.
        """
        def vfn(point, t, k, tokens):
            squeeze = point.dim() == 3
            x = point.unsqueeze(0) if squeeze else point
            if tokens is None:
                tokens = null_tokens(x.shape[0], device=x.device)
            elif tokens.dim() == 1:
                tokens = tokens.unsqueeze(0)
            v = predict_velocity(self, x, t, tokens, sched, k)
            return v.squeeze(0) if squeeze else v
        return vfn

    def num_parameters(self):
        return sum(p.numel() for p in self.parameters())


def predict_velocity(model, x_t, t, tokens, sched, k):
    """Velocity of `model` at stage k of `sched`."""
    scale = sched.scale(k)
    return model(x_t, t, tokens, scale)
