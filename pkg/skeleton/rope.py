"""
Joint RoPE.

Each attention head is split into four rotary segments, sized 1/2, 1/8, 1/8
and 1/4 of the head: time, T-pose x, T-pose y and kinematic depth. Every
segment is an ordinary 1D rotary encoding driven by its own coordinate.
"""
from dataclasses import dataclass

import torch

from motionflow.exceptions import InvalidArgument, InvalidConfig

N_COORDS = 4


def segment_dims(head_dim):
    """Split `head_dim` into [time, x, y, depth] segment widths."""
    if isinstance(head_dim, bool) or int(head_dim) != head_dim or head_dim <= 0 or head_dim % 16:
        raise InvalidConfig(f'head_dim must be a positive multiple of 16, got {head_dim!r}')
    head_dim = int(head_dim)
    return [head_dim // 2, head_dim // 8, head_dim // 8, head_dim // 4]


@dataclass(frozen=True)
class RopeConfig:
    head_dim: int
    base: float = 10000.0

    def __post_init__(self):
        segment_dims(self.head_dim)
        if not self.base > 0:
            raise InvalidConfig(f'rope base must be positive, got {self.base}')

    @property
    def segments(self):
        return segment_dims(self.head_dim)

    def frequencies(self, dtype=torch.float64, device=None):
        """theta_i = base^(-2i/d) for every rotation pair, segment by segment."""
        parts = []
        for d in self.segments:
            i = torch.arange(d // 2, dtype=dtype, device=device)
            parts.append(self.base ** (-2.0 * i / d))
        return parts


def token_positions(layout, n_frames, scale):
    """(t, x, y, depth) for every (frame, joint) token, frame-major.

    Time is frame / scale, so stage tokens share the full-scale time axis.
    """
    if not 0 < scale <= 1:
        raise InvalidArgument(f'stage scale must lie in (0, 1], got {scale}')
    if n_frames < 1:
        raise InvalidArgument(f'n_frames must be >= 1, got {n_frames}')
    spatial = torch.tensor(
        [[joint.tpose_x, joint.tpose_y, float(joint.depth)] for joint in layout.joints],
        dtype=torch.float64,
    )
    frames = torch.arange(n_frames, dtype=torch.float64) / scale
    t = frames.repeat_interleave(len(layout)).unsqueeze(1)
    return torch.cat([t, spatial.repeat(n_frames, 1)], dim=1)


def text_positions(n_words, enabled=True):
    """Word tokens carry only a temporal coordinate: their index."""
    positions = torch.zeros(n_words, N_COORDS, dtype=torch.float64)
    if enabled:
        positions[:, 0] = torch.arange(n_words, dtype=torch.float64)
    return positions


def rope_angles(positions, cfg):
    """Rotation angle for every (token, pair): [..., tokens, head_dim / 2]."""
    if positions.shape[-1] != N_COORDS:
        raise InvalidArgument(f'positions need {N_COORDS} coordinates, got {positions.shape[-1]}')
    freqs = cfg.frequencies(dtype=torch.float64, device=positions.device)
    angles = [positions[..., s:s + 1].double() * f for s, f in enumerate(freqs)]
    return torch.cat(angles, dim=-1)


def apply_rope(x, positions, cfg, angles=None):
    """Rotate `x` of shape [..., tokens, heads, head_dim] by its token positions."""
    if x.shape[-1] != cfg.head_dim:
        raise InvalidArgument(f'head_dim {x.shape[-1]} does not match rope config {cfg.head_dim}')
    if angles is None:
        if positions.shape[-2] != x.shape[-3]:
            raise InvalidArgument(
                f'{positions.shape[-2]} positions for {x.shape[-3]} tokens'
            )
        angles = rope_angles(positions, cfg)
    angles = angles.unsqueeze(-2)
    cos = angles.cos().to(x.dtype)
    sin = angles.sin().to(x.dtype)

    pairs = x.reshape(*x.shape[:-1], cfg.head_dim // 2, 2)
    even, odd = pairs[..., 0], pairs[..., 1]
    rotated = torch.stack([even * cos - odd * sin, even * sin + odd * cos], dim=-1)
    return rotated.reshape(x.shape)
