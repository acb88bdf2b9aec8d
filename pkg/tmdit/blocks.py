"""Dual-stream transformer blocks with adaLN modulation and gated residuals."""
import torch
import torch.nn as nn
import torch.nn.functional as F

from motionflow.exceptions import InvalidArgument
from skeleton.rope import apply_rope


def modulate(x, shift, scale):
    return x * (1 + scale.unsqueeze(1)) + shift.unsqueeze(1)


class StreamLayers(nn.Module):
    """One stream's weights: attention projections, MLP and the adaLN map from y.

    adaLN produces six vectors: shift, scale and gate for attention, then the
    same three for the MLP.
    """

    def __init__(self, dim, n_heads, ffn_dim):
        super().__init__()
        self.n_heads = n_heads
        self.norm1 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.mlp = nn.Sequential(
            nn.Linear(dim, ffn_dim),
            nn.GELU(approximate='tanh'),
            nn.Linear(ffn_dim, dim),
        )
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 6 * dim))

    def modulation(self, y):
        return self.adaLN_modulation(y).chunk(6, dim=-1)

    def qkv_heads(self, tokens, shift, scale):
        B, N, D = tokens.shape
        qkv = self.qkv(modulate(self.norm1(tokens), shift, scale))
        return qkv.view(B, N, 3, self.n_heads, D // self.n_heads).unbind(dim=2)

    def feed_forward(self, tokens, shift, scale):
        return self.mlp(modulate(self.norm2(tokens), shift, scale))


class TMDiTBlock(nn.Module):
    """Joint attention over motion and text tokens.

    With `shared=True` the text stream is the motion stream's module, so both
    streams read and write the same parameter storage. With
    `text_stream=False` the block only carries motion tokens.
    """

    def __init__(self, dim, n_heads, ffn_dim, rope, shared=False, text_stream=True):
        super().__init__()
        self.dim = dim
        self.rope = rope
        self.shared = shared
        self.motion = StreamLayers(dim, n_heads, ffn_dim)
        if not text_stream:
            self.text = None
        elif shared:
            self.text = self.motion
        else:
            self.text = StreamLayers(dim, n_heads, ffn_dim)

    def forward(self, x, c, y, motion_angles, text_angles=None, text_mask=None):
        if x.shape[-1] != self.dim or y.shape[-1] != self.dim:
            raise InvalidArgument(f'block expects width {self.dim}, got {x.shape[-1]} / {y.shape[-1]}')
        use_text = self.text is not None and c is not None
        if use_text and c.shape[-1] != self.dim:
            raise InvalidArgument(f'text tokens have width {c.shape[-1]}, expected {self.dim}')

        shift_msa, scale_msa, gate_msa, shift_mlp, scale_mlp, gate_mlp = self.motion.modulation(y)
        qx, kx, vx = self.motion.qkv_heads(x, shift_msa, scale_msa)
        qx = apply_rope(qx, None, self.rope, angles=motion_angles)
        kx = apply_rope(kx, None, self.rope, angles=motion_angles)

        if use_text:
            t_shift_msa, t_scale_msa, t_gate_msa, t_shift_mlp, t_scale_mlp, t_gate_mlp = self.text.modulation(y)
            qc, kc, vc = self.text.qkv_heads(c, t_shift_msa, t_scale_msa)
            if text_angles is not None:
                qc = apply_rope(qc, None, self.rope, angles=text_angles)
                kc = apply_rope(kc, None, self.rope, angles=text_angles)
            q = torch.cat([qx, qc], dim=1)
            k = torch.cat([kx, kc], dim=1)
            v = torch.cat([vx, vc], dim=1)
        else:
            q, k, v = qx, kx, vx

        attn_mask = None
        if use_text and text_mask is not None:
            motion_keys = torch.ones(x.shape[0], x.shape[1], dtype=torch.bool, device=x.device)
            attn_mask = torch.cat([motion_keys, text_mask], dim=1)[:, None, None, :]

        # [B, N, H, hd] -> [B, H, N, hd]
        out = F.scaled_dot_product_attention(
            q.transpose(1, 2), k.transpose(1, 2), v.transpose(1, 2), attn_mask=attn_mask,
        ).transpose(1, 2)
        out = out.reshape(out.shape[0], out.shape[1], self.dim)

        n_motion = x.shape[1]
        x = x + gate_msa.unsqueeze(1) * self.motion.proj(out[:, :n_motion])
        x = x + gate_mlp.unsqueeze(1) * self.motion.feed_forward(x, shift_mlp, scale_mlp)
        if use_text:
            c = c + t_gate_msa.unsqueeze(1) * self.text.proj(out[:, n_motion:])
            c = c + t_gate_mlp.unsqueeze(1) * self.text.feed_forward(c, t_shift_mlp, t_scale_mlp)
        return x, c


class FinalLayer(nn.Module):
    """Modulated norm and linear read-out back to latent channels."""

    def __init__(self, dim, out_channels):
        super().__init__()
        self.norm_final = nn.LayerNorm(dim, elementwise_affine=False, eps=1e-6)
        self.linear = nn.Linear(dim, out_channels)
        self.adaLN_modulation = nn.Sequential(nn.SiLU(), nn.Linear(dim, 2 * dim))

    def forward(self, x, y):
        shift, scale = self.adaLN_modulation(y).chunk(2, dim=-1)
        return self.linear(modulate(self.norm_final(x), shift, scale))
