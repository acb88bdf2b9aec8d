"""
Conditioning inputs of the velocity model.

Text goes through a learned embedding table over the closed corpus
vocabulary: word-level embeddings c and their masked mean c_vec. The flow
time t, the pooled text c_vec and the stage scale r_k are fused into one
vector y that drives every modulation in the network.
"""
from dataclasses import dataclass
import math

import torch
import torch.nn as nn

from corpus.vocabulary import NULL_ID, PAD_ID
from motionflow.exceptions import InvalidArgument


@dataclass
class ConditioningBundle:
    c: torch.Tensor          # [B, n_words, text_dim]
    c_vec: torch.Tensor      # [B, text_dim]
    mask: torch.Tensor       # [B, n_words], True on real words
    t: torch.Tensor          # [B]
    scale: float


class TimestepEmbedder(nn.Module):
    """Sinusoidal features of t followed by a two-layer MLP."""

    def __init__(self, hidden_size, frequency_embedding_size=256):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(frequency_embedding_size, hidden_size, bias=True),
            nn.SiLU(),
            nn.Linear(hidden_size, hidden_size, bias=True),
        )
        self.frequency_embedding_size = frequency_embedding_size

    @staticmethod
    def timestep_embedding(t, dim, max_period=10000, scale=1000.0):
        # flow time lives in [0, 1]; stretch it so the low frequencies still vary
        half = dim // 2
        freqs = torch.exp(
            -math.log(max_period) * torch.arange(half, dtype=t.dtype, device=t.device) / half
        )
        args = scale * t[:, None] * freqs[None]
        embedding = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
        if dim % 2:
            embedding = torch.cat([embedding, torch.zeros_like(embedding[:, :1])], dim=-1)
        return embedding

    def forward(self, t):
        return self.mlp(self.timestep_embedding(t, self.frequency_embedding_size))


class TextEncoder(nn.Module):
    """Embedding table plus masked mean pooling; stands in for a pretrained encoder."""

    def __init__(self, vocab_size, text_dim):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, text_dim, padding_idx=PAD_ID)

    def forward(self, tokens):
        if tokens.dim() != 2:
            raise InvalidArgument(f'tokens must be [batch, words], got shape {tuple(tokens.shape)}')
        mask = tokens != PAD_ID
        if not bool(mask.any(dim=1).all()):
            raise InvalidArgument('every token row needs at least one word (use the null token)')
        c = self.embedding(tokens)
        weights = mask.to(c.dtype).unsqueeze(-1)
        c_vec = (c * weights).sum(dim=1) / weights.sum(dim=1)
        return c, c_vec, mask


def null_tokens(batch_size, device=None):
    """Token rows that hold only the null word."""
    return torch.full((batch_size, 1), NULL_ID, dtype=torch.long, device=device)


class ConditionFuser(nn.Module):
    """y = MLP(timestep(t) + project(c_vec) + scale_table[k])."""

    def __init__(self, model_dim, text_dim, n_stages):
        super().__init__()
        self.timestep = TimestepEmbedder(model_dim)
        self.text_proj = nn.Linear(text_dim, model_dim)
        self.scale_table = nn.Embedding(n_stages, model_dim)
        self.mlp = nn.Sequential(
            nn.Linear(model_dim, model_dim),
            nn.SiLU(),
            nn.Linear(model_dim, model_dim),
        )

    def forward(self, t, c_vec, stage_index):
        if not torch.is_tensor(stage_index):
            stage_index = torch.full((c_vec.shape[0],), int(stage_index), dtype=torch.long,
                                     device=c_vec.device)
        summed = self.timestep(t.to(c_vec.dtype)) + self.text_proj(c_vec) + self.scale_table(stage_index)
        return self.mlp(summed)


def check_time(t):
    if torch.is_tensor(t):
        bad = bool(((t < 0) | (t > 1) | ~torch.isfinite(t)).any())
    else:
        bad = not 0 <= t <= 1
    if bad:
        raise InvalidArgument(f'flow time must lie in [0, 1], got {t}')


def check_scale(scale):
    if not 0 < scale <= 1:
        raise InvalidArgument(f'stage scale must lie in (0, 1], got {scale}')
