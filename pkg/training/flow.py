"""Second training stage: the velocity model on frozen VAE latents."""
import logging
import math

import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from corpus.vocabulary import NULL_ID
from flows.hierarchy import FlowEndpoints, hfm_loss, training_sample
from motionflow.exceptions import InvalidArgument, TrainingDiverged
from tmdit.network import TMDiT

from .data import MotionBatcher, token_batch
from .schedules import step_decay

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-6


def check_compatible(vae, tmdit_config, sched, vocabulary):
    if (vae.config.latent_joints, vae.config.latent_dim) != (tmdit_config.latent_joints, tmdit_config.latent_dim):
        raise InvalidArgument(
            f'VAE latents are {vae.config.latent_joints}x{vae.config.latent_dim}, the velocity model '
            f'expects {tmdit_config.latent_joints}x{tmdit_config.latent_dim}'
        )
    scales = [sched.scale(k) for k in sched.stages]
    if len(scales) != len(tmdit_config.scales) or any(
            abs(a - b) > 1e-9 for a, b in zip(scales, tmdit_config.scales)):
        raise InvalidArgument(f'schedule scales {scales} differ from the model scales {tmdit_config.scales}')
    if vocabulary is not None and len(vocabulary) > tmdit_config.vocab_size:
        raise InvalidArgument(f'vocabulary has {len(vocabulary)} words, the model embeds {tmdit_config.vocab_size}')


@torch.no_grad()
def encode_latents(vae, motion):
    """Posterior means of raw motions [B, L, J, C]."""
    mean, _ = vae.encode(vae.normalize(motion))
    return mean


@torch.no_grad()
def latent_statistics(vae, records, device='cpu'):
    """Per (latent joint, channel) mean and std of the posterior means of `records`."""
    latents = []
    for record in records:
        motion = torch.from_numpy(record.motion).float().to(device)
        latents.append(encode_latents(vae, motion.unsqueeze(0))[0].double().cpu())
    stacked = torch.cat(latents, dim=0)
    std = stacked.std(dim=0)
    return stacked.mean(dim=0), torch.where(std < STD_FLOOR, torch.ones_like(std), std)


class LatentScaler:
    """Standardize latents with stored statistics, and undo it."""

    def __init__(self, mean, std):
        self.mean = torch.as_tensor(mean, dtype=torch.float64)
        self.std = torch.as_tensor(std, dtype=torch.float64)

    @classmethod
    def from_extras(cls, extras):
        try:
            return cls(extras['latent_mean'], extras['latent_std'])
        except KeyError as exc:
            raise InvalidArgument(f'checkpoint extras are missing {exc}') from None

    def to_extras(self):
        return {'latent_mean': self.mean.tolist(), 'latent_std': self.std.tolist()}

    def standardize(self, z):
        return (z - self.mean.to(z)) / self.std.to(z)

    def restore(self, z):
        return z * self.std.to(z) + self.mean.to(z)


def drop_conditions(token_rows, probability, rng):
    """Replace each row by the null condition with `probability`; returns (rows, dropped mask)."""
    dropped = rng.random(len(token_rows)) < probability
    rows = [[NULL_ID] if drop else list(row) for row, drop in zip(token_rows, dropped)]
    return rows, dropped


def draw_stages(sched, n, generator):
    """One stage index in 1..K per sample, uniform over stages."""
    return torch.randint(1, sched.K + 1, (n,), generator=generator)


def flow_loss(model, sched, x1, tokens, generator):
    """Hierarchical flow-matching loss with one stage draw per sample.

    Returns (loss, stage draws [B]); the loss is the mean over samples of
    each sample's mean-square error.
    """
    B = x1.shape[0]
    x0 = torch.randn(x1.shape, generator=generator, dtype=x1.dtype).to(x1.device)
    stages = draw_stages(sched, B, generator)
    u = torch.rand(B, generator=generator, dtype=torch.float64)

    total = x1.new_zeros(())
    for k in sched.stages:
        idx = (stages == k).nonzero(as_tuple=True)[0]
        if len(idx) == 0:
            continue
        t_prev, t_k = sched.interval(k)
        t = (t_prev + u[idx] * (t_k - t_prev)).clamp(t_prev, t_k)
        idx_d = idx.to(x1.device)
        ep = FlowEndpoints(x0[idx_d], x1[idx_d], time_dim=1)
        sample = training_sample(ep, sched, k, t)
        pred = model(sample.point, t.to(x1.dtype).to(x1.device), tokens[idx_d], sched.scale(k))
        total = total + len(idx) * hfm_loss(pred, sample.target)
    return total / B, stages


def train_tmdit(records, vae, tmdit_config, sched, train_config, vocabulary,
                device='cpu', progress=False):
    """Train a velocity model on latents of the frozen `vae`.

    Returns (model, history DataFrame, LatentScaler).
    """
    check_compatible(vae, tmdit_config, sched, vocabulary)
    vae = vae.to(device).eval()
    vae.requires_grad_(False)

    scaler = LatentScaler(*latent_statistics(vae, records, device))
    torch.manual_seed(train_config.seed)
    model = TMDiT(tmdit_config).to(device)
    optimizer = torch.optim.AdamW(model.parameters(), lr=train_config.lr,
                                  weight_decay=train_config.weight_decay)
    scheduler = step_decay(optimizer, max(train_config.steps, 1),
                           train_config.lr_drops, train_config.lr_factor)
    batcher = MotionBatcher(records, train_config.batch_size, train_config.seed)
    generator = torch.Generator().manual_seed(train_config.seed)
    dropout_rng = np.random.default_rng([train_config.seed, 3])

    rows = []
    model.train()
    for step in tqdm(range(train_config.steps), disable=not progress, desc='tmdit'):
        motion, batch_records = batcher.next_batch()
        x1 = scaler.standardize(encode_latents(vae, motion.to(device)))
        token_rows, dropped = drop_conditions([r.tokens for r in batch_records],
                                              train_config.cfg_dropout, dropout_rng)
        tokens = token_batch(token_rows, vocabulary).to(device)

        loss, stages = flow_loss(model, sched, x1, tokens, generator)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise TrainingDiverged(f'flow loss became non-finite at step {step}', step=step,
                                   losses={'loss': value})

        lr = optimizer.param_groups[0]['lr']
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        scheduler.step()

        row = {'step': step, 'loss': value, 'uncond_fraction': float(dropped.mean()), 'lr': lr}
        row.update({f'stage_{k}': int((stages == k).sum()) for k in sched.stages})
        rows.append(row)
        if train_config.log_every and step % train_config.log_every == 0:
            logger.info('tmdit step %d: loss %.5f lr %.2e', step, value, lr)

    model.eval()
    columns = ['step', 'loss', 'uncond_fraction', 'lr'] + [f'stage_{k}' for k in sched.stages]
    return model, pd.DataFrame(rows, columns=columns), scaler
