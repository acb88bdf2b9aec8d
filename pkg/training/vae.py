"""First training stage: the motion VAE."""
import logging
import math

import pandas as pd
import torch
from tqdm import tqdm

from motionflow.exceptions import TrainingDiverged
from motionvae.losses import composite_loss, sample_ratio
from motionvae.network import MotionVAE

from .data import MotionBatcher, motion_statistics
from .schedules import step_decay

logger = logging.getLogger(__name__)


def build_vae(vae_config, records, seed):
    torch.manual_seed(seed)
    model = MotionVAE(vae_config)
    mean, std = motion_statistics(records)
    model.set_statistics(mean, std)
    return model


def train_vae(records, vae_config, train_config, device='cpu', progress=False):
    """Train a VAE on `records`; returns (model, history DataFrame).

    With `steps == 0` the returned model is the seeded initialization.
    """
    model = build_vae(vae_config, records, train_config.seed).to(device)
    optimizer = torch.optim.AdamW(model.parameters(), lr=train_config.lr,
                                  weight_decay=train_config.weight_decay)
    scheduler = step_decay(optimizer, max(train_config.steps, 1),
                           train_config.lr_drops, train_config.lr_factor)
    batcher = MotionBatcher(records, train_config.batch_size, train_config.seed)
    generator = torch.Generator().manual_seed(train_config.seed)

    rows = []
    model.train()
    for step in tqdm(range(train_config.steps), disable=not progress, desc='vae'):
        motion, _ = batcher.next_batch()
        motion = model.normalize(motion.to(device))
        ratio = sample_ratio(generator)
        total, parts = composite_loss(model, motion, generator=generator, ratio=ratio)
        if not math.isfinite(parts['total']):
            raise TrainingDiverged(f'VAE loss became non-finite at step {step}', step=step, losses=parts)

        lr = optimizer.param_groups[0]['lr']
        optimizer.zero_grad()
        total.backward()
        optimizer.step()
        scheduler.step()

        rows.append({'step': step, 'loss': parts['total'], 'recon_mse': parts['recon_mse'],
                     'kl': parts['kl'], 'aug': parts.get('aug', 0.0), 'aug_ratio': ratio, 'lr': lr})
        if train_config.log_every and step % train_config.log_every == 0:
            logger.info('vae step %d: loss %.5f recon %.5f kl %.5f lr %.2e',
                        step, parts['total'], parts['recon_mse'], parts['kl'], lr)

    model.eval()
    history = pd.DataFrame(rows, columns=['step', 'loss', 'recon_mse', 'kl', 'aug', 'aug_ratio', 'lr'])
    return model, history


@torch.no_grad()
def reconstruction_mse(model, records, device='cpu'):
    """Mean reconstruction error of posterior means, in normalized units."""
    total, count = 0.0, 0
    for record in records:
        motion = model.normalize(torch.from_numpy(record.motion).float().to(device))
        recon, *_ = model(motion.unsqueeze(0), sample=False)
        total += float((recon[0] - motion).pow(2).sum())
        count += motion.numel()
    return total / count
