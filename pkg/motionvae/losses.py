import math

import torch
import torch.nn.functional as F

from flows.resample import resample, resample_to
from motionflow.exceptions import InvalidArgument

AUG_RATIO_RANGE = (0.3, 1.0)
AUG_FRACTION = 0.5


def kl_divergence(mean, logvar):
    """Mean per-element KL(q || N(0, I))."""
    return 0.5 * (mean.pow(2) + logvar.exp() - 1.0 - logvar).mean()


def vae_losses(motion, recon, mean, logvar):
    if recon.shape != motion.shape:
        raise InvalidArgument(f'reconstruction {tuple(recon.shape)} does not match motion {tuple(motion.shape)}')
    return {
        'recon_mse': F.mse_loss(recon, motion),
        'kl': kl_divergence(mean, logvar),
    }


def aug_loss(vae, z, motion, ratio):
    """Decode `z` resampled by `ratio` and compare with `motion` resampled to the decoded length."""
    lo, hi = AUG_RATIO_RANGE
    if not lo <= ratio <= hi:
        raise InvalidArgument(f'augmentation ratio must lie in [{lo}, {hi}], got {ratio}')
    decoded = vae.decode(resample(z, ratio, dim=-3))
    target = resample_to(motion, decoded.shape[-3], dim=-3)
    return F.mse_loss(decoded, target)


def composite_loss(vae, motion, generator=None, ratio=None, aug_fraction=AUG_FRACTION):
    """Total training loss and its parts for a batch of normalized motions [B, L, J, C].

    With a `ratio`, the augmentation term covers a random `aug_fraction` of the batch.
    """
    cfg = vae.config
    recon, mean, logvar, z = vae(motion, generator=generator)
    parts = vae_losses(motion, recon, mean, logvar)
    total = parts['recon_mse'] + cfg.kl_weight * parts['kl']
    if ratio is not None and cfg.aug_weight > 0:
        batch = motion.shape[0]
        n_aug = max(1, math.ceil(aug_fraction * batch))
        subset = torch.randperm(batch, generator=generator)[:n_aug].to(motion.device)
        parts['aug'] = aug_loss(vae, z[subset], motion[subset], ratio)
        total = total + cfg.aug_weight * parts['aug']
    parts['total'] = total
    return total, {name: float(value.detach()) for name, value in parts.items()}


def sample_ratio(generator=None):
    lo, hi = AUG_RATIO_RANGE
    return lo + (hi - lo) * float(torch.rand((), generator=generator))
