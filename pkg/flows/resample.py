"""Temporal linear resampling.

Every stage construction, cross-scale transition and the VAE augmentation
loss go through these two functions. Sampling is align-corners: the first
and last output frames sit exactly on the first and last source frames.
"""
import math

import torch

from motionflow.exceptions import InvalidArgument


def resampled_length(length, ratio):
    """Frame count after resampling `length` frames by `ratio`, never below 1."""
    if isinstance(length, bool) or int(length) != length or length < 1:
        raise InvalidArgument(f'length must be a positive integer, got {length!r}')
    if not ratio > 0 or not math.isfinite(ratio):
        raise InvalidArgument(f'ratio must be a positive real, got {ratio!r}')
    # round half away from zero; the product is positive so floor(x + 0.5) does it
    return max(1, math.floor(float(ratio) * int(length) + 0.5))


def _check_finite(x):
    if not torch.isfinite(x).all():
        raise InvalidArgument('cannot resample a tensor with non-finite entries')


def resample_to(x, frames, dim=0):
    """Linearly resample `x` along `dim` to exactly `frames` frames."""
    if frames < 1:
        raise InvalidArgument(f'frames must be >= 1, got {frames}')
    dim = dim % x.dim()
    source = x.shape[dim]
    if source < 1:
        raise InvalidArgument('cannot resample an empty sequence')
    if frames == source:
        return x

    if frames == 1:
        positions = torch.tensor([(source - 1) / 2.0], dtype=torch.float64)
    else:
        positions = torch.arange(frames, dtype=torch.float64) * (source - 1) / (frames - 1)

    lower = positions.floor().long().clamp(max=max(source - 2, 0))
    upper = (lower + 1).clamp(max=source - 1)
    weight = (positions - lower.to(torch.float64)).to(dtype=x.dtype, device=x.device)

    shape = [1] * x.dim()
    shape[dim] = frames
    weight = weight.view(shape)

    lo = x.index_select(dim, lower.to(x.device))
    hi = x.index_select(dim, upper.to(x.device))
    return lo + weight * (hi - lo)


def resample(x, ratio, dim=0):
    """Resample `x` along `dim` by `ratio` (<1 downsamples, >1 upsamples).

    The output length is `resampled_length(x.shape[dim], ratio)`. A ratio of
    exactly 1 returns `x` itself.
    """
    _check_finite(x)
    frames = resampled_length(x.shape[dim], ratio)
    if ratio == 1:
        return x
    return resample_to(x, frames, dim=dim)
