"""
Hierarchical flow matching.

The trajectory from noise (t=0) to data (t=1) is split into K stages. Stage k
lives at temporal scale r_k, covers [t_{k-1}, t_k], and is a straight line
between `stage_endpoints`. A model regresses the stage displacement
(end - start) and is integrated in stage-local time tau in [0, 1]. Between
stages, `cross_scale_transition` carries the state up one scale without
drawing fresh noise.

All resampling targets absolute stage lengths (`ScaleSchedule.stage_length`)
so that consecutive stages always agree on their lengths.
"""
from dataclasses import dataclass, field
import logging
import math

import pandas as pd
import torch
import torch.nn.functional as F

from motionflow.exceptions import (
    DegenerateTransition, IntegrationFailure, InvalidArgument,
)

from .resample import resample_to

logger = logging.getLogger(__name__)

SOLVERS = ('euler', 'heun')


@dataclass
class FlowEndpoints:
    """Full-scale noise draw x0 and clean data x1."""
    x0: torch.Tensor
    x1: torch.Tensor
    time_dim: int = 0

    def __post_init__(self):
        if self.x0.shape != self.x1.shape:
            raise InvalidArgument(
                f'endpoint shapes differ: {tuple(self.x0.shape)} vs {tuple(self.x1.shape)}'
            )
        if not (torch.isfinite(self.x0).all() and torch.isfinite(self.x1).all()):
            raise InvalidArgument('endpoints must be finite')

    @property
    def length(self):
        return self.x0.shape[self.time_dim]


@dataclass
class FlowSample:
    stage: int
    t: object
    tau: object
    point: torch.Tensor
    target: torch.Tensor


@dataclass(frozen=True)
class GuidanceConfig:
    weight: float = 1.0
    null_condition: object = None

    def __post_init__(self):
        if not math.isfinite(self.weight) or self.weight < 0:
            raise InvalidArgument(f'guidance weight must be finite and >= 0, got {self.weight}')


def _at_length(x, frames, time_dim):
    return resample_to(x, frames, dim=time_dim)


def stage_endpoints(ep, sched, k):
    """Start and end of the straight stage-k path, both at length l_k."""
    k = sched.check_stage(k)
    length, dim = ep.length, ep.time_dim
    l_k = sched.stage_length(length, k)
    t_prev, t_k = sched.interval(k)

    noise_k = _at_length(ep.x0, l_k, dim)
    if k == 1:
        # t_0 = 0 zeroes the data term
        start = noise_k
    else:
        l_prev = sched.stage_length(length, k - 1)
        data_prev = _at_length(_at_length(ep.x1, l_prev, dim), l_k, dim)
        start = (1 - t_prev) * noise_k + t_prev * data_prev
    end = (1 - t_k) * noise_k + t_k * _at_length(ep.x1, l_k, dim)
    return start, end


def _broadcast_time(t, like, batch_dim=0):
    if torch.is_tensor(t) and t.dim() > 0:
        shape = [1] * like.dim()
        shape[batch_dim] = -1
        return t.to(dtype=like.dtype, device=like.device).view(shape)
    return t


def training_sample(ep, sched, k, t):
    """A point on the stage-k path at flow time t, with its regression target.

    `t` may be a float or a 1-D tensor holding one time per batch element
    (batch on dim 0).
    """
    k = sched.check_stage(k)
    t_prev, t_k = sched.interval(k)
    if torch.is_tensor(t):
        outside = (t < t_prev) | (t > t_k)
        if bool(outside.any()):
            raise InvalidArgument(f'times must lie in the stage-{k} interval [{t_prev}, {t_k}]')
    elif not t_prev <= t <= t_k:
        raise InvalidArgument(f't={t} lies outside the stage-{k} interval [{t_prev}, {t_k}]')

    start, end = stage_endpoints(ep, sched, k)
    tau = (t - t_prev) / (t_k - t_prev)
    tau_b = _broadcast_time(tau, start)
    point = (1 - tau_b) * start + tau_b * end
    return FlowSample(stage=k, t=t, tau=tau, point=point, target=end - start)


def hfm_loss(pred, target):
    """Mean-square regression loss on the stage displacement."""
    if pred.shape != target.shape:
        raise InvalidArgument(
            f'prediction shape {tuple(pred.shape)} does not match target {tuple(target.shape)}'
        )
    return F.mse_loss(pred, target)


def cross_scale_transition(x_hat, x0, sched, k, time_dim=0):
    """Carry an estimated stage-k end to the stage-(k+1) start.

    Denoise at scale r_k, upsample the clean estimate to r_{k+1}, then renoise
    with the same initial noise x0 resampled to r_{k+1}.
    """
    k = sched.check_stage(k)
    if k == sched.K:
        raise InvalidArgument('the last stage has no transition')
    _, t_k = sched.interval(k)
    if t_k == 0:
        raise DegenerateTransition(f'stage {k} ends at t=0; cannot denoise')

    length = x0.shape[time_dim]
    l_k = sched.stage_length(length, k)
    l_next = sched.stage_length(length, k + 1)
    if x_hat.shape[time_dim] != l_k:
        raise InvalidArgument(
            f'stage-{k} state has {x_hat.shape[time_dim]} frames, expected {l_k}'
        )

    clean = (x_hat - (1 - t_k) * _at_length(x0, l_k, time_dim)) / t_k
    clean_up = _at_length(clean, l_next, time_dim)
    return (1 - t_k) * _at_length(x0, l_next, time_dim) + t_k * clean_up


def cfg_velocity(v_cond, v_uncond, weight):
    if v_cond.shape != v_uncond.shape:
        raise InvalidArgument(
            f'conditional and unconditional velocities differ in shape: '
            f'{tuple(v_cond.shape)} vs {tuple(v_uncond.shape)}'
        )
    return v_uncond + weight * (v_cond - v_uncond)


def _velocity(vfn, x, t, k, cond, guidance):
    if guidance is None or guidance.weight == 1:
        v = vfn(x, t, k, cond)
    else:
        v_cond = vfn(x, t, k, cond)
        v_uncond = vfn(x, t, k, guidance.null_condition)
        _check_velocity(v_cond, x, k)
        _check_velocity(v_uncond, x, k)
        v = cfg_velocity(v_cond, v_uncond, guidance.weight)
    _check_velocity(v, x, k)
    return v


def _check_velocity(v, x, k):
    if not torch.is_tensor(v) or v.shape != x.shape:
        shape = tuple(v.shape) if torch.is_tensor(v) else type(v).__name__
        raise IntegrationFailure(f'stage {k}: velocity has shape {shape}, expected {tuple(x.shape)}')
    if not torch.isfinite(v).all():
        raise IntegrationFailure(f'stage {k}: velocity has non-finite values')


def integrate_stage(vfn, start, sched, k, n_steps, cond=None, guidance=None,
                    solver='euler', trace=None, time_dim=0):
    """Integrate one stage from its start state to an estimate of its end.

    `vfn(point, t, k, condition)` is called with the global flow time t; the
    step size is taken in stage-local tau, so a perfect model of the stage
    displacement lands exactly on the stage end.
    """
    k = sched.check_stage(k)
    if isinstance(n_steps, bool) or int(n_steps) != n_steps or n_steps < 1:
        raise InvalidArgument(f'n_steps must be a positive integer, got {n_steps!r}')
    if solver not in SOLVERS:
        raise InvalidArgument(f'unknown solver {solver!r}; choose from {", ".join(SOLVERS)}')

    n_steps = int(n_steps)
    h = 1.0 / n_steps
    x = start
    for i in range(n_steps):
        tau = i * h
        t = sched.time_at(tau, k)
        v = _velocity(vfn, x, t, k, cond, guidance)
        if solver == 'heun':
            x_pred = x + h * v
            v_next = _velocity(vfn, x_pred, sched.time_at(tau + h, k), k, cond, guidance)
            x = x + 0.5 * h * (v + v_next)
        else:
            x = x + h * v
        if trace is not None:
            trace.record(k, i, t, tau, x, time_dim)
    return x


@dataclass
class SamplingTrace:
    """Per-step log of a sampling run, plus a count of noise draws after init."""
    rows: list = field(default_factory=list)
    fresh_draws: int = 0

    def record(self, stage, step, t, tau, x, time_dim=0):
        self.rows.append({
            'stage': stage,
            'step': step,
            't': float(t),
            'tau': float(tau),
            'length': int(x.shape[time_dim]),
            'rms': float(x.detach().double().pow(2).mean().sqrt()),
        })

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=['stage', 'step', 't', 'tau', 'length', 'rms'])


def _steps_for(steps_per_stage, K):
    if isinstance(steps_per_stage, int):
        return [steps_per_stage] * K
    steps = list(steps_per_stage)
    if len(steps) != K:
        raise InvalidArgument(f'need {K} per-stage step counts, got {len(steps)}')
    return steps


def hierarchical_sample(vfn, sched, noise, steps_per_stage, cond=None, guidance=None,
                        time_dim=0, transition=None, solver='euler', trace=None):
    """Run every stage from the initial noise to a full-scale sample.

    The only randomness is `noise`; each transition reuses it, so the result
    is a deterministic function of (noise, condition, model).
    `transition` defaults to `cross_scale_transition` and exists so that
    diagnostics can swap in other renoising rules.
    """
    transition = transition or cross_scale_transition
    steps = _steps_for(steps_per_stage, sched.K)
    length = noise.shape[time_dim]

    x = _at_length(noise, sched.stage_length(length, 1), time_dim)
    for k in sched.stages:
        x = integrate_stage(vfn, x, sched, k, steps[k - 1], cond=cond, guidance=guidance,
                            solver=solver, trace=trace, time_dim=time_dim)
        if k < sched.K:
            x = transition(x, noise, sched, k, time_dim=time_dim)
        logger.debug('stage %d/%d done at length %d', k, sched.K, x.shape[time_dim])
    # r_K may be below 1
    return _at_length(x, length, time_dim)
