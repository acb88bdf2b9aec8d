from torch.optim.lr_scheduler import LambdaLR

from motionflow.exceptions import InvalidArgument

DEFAULT_DROPS = (0.5, 0.75)
DEFAULT_FACTOR = 0.2


def lr_multiplier(step, total_steps, drops=DEFAULT_DROPS, factor=DEFAULT_FACTOR):
    """Step-decay multiplier: `factor` compounds at each fraction in `drops`."""
    if total_steps < 1:
        raise InvalidArgument(f'total_steps must be >= 1, got {total_steps}')
    if not 0 <= step <= total_steps:
        raise InvalidArgument(f'step {step} is outside [0, {total_steps}]')
    passed = sum(1 for fraction in drops if step >= fraction * total_steps)
    return factor ** passed


def step_decay(optimizer, total_steps, drops=DEFAULT_DROPS, factor=DEFAULT_FACTOR):
    # LambdaLR queries one step past the last update; clamp so it stays in range
    return LambdaLR(
        optimizer,
        lambda step: lr_multiplier(min(step, total_steps), total_steps, drops, factor),
    )
