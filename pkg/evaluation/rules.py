"""
Semantic rules: one pass/fail check per motion program.

A rule reads a motion [frames, 15, 6] in the corpus channel layout, the
label's parameters and the frame spacing `dt`. Thresholds are rates or
absolute angles and heights, so a rule still applies after a motion has
been temporally resampled, provided `dt` is adjusted to match.
"""
import logging
import math

import numpy as np

from corpus.kinematics import HEIGHT, POS, V_FWD, X, Y, root_trajectory
from corpus.programs import FPS
from motionflow.exceptions import InvalidArgument
from skeleton.layout import synthetic_layout

logger = logging.getLogger(__name__)

MIN_WALK_SPEED = 0.3
MAX_WALK_DRIFT = math.pi / 6
MIN_TURN = math.pi / 6
MIN_ARM_RISE = 0.08
MIN_WAVE_SWINGS = 3
MIN_JUMP = 0.1
MIN_CIRCLE_SPEED = 0.2


def _side_sign(value):
    return 1.0 if value == 'left' else -1.0


def _joint(motion, name):
    return motion[:, synthetic_layout().index(name), POS]


def _duration(motion, dt):
    return dt * (len(motion) - 1)


def walk_forward(motion, params, dt):
    yaw, position = root_trajectory(motion, dt)
    duration = _duration(motion, dt)
    # heading starts at 0, so forward is +Z
    return position[-1, 1] >= MIN_WALK_SPEED * duration and abs(yaw[-1]) < MAX_WALK_DRIFT


def turn(motion, params, dt):
    yaw, _ = root_trajectory(motion, dt)
    return _side_sign(params['direction']) * yaw[-1] >= MIN_TURN


def raise_arm(motion, params, dt):
    side = params['side']
    rise = _joint(motion, f'{side}_wrist')[:, Y] - _joint(motion, f'{side}_shoulder')[:, Y]
    return rise.max() >= MIN_ARM_RISE


def sign_changes(values):
    signs = np.sign(values - values.mean())
    signs = signs[signs != 0]
    return int((signs[1:] != signs[:-1]).sum())


def wave(motion, params, dt):
    side = params['side']
    wrist = _joint(motion, f'{side}_wrist')
    shoulder = _joint(motion, f'{side}_shoulder')
    raised = (wrist[:, Y] - shoulder[:, Y]).mean() > 0
    return raised and sign_changes(wrist[:, X]) >= MIN_WAVE_SWINGS


def jump(motion, params, dt):
    height = motion[:, synthetic_layout().root, HEIGHT]
    return height.max() - height[0] >= MIN_JUMP


def walk_circle(motion, params, dt):
    yaw, _ = root_trajectory(motion, dt)
    winding = _side_sign(params['direction']) * yaw
    monotone = bool((np.diff(winding) >= -1e-6).all())
    speed = float(np.mean(motion[:, synthetic_layout().root, V_FWD]))
    return monotone and winding[-1] >= math.pi and speed >= MIN_CIRCLE_SPEED


RULES = {
    'walk_forward': walk_forward,
    'turn': turn,
    'raise_arm': raise_arm,
    'wave': wave,
    'jump': jump,
    'walk_circle': walk_circle,
}


def check_label(motion, label, dt=1.0 / FPS):
    """True when `motion` does what `label` ({program, params}) says."""
    program = label.get('program') if isinstance(label, dict) else None
    if program not in RULES:
        raise InvalidArgument(f'no semantic rule for label {program!r}')
    motion = np.asarray(motion, dtype=np.float64)
    if motion.ndim != 3 or len(motion) < 2:
        raise InvalidArgument(f'motion must be [frames >= 2, joints, channels], got {motion.shape}')
    return bool(RULES[program](motion, label.get('params') or {}, dt))


def semantic_accuracy(samples, fps=FPS):
    """Fraction of (motion, label) or (motion, label, dt) samples whose rule passes."""
    samples = list(samples)
    if not samples:
        raise InvalidArgument('semantic accuracy needs at least one sample')
    passed = 0
    for sample in samples:
        motion, label = sample[0], sample[1]
        dt = sample[2] if len(sample) > 2 else 1.0 / fps
        passed += check_label(motion, label, dt)
    accuracy = passed / len(samples)
    logger.debug('semantic accuracy %.4f over %d samples', accuracy, len(samples))
    return accuracy
