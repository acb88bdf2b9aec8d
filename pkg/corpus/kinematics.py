"""
Body model and pose channels for the synthetic corpus.

Every joint carries six channels. Non-root joints hold their position in the
root's heading frame (x lateral with left positive, y absolute height, z
forward) followed by the frame-differenced velocity of that position. The
pelvis holds the root channels instead:

    [yaw rate, forward velocity, lateral velocity, height, vertical velocity, 0]

Heading psi turns left when positive; the forward direction on the ground
plane is (sin psi, cos psi) in world (X, Z).
"""
import math

import numpy as np
from scipy.integrate import cumulative_trapezoid

from motionflow.exceptions import InvalidArgument
from skeleton.layout import synthetic_layout

from .programs import FPS, MotionProgram, get_program

CHANNELS = 6
MIN_FRAMES = 16

# root channels
YAW_RATE, V_FWD, V_LAT, HEIGHT, V_UP = range(5)
# joint channels
POS = slice(0, 3)
VEL = slice(3, 6)
X, Y, Z = range(3)

UPPER_ARM = 0.27
FOREARM = 0.25
THIGH = 0.45
SHIN = 0.4

# rest offsets from the pelvis, local frame
_TORSO = {
    'pelvis': (0.0, 0.0, 0.0),
    'spine': (0.0, 0.25, 0.0),
    'head': (0.0, 0.6, 0.0),
    'left_shoulder': (0.18, 0.45, 0.0),
    'right_shoulder': (-0.18, 0.45, 0.0),
    'left_hip': (0.1, 0.0, 0.0),
    'right_hip': (-0.1, 0.0, 0.0),
}
_SIGN = {'left': 1.0, 'right': -1.0}


def _arm(positions, names, side, drive, t, leg_phase):
    s = _SIGN[side]
    frames = len(t)
    theta = drive.arm_angle.get(side, np.zeros(frames))
    # counter-swing against the same-side leg while walking
    beta = -0.5 * drive.gait_amplitude * np.sin(leg_phase) * s
    upper = np.stack([s * np.sin(theta), -np.cos(theta) * np.cos(beta), np.cos(theta) * np.sin(beta)], axis=1)
    shoulder = positions[:, names.index(f'{side}_shoulder')]
    elbow = shoulder + UPPER_ARM * upper
    if side in drive.wave:
        frequency, phase = drive.wave[side]
        alpha = 0.5 * np.sin(2 * math.pi * frequency * t + phase)
        fore = np.stack([s * np.sin(alpha), np.cos(alpha), np.zeros(frames)], axis=1)
    else:
        fore = upper
    positions[:, names.index(f'{side}_elbow')] = elbow
    positions[:, names.index(f'{side}_wrist')] = elbow + FOREARM * fore


def _leg(positions, names, side, drive, leg_phase):
    s = _SIGN[side]
    a = s * drive.gait_amplitude * np.sin(leg_phase)
    flex = drive.gait_amplitude * (1 - np.cos(leg_phase)) / 2
    b = a - flex
    thigh = np.stack([np.zeros_like(a), -np.cos(a), np.sin(a)], axis=1)
    shin = np.stack([np.zeros_like(b), -np.cos(b), np.sin(b)], axis=1)
    knee = positions[:, names.index(f'{side}_hip')] + THIGH * thigh
    positions[:, names.index(f'{side}_knee')] = knee
    positions[:, names.index(f'{side}_ankle')] = knee + SHIN * shin


def body_positions(drive, frames, fps=FPS):
    """Joint positions in the heading frame, pelvis-relative: [frames, J, 3]."""
    layout = synthetic_layout()
    names = layout.names
    t = np.arange(frames) / fps
    positions = np.zeros((frames, len(names), 3))
    for name, offset in _TORSO.items():
        positions[:, names.index(name)] = offset
    leg_phase = 2 * math.pi * drive.cadence * t + drive.gait_phase
    for side in ('left', 'right'):
        _arm(positions, names, side, drive, t, leg_phase)
        _leg(positions, names, side, drive, leg_phase)
    return positions


def drive_channels(drive, frames, fps=FPS):
    layout = synthetic_layout()
    dt = 1.0 / fps
    positions = body_positions(drive, frames, fps)
    positions[..., Y] += drive.height[:, None]

    motion = np.zeros((frames, len(layout), CHANNELS))
    motion[..., POS] = positions
    motion[..., VEL] = np.gradient(positions, dt, axis=0)

    root = layout.root
    motion[:, root] = 0.0
    motion[:, root, YAW_RATE] = drive.yaw_rate
    motion[:, root, V_FWD] = drive.v_fwd
    motion[:, root, V_LAT] = drive.v_lat
    motion[:, root, HEIGHT] = drive.height
    motion[:, root, V_UP] = np.gradient(drive.height, dt)
    return motion


def generate_motion(program, params, frames, seed, fps=FPS):
    """Pose channels [frames, 15, 6] (float32) for one program instance."""
    if not isinstance(program, MotionProgram):
        program = get_program(program)
    program.check_params(params)
    if isinstance(frames, bool) or int(frames) != frames or frames < MIN_FRAMES:
        raise InvalidArgument(f'motions need at least {MIN_FRAMES} frames, got {frames!r}')
    rng = np.random.default_rng(int(seed))
    drive = program.drive(params, int(frames), rng)
    return drive_channels(drive, int(frames), fps).astype(np.float32)


def root_trajectory(motion, dt=1.0 / FPS, root=0):
    """Integrate root channels into (heading [L], ground position [L, 2])."""
    motion = np.asarray(motion, dtype=np.float64)
    channels = motion[:, root]
    yaw = cumulative_trapezoid(channels[:, YAW_RATE], dx=dt, initial=0.0)
    forward = np.stack([np.sin(yaw), np.cos(yaw)], axis=1)
    left = np.stack([np.cos(yaw), -np.sin(yaw)], axis=1)
    velocity = channels[:, V_FWD, None] * forward + channels[:, V_LAT, None] * left
    position = cumulative_trapezoid(velocity, dx=dt, axis=0, initial=0.0)
    return yaw, position
