"""
Motion programs: the six parametric actions of the synthetic corpus.

A program turns (params, frames, seed) into a `Drive`: root yaw rate,
planar root velocity, root height, gait and arm schedules. The body model in
`corpus.kinematics` turns a drive into joint positions. Parameters fully
determine the root path; the seed only shifts limb phases.
"""
from dataclasses import dataclass, field
import math
import re

import numpy as np

from motionflow.exceptions import InvalidArgument

FPS = 20
REST_HEIGHT = 0.9
SIDES = ('left', 'right')
DIRECTIONS = ('left', 'right')

_SLOT = re.compile(r'\{\w+\}')


@dataclass
class Drive:
    yaw_rate: np.ndarray
    v_fwd: np.ndarray
    v_lat: np.ndarray
    height: np.ndarray
    gait_amplitude: float = 0.0
    cadence: float = 0.0
    gait_phase: float = 0.0
    arm_angle: dict = field(default_factory=dict)   # side -> raise angle per frame
    wave: dict = field(default_factory=dict)        # side -> (frequency, phase)


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def plateau(u, ramp=0.3):
    """0 -> 1 over the first `ramp` of the clip, hold, back to 0 over the last `ramp`."""
    return np.minimum(smoothstep(u / ramp), smoothstep((1 - u) / ramp))


def _signed(direction):
    return 1.0 if direction == 'left' else -1.0


def _base(frames, height=REST_HEIGHT):
    zeros = np.zeros(frames)
    return zeros.copy(), zeros.copy(), zeros.copy(), np.full(frames, height)


def _phase(rng):
    return float(rng.uniform(0.0, 2 * math.pi))


def _walk_gait(speed):
    return 0.2 + 0.1 * speed, 0.8 + 0.5 * speed


def drive_walk_forward(params, frames, rng):
    yaw, v_fwd, v_lat, height = _base(frames)
    v_fwd[:] = params['speed']
    amplitude, cadence = _walk_gait(params['speed'])
    return Drive(yaw, v_fwd, v_lat, height, amplitude, cadence, _phase(rng))


def drive_turn(params, frames, rng):
    yaw, v_fwd, v_lat, height = _base(frames)
    duration = (frames - 1) / FPS
    u = np.arange(frames) / (frames - 1)
    # heading follows angle * (1 - cos(pi u)) / 2
    yaw[:] = _signed(params['direction']) * params['angle'] * math.pi / (2 * duration) * np.sin(math.pi * u)
    return Drive(yaw, v_fwd, v_lat, height, 0.1, 1.0, _phase(rng))


def drive_raise_arm(params, frames, rng):
    yaw, v_fwd, v_lat, height = _base(frames)
    u = np.arange(frames) / (frames - 1)
    angle = params['amplitude'] * math.pi * plateau(u)
    return Drive(yaw, v_fwd, v_lat, height, arm_angle={params['side']: angle})


def drive_wave(params, frames, rng):
    yaw, v_fwd, v_lat, height = _base(frames)
    raised = np.full(frames, 0.75 * math.pi)
    return Drive(
        yaw, v_fwd, v_lat, height,
        arm_angle={params['side']: raised},
        wave={params['side']: (params['frequency'], _phase(rng))},
    )


def jump_window(frames):
    """Center frame and width of the jump arc."""
    width = min(16, 2 * ((frames - 2) // 2))
    return frames // 2, width


def drive_jump(params, frames, rng):
    yaw, v_fwd, v_lat, height = _base(frames)
    center, width = jump_window(frames)
    i = np.arange(frames)
    inside = np.abs(i - center) <= width // 2
    arc = np.sin(math.pi * (i - center + width / 2) / width) ** 2
    height[inside] += params['height'] * arc[inside]
    return Drive(yaw, v_fwd, v_lat, height)


def drive_walk_circle(params, frames, rng):
    yaw, v_fwd, v_lat, height = _base(frames)
    duration = (frames - 1) / FPS
    yaw[:] = _signed(params['direction']) * params['arc'] / duration
    speed = params['arc'] * params['radius'] / duration
    v_fwd[:] = speed
    amplitude, cadence = _walk_gait(speed)
    return Drive(yaw, v_fwd, v_lat, height, amplitude, cadence, _phase(rng))


def _pace(params):
    if params['speed'] < 0.9:
        return 'slowly'
    if params['speed'] < 1.4:
        return 'steadily'
    return 'quickly'


@dataclass(frozen=True)
class MotionProgram:
    name: str
    ranges: dict
    choices: dict
    templates: tuple
    drive: object
    fillers: object = None

    def sample_params(self, rng):
        params = {}
        for key in sorted(self.choices):
            options = self.choices[key]
            params[key] = options[int(rng.integers(len(options)))]
        for key in sorted(self.ranges):
            low, high = self.ranges[key]
            params[key] = float(rng.uniform(low, high))
        return params

    def check_params(self, params):
        expected = set(self.ranges) | set(self.choices)
        if set(params) != expected:
            raise InvalidArgument(
                f'{self.name} takes parameters {sorted(expected)}, got {sorted(params)}'
            )
        for key, (low, high) in self.ranges.items():
            value = params[key]
            if not isinstance(value, (int, float)) or not low <= value <= high:
                raise InvalidArgument(f'{self.name}.{key} must lie in [{low:.4g}, {high:.4g}], got {value!r}')
        for key, options in self.choices.items():
            if params[key] not in options:
                raise InvalidArgument(f'{self.name}.{key} must be one of {options}, got {params[key]!r}')

    def slots(self, params):
        values = {key: params[key] for key in self.choices}
        if self.fillers is not None:
            values.update(self.fillers(params))
        return values

    def render(self, params, template_index):
        return self.templates[template_index].format(**self.slots(params))

    def all_texts(self):
        """Every text the program can emit, for vocabulary building."""
        texts = [_SLOT.sub(" ", template) for template in self.templates]
        texts.extend(FILLER_WORDS.get(self.name, ()))
        for options in self.choices.values():
            texts.extend(options)
        return texts


FILLER_WORDS = {
    'walk_forward': ('slowly', 'steadily', 'quickly'),
    'jump': ('a little', 'high'),
    'walk_circle': ('small', 'large'),
}

PROGRAMS = {
    'walk_forward': MotionProgram(
        name='walk_forward',
        ranges={'speed': (0.5, 2.0)},
        choices={},
        templates=(
            'a person walks forward {pace}',
            'someone walks straight ahead {pace}',
            'the person walks {pace} in a straight line',
        ),
        drive=drive_walk_forward,
        fillers=lambda p: {'pace': _pace(p)},
    ),
    'turn': MotionProgram(
        name='turn',
        ranges={'angle': (math.pi / 4, math.pi)},
        choices={'direction': DIRECTIONS},
        templates=(
            'a person turns to the {direction}',
            'someone turns {direction} in place',
            'the person is turning around to the {direction}',
        ),
        drive=drive_turn,
    ),
    'raise_arm': MotionProgram(
        name='raise_arm',
        ranges={'amplitude': (0.6, 1.0)},
        choices={'side': SIDES},
        templates=(
            'a person raises the {side} arm',
            'someone lifts their {side} arm up',
            'the person is raising the {side} hand',
        ),
        drive=drive_raise_arm,
    ),
    'wave': MotionProgram(
        name='wave',
        ranges={'frequency': (0.75, 1.25)},
        choices={'side': SIDES},
        templates=(
            'a person waves with the {side} hand',
            'someone waves their {side} hand',
            'the person is waving the {side} arm',
        ),
        drive=drive_wave,
    ),
    'jump': MotionProgram(
        name='jump',
        ranges={'height': (0.2, 0.6)},
        choices={},
        templates=(
            'a person jumps {height_word}',
            'someone jumps up {height_word}',
            'the person is jumping {height_word}',
        ),
        drive=drive_jump,
        fillers=lambda p: {'height_word': 'a little' if p['height'] < 0.35 else 'high'},
    ),
    'walk_circle': MotionProgram(
        name='walk_circle',
        ranges={'radius': (0.5, 1.5), 'arc': (1.1 * math.pi, 1.6 * math.pi)},
        choices={'direction': DIRECTIONS},
        templates=(
            'a person walks in a circle to the {direction}',
            'someone walks around in a {size} circle',
            'the person is walking in a {direction} circle',
        ),
        drive=drive_walk_circle,
        fillers=lambda p: {'size': 'small' if p['radius'] < 1.0 else 'large'},
    ),
}

PROGRAM_NAMES = tuple(PROGRAMS)


def get_program(name):
    try:
        return PROGRAMS[name]
    except KeyError:
        raise InvalidArgument(
            f'unknown program {name!r}; choose from {", ".join(PROGRAM_NAMES)}'
        ) from None
