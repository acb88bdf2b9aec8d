"""
Externally produced pose-feature files.

A pose-feature file is a `.npy` array of shape frames x feature_dim. A layout
config (JSON) says which flat feature ranges belong to which joint:

    {"name": ..., "feature_dim": 263, "channels": 12,
     "joints": [{"name": "pelvis", "features": [[0, 4], [193, 196]]}, ...],
     "ignored": [[259, 263]]}

A joint's ranges are concatenated in order and zero-padded to `channels`.
Every flat index must be claimed exactly once by a joint or by `ignored`.
"""
from dataclasses import dataclass
import json
from pathlib import Path

import numpy as np

from motionflow.exceptions import FormatError

DATA_DIR = Path(__file__).resolve().parent / 'data'
SYNTHETIC_LAYOUT = DATA_DIR / 'synthetic15.json'
HUMANML_LAYOUT = DATA_DIR / 'humanml263.json'


@dataclass(frozen=True)
class PoseLayout:
    name: str
    feature_dim: int
    channels: int
    joints: tuple      # ((name, ((start, stop), ...)), ...)
    ignored: tuple = ()

    def __post_init__(self):
        claimed = np.zeros(self.feature_dim, dtype=int)
        for start, stop in self.ignored:
            self._claim(claimed, start, stop, 'ignored')
        for name, ranges in self.joints:
            width = 0
            for start, stop in ranges:
                self._claim(claimed, start, stop, name)
                width += stop - start
            if width > self.channels:
                raise FormatError(f'joint {name!r} has {width} features but only {self.channels} channels')
        if (claimed != 1).any():
            unclaimed = np.flatnonzero(claimed == 0)
            doubled = np.flatnonzero(claimed > 1)
            raise FormatError(
                f'layout {self.name!r}: {len(unclaimed)} unclaimed and {len(doubled)} doubly claimed features'
            )

    def _claim(self, claimed, start, stop, owner):
        if not 0 <= start < stop <= self.feature_dim:
            raise FormatError(f'{owner}: feature range [{start}, {stop}) is outside [0, {self.feature_dim})')
        claimed[start:stop] += 1

    @property
    def n_joints(self):
        return len(self.joints)


def pose_layout_from_dict(data):
    try:
        joints = tuple(
            (entry['name'], tuple((int(a), int(b)) for a, b in entry['features']))
            for entry in data['joints']
        )
        return PoseLayout(
            name=data.get('name', 'pose'),
            feature_dim=int(data['feature_dim']),
            channels=int(data['channels']),
            joints=joints,
            ignored=tuple((int(a), int(b)) for a, b in data.get('ignored', [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f'malformed pose layout config: {exc}') from exc


def load_pose_layout(path):
    try:
        return pose_layout_from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise FormatError(f'{path} is not valid JSON: {exc}') from exc


def _as_layout(layout_config):
    if isinstance(layout_config, PoseLayout):
        return layout_config
    return load_pose_layout(layout_config)


def features_to_motion(flat, layout):
    flat = np.asarray(flat)
    if flat.ndim != 2 or flat.shape[1] != layout.feature_dim:
        raise FormatError(
            f'pose features have shape {flat.shape}; layout {layout.name!r} '
            f'expects frames x {layout.feature_dim}'
        )
    motion = np.zeros((flat.shape[0], layout.n_joints, layout.channels), dtype=np.float32)
    for j, (_, ranges) in enumerate(layout.joints):
        columns = np.concatenate([flat[:, a:b] for a, b in ranges], axis=1)
        motion[:, j, :columns.shape[1]] = columns
    return motion


def motion_to_features(motion, layout):
    motion = np.asarray(motion)
    if motion.ndim != 3 or motion.shape[1:] != (layout.n_joints, layout.channels):
        raise FormatError(
            f'motion has shape {motion.shape}; layout {layout.name!r} '
            f'expects frames x {layout.n_joints} x {layout.channels}'
        )
    flat = np.zeros((motion.shape[0], layout.feature_dim), dtype=np.float32)
    for j, (_, ranges) in enumerate(layout.joints):
        offset = 0
        for a, b in ranges:
            flat[:, a:b] = motion[:, j, offset:offset + b - a]
            offset += b - a
    return flat


def load_pose_features(path, layout_config=SYNTHETIC_LAYOUT):
    """Read a frames x feature_dim `.npy` file into frames x joints x channels."""
    layout = _as_layout(layout_config)
    try:
        flat = np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise FormatError(f'{path} is not a dense numpy array: {exc}') from exc
    if not np.issubdtype(flat.dtype, np.floating):
        raise FormatError(f'{path} holds {flat.dtype}, expected floating point features')
    return features_to_motion(flat, layout)


def save_pose_features(path, motion, layout_config=SYNTHETIC_LAYOUT):
    layout = _as_layout(layout_config)
    np.save(path, motion_to_features(motion, layout), allow_pickle=False)
    return Path(path)
