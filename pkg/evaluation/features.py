"""Fixed-length pose features: per-channel temporal mean and std."""
import numpy as np

from motionflow.exceptions import DistanceUndefined


def pose_features(motion):
    motion = np.asarray(motion, dtype=np.float64)
    flat = motion.reshape(len(motion), -1)
    return np.concatenate([flat.mean(axis=0), flat.std(axis=0)])


def feature_set(motions):
    """Stack the features of `motions` into an [n, F] array."""
    features = [pose_features(m) for m in motions]
    if not features:
        raise DistanceUndefined('no motions to featurize')
    widths = {len(f) for f in features}
    if len(widths) != 1:
        raise DistanceUndefined(f'motions disagree on feature width: {sorted(widths)}')
    stacked = np.stack(features)
    if not np.isfinite(stacked).all():
        raise DistanceUndefined('pose features contain non-finite values')
    return stacked
