import logging

import numpy as np
from scipy import linalg

from motionflow.exceptions import DistanceUndefined, InvalidArgument

from .features import feature_set

logger = logging.getLogger(__name__)

COVARIANCE_EPS = 1e-6
DIVERSITY_PAIRS = 300


def _as_features(items):
    """[n, F] arrays pass through; anything else is a collection of motions."""
    if isinstance(items, np.ndarray) and items.ndim == 2:
        return items.astype(np.float64, copy=False)
    return feature_set(items)


def psd_sqrt(matrix):
    """Square root of a symmetric PSD matrix; tiny negative eigenvalues clamp to zero."""
    values, vectors = linalg.eigh((matrix + matrix.T) / 2)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def gaussian_stats(features, eps=COVARIANCE_EPS):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or len(features) < 2:
        raise DistanceUndefined(f'need at least 2 feature vectors, got shape {features.shape}')
    if not np.isfinite(features).all():
        raise DistanceUndefined('features contain non-finite values')
    mean = features.mean(axis=0)
    cov = np.atleast_2d(np.cov(features, rowvar=False)) + eps * np.eye(features.shape[1])
    return mean, cov


def frechet_distance(mu_a, cov_a, mu_b, cov_b):
    if mu_a.shape != mu_b.shape:
        raise DistanceUndefined(f'feature widths differ: {mu_a.shape[0]} vs {mu_b.shape[0]}')
    root_a = psd_sqrt(cov_a)
    # trace sqrt(cov_a cov_b) == trace sqrt(root_a cov_b root_a), which is symmetric
    cross = psd_sqrt(root_a @ cov_b @ root_a)
    diff = mu_a - mu_b
    value = diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2 * np.trace(cross)
    return max(float(value), 0.0)


def frechet_pose_distance(a, b, eps=COVARIANCE_EPS):
    """Fréchet distance between two feature sets.

    `a` and `b` are [n, F] feature arrays or lists of motions, which are
    featurized first.
    """
    mu_a, cov_a = gaussian_stats(_as_features(a), eps)
    mu_b, cov_b = gaussian_stats(_as_features(b), eps)
    return frechet_distance(mu_a, cov_a, mu_b, cov_b)


def diversity(items, n_pairs=DIVERSITY_PAIRS, seed=0):
    """Mean feature distance over `n_pairs` random pairs drawn with replacement."""
    features = _as_features(items) if len(items) >= 2 else np.empty((len(items), 0))
    if len(features) < 2:
        raise InvalidArgument(f'diversity needs at least 2 items, got {len(features)}')
    if n_pairs < 1:
        raise InvalidArgument(f'n_pairs must be >= 1, got {n_pairs}')
    rng = np.random.default_rng(seed)
    first = rng.integers(len(features), size=n_pairs)
    second = rng.integers(len(features), size=n_pairs)
    return float(np.linalg.norm(features[first] - features[second], axis=1).mean())
