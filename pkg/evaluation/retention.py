"""Semantic accuracy of motions after linear temporal downsampling."""
import logging

import numpy as np
import pandas as pd
import torch

from corpus.programs import FPS
from flows.resample import resample
from motionflow.exceptions import InvalidArgument

from .rules import semantic_accuracy

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (1.0, 0.8, 0.6, 0.4, 0.2)


def downsample_motion(motion, ratio, fps=FPS):
    """Resample `motion` by `ratio`; returns (motion, dt) keeping the clip duration."""
    source = torch.from_numpy(np.asarray(motion, dtype=np.float64))
    shortened = resample(source, ratio, dim=0).numpy()
    if len(shortened) < 2:
        raise InvalidArgument(f'ratio {ratio} leaves fewer than two frames of a {len(motion)}-frame motion')
    duration = (len(motion) - 1) / fps
    return shortened, duration / (len(shortened) - 1)


def retention_study(samples, ratios=DEFAULT_RATIOS, fps=FPS):
    """Table with columns ratio, accuracy, n for (motion, label) samples."""
    samples = list(samples)
    if not samples:
        raise InvalidArgument('the retention study needs at least one sample')
    rows = []
    for ratio in ratios:
        shortened = []
        for motion, label in samples:
            motion_r, dt = downsample_motion(motion, ratio, fps)
            shortened.append((motion_r, label, dt))
        accuracy = semantic_accuracy(shortened, fps)
        logger.info('ratio %.2f: accuracy %.4f', ratio, accuracy)
        rows.append({'ratio': float(ratio), 'accuracy': accuracy, 'n': len(samples)})
    return pd.DataFrame(rows, columns=['ratio', 'accuracy', 'n'])
