"""Batch assembly over corpus records."""
import logging

import numpy as np
import torch

from motionflow.exceptions import InvalidArgument

logger = logging.getLogger(__name__)

CROP_MULTIPLE = 4


def motion_statistics(records):
    """Per (joint, channel) mean and std over every frame of `records`."""
    if not records:
        raise InvalidArgument('cannot compute statistics of an empty record list')
    frames = np.concatenate([np.asarray(r.motion, dtype=np.float64) for r in records], axis=0)
    return frames.mean(axis=0), frames.std(axis=0)


class MotionBatcher:
    """Seeded batches of cropped motions.

    Records are visited in a fresh permutation each epoch. A batch is cropped
    to its shortest motion, floored to a multiple of four; each crop offset is
    drawn from the same generator.
    """

    def __init__(self, records, batch_size, seed, multiple=CROP_MULTIPLE):
        if not records:
            raise InvalidArgument('no records to batch')
        if min(r.frames for r in records) < multiple:
            raise InvalidArgument(f'every record needs at least {multiple} frames')
        self.records = list(records)
        self.batch_size = batch_size
        self.multiple = multiple
        self.rng = np.random.default_rng(seed)
        self._order = []

    def _next_indices(self):
        indices = []
        while len(indices) < self.batch_size:
            if not self._order:
                self._order = list(self.rng.permutation(len(self.records)))
            indices.append(int(self._order.pop(0)))
        return indices

    def next_batch(self):
        """(motion [B, L, J, C] float32 tensor, records)"""
        records = [self.records[i] for i in self._next_indices()]
        length = min(r.frames for r in records) // self.multiple * self.multiple
        crops = []
        for record in records:
            offset = int(self.rng.integers(0, record.frames - length + 1))
            crops.append(record.motion[offset:offset + length])
        return torch.from_numpy(np.stack(crops).astype(np.float32)), records


def token_batch(rows, vocabulary):
    return torch.tensor(vocabulary.pad(rows), dtype=torch.long)
