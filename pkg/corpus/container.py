"""
Corpus container (`.mfc`).

Layout, all integers unsigned little-endian:

    magic       8 bytes   b"MFCORPUS"
    version     u32       1
    header_len  u32
    header      JSON (UTF-8, sorted keys, compact separators):
                fps, joints, channels, skeleton, vocabulary, n_records, spec
    records     n_records times:
        meta_len    u32
        meta        JSON: index, seed, program, params, text, tokens, split, frames
        frames      u32
        joints      u16
        channels    u16
        payload     frames * joints * channels float32 little-endian, C order

Writing is deterministic: identical records give identical bytes.
"""
from dataclasses import dataclass, field
import json
import logging
from pathlib import Path
import struct

import numpy as np

from motionflow.exceptions import FormatError

logger = logging.getLogger(__name__)

MAGIC = b'MFCORPUS'
VERSION = 1
_U32 = struct.Struct('<I')
_SHAPE = struct.Struct('<IHH')


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':')).encode('utf-8')


@dataclass
class CorpusRecord:
    index: int
    seed: int
    program: str | None
    params: dict
    text: str
    tokens: list
    split: str
    motion: np.ndarray

    @property
    def frames(self):
        return int(self.motion.shape[0])

    @property
    def label(self):
        return {'program': self.program, 'params': self.params}

    def meta(self):
        return {
            'index': self.index,
            'seed': self.seed,
            'program': self.program,
            'params': self.params,
            'text': self.text,
            'tokens': [int(t) for t in self.tokens],
            'split': self.split,
            'frames': self.frames,
        }


@dataclass
class Corpus:
    header: dict
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def fps(self):
        return self.header['fps']

    def split(self, name):
        """Records of one split; 'all' keeps every record."""
        if name in (None, 'all'):
            return list(self.records)
        return [r for r in self.records if r.split == name]

    def by_program(self, records=None):
        groups = {}
        for record in records if records is not None else self.records:
            groups.setdefault(record.program, []).append(record)
        return groups


def write_corpus(path, corpus):
    """Write `corpus` to `path`; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = dict(corpus.header, n_records=len(corpus.records))
    header_bytes = _dumps(header)
    with open(path, 'wb') as fh:
        fh.write(MAGIC)
        fh.write(_U32.pack(VERSION))
        fh.write(_U32.pack(len(header_bytes)))
        fh.write(header_bytes)
        for record in corpus.records:
            motion = np.ascontiguousarray(record.motion, dtype='<f4')
            if motion.ndim != 3:
                raise FormatError(f'record {record.index}: motion must be frames x joints x channels')
            meta = _dumps(record.meta())
            fh.write(_U32.pack(len(meta)))
            fh.write(meta)
            fh.write(_SHAPE.pack(*motion.shape))
            fh.write(motion.tobytes(order='C'))
    logger.info('Wrote %d records to %s', len(corpus.records), path)
    return path


class _Reader:
    def __init__(self, data, path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, n):
        if self.offset + n > len(self.data):
            raise FormatError(f'{self.path}: truncated at byte {self.offset}')
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self):
        return _U32.unpack(self.take(4))[0]

    def json(self, n):
        try:
            return json.loads(self.take(n).decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f'{self.path}: bad JSON block at byte {self.offset}: {exc}') from exc


def read_corpus(path):
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise FormatError(f'{path} is not a corpus file')
    version = reader.u32()
    if version != VERSION:
        raise FormatError(f'{path}: unsupported corpus version {version}')
    header = reader.json(reader.u32())
    if not isinstance(header, dict):
        raise FormatError(f'{path}: the header is not a JSON object')

    records = []
    for _ in range(header.get('n_records', 0)):
        meta = reader.json(reader.u32())
        if not isinstance(meta, dict):
            raise FormatError(f'{path}: record {len(records)} meta is not a JSON object')
        frames, joints, channels = _SHAPE.unpack(reader.take(_SHAPE.size))
        if frames != meta.get('frames'):
            raise FormatError(f'{path}: record {meta.get("index")} frame count disagrees with its meta')
        payload = reader.take(4 * frames * joints * channels)
        motion = np.frombuffer(payload, dtype='<f4').reshape(frames, joints, channels).astype(np.float32)
        try:
            records.append(CorpusRecord(
                index=meta['index'],
                seed=meta['seed'],
                program=meta['program'],
                params=meta['params'],
                text=meta['text'],
                tokens=meta['tokens'],
                split=meta['split'],
                motion=motion,
            ))
        except KeyError as exc:
            raise FormatError(f'{path}: record {len(records)} meta lacks {exc}') from None
    if reader.offset != len(reader.data):
        raise FormatError(f'{path}: {len(reader.data) - reader.offset} trailing bytes')
    logger.debug('Read %d records from %s', len(records), path)
    return Corpus(header=header, records=records)
