"""
Checkpoint container (`.mfk`).

    magic       8 bytes   b"MFCKPT\\x00\\x01"
    version     u32       1
    header_len  u64
    header      JSON (UTF-8, sorted keys, compact):
                kind, config, vocabulary, extras,
                tensors: [{name, dtype, shape, offset, nbytes}, ...]
    data        tensors concatenated in header order, little-endian, C order;
                offsets are relative to the start of the data section

Dtypes are "<f4", "<f8" and "<i8". Saving the same tensors, config and
extras always gives the same bytes.
"""
from dataclasses import dataclass, field
import hashlib
import json
import logging
from pathlib import Path
import struct

import numpy as np
import torch

from corpus.vocabulary import Vocabulary
from motionflow.exceptions import FormatError
from motionvae.network import MotionVAE, VAEConfig
from skeleton.layout import layout_from_dict, layout_to_dict
from tmdit.network import TMDiT, TMDiTConfig

logger = logging.getLogger(__name__)

MAGIC = b'MFCKPT\x00\x01'
VERSION = 1
_PREFIX = struct.Struct('<IQ')

DTYPES = {
    torch.float32: '<f4',
    torch.float64: '<f8',
    torch.int64: '<i8',
}
_TORCH_DTYPES = {code: dtype for dtype, code in DTYPES.items()}

KINDS = ('vae', 'tmdit')


@dataclass
class Checkpoint:
    kind: str
    config: dict
    tensors: dict
    vocabulary: list | None = None
    extras: dict = field(default_factory=dict)

    def vocab(self):
        return Vocabulary.from_list(self.vocabulary) if self.vocabulary else None


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':')).encode('utf-8')


def checkpoint_bytes(checkpoint):
    entries, blobs, offset = [], [], 0
    for name, tensor in checkpoint.tensors.items():
        tensor = tensor.detach().cpu()
        if tensor.dtype not in DTYPES:
            raise FormatError(f'tensor {name!r} has unsupported dtype {tensor.dtype}')
        code = DTYPES[tensor.dtype]
        blob = np.ascontiguousarray(tensor.numpy(), dtype=code).tobytes(order='C')
        entries.append({
            'name': name,
            'dtype': code,
            'shape': list(tensor.shape),
            'offset': offset,
            'nbytes': len(blob),
        })
        blobs.append(blob)
        offset += len(blob)

    header = _dumps({
        'kind': checkpoint.kind,
        'config': checkpoint.config,
        'vocabulary': checkpoint.vocabulary,
        'extras': checkpoint.extras,
        'tensors': entries,
    })
    return MAGIC + _PREFIX.pack(VERSION, len(header)) + header + b''.join(blobs)


def save_checkpoint(path, checkpoint):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = checkpoint_bytes(checkpoint)
    path.write_bytes(data)
    logger.info('Saved %s checkpoint to %s (%d tensors, sha256 %s)',
                checkpoint.kind, path, len(checkpoint.tensors), hashlib.sha256(data).hexdigest()[:12])
    return path


def load_checkpoint(path, kind=None):
    path = Path(path)
    data = path.read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError(f'{path} is not a checkpoint file')
    start = len(MAGIC) + _PREFIX.size
    if len(data) < start:
        raise FormatError(f'{path}: truncated header')
    version, header_len = _PREFIX.unpack(data[len(MAGIC):start])
    if version != VERSION:
        raise FormatError(f'{path}: unsupported checkpoint version {version}')
    try:
        header = json.loads(data[start:start + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f'{path}: bad header: {exc}') from exc
    if not isinstance(header, dict):
        raise FormatError(f'{path}: the header is not a JSON object')
    if kind is not None and header.get('kind') != kind:
        raise FormatError(f'{path} holds a {header.get("kind")!r} checkpoint, expected {kind!r}')

    body = memoryview(data)[start + header_len:]
    try:
        tensors, end = _read_tensors(path, header['tensors'], body)
        checkpoint = Checkpoint(
            kind=header['kind'],
            config=header['config'],
            tensors=tensors,
            vocabulary=header.get('vocabulary'),
            extras=header.get('extras') or {},
        )
    except KeyError as exc:
        raise FormatError(f'{path}: header lacks {exc}') from None
    except (TypeError, ValueError) as exc:
        raise FormatError(f'{path}: malformed tensor table: {exc}') from exc
    if end != len(body):
        raise FormatError(f'{path}: {len(body) - end} unaccounted bytes after the tensors')
    return checkpoint


def _read_tensors(path, entries, body):
    tensors = {}
    end = 0
    for entry in entries:
        if entry['dtype'] not in _TORCH_DTYPES:
            raise FormatError(f'{path}: tensor {entry["name"]!r} has unknown dtype {entry["dtype"]}')
        lo, hi = entry['offset'], entry['offset'] + entry['nbytes']
        if hi > len(body):
            raise FormatError(f'{path}: tensor {entry["name"]!r} runs past the end of the file')
        array = np.frombuffer(body[lo:hi], dtype=entry['dtype']).reshape(entry['shape'])
        tensors[entry['name']] = torch.from_numpy(array.astype(array.dtype.newbyteorder('='), copy=True))
        end = max(end, hi)
    return tensors, end


def model_checkpoint(kind, model, vocabulary=None, extras=None):
    """Pack `model`; velocity models also carry their latent skeleton."""
    if kind not in KINDS:
        raise FormatError(f'unknown checkpoint kind {kind!r}')
    extras = dict(extras or {})
    if kind == 'tmdit':
        extras['layout'] = layout_to_dict(model.layout)
    return Checkpoint(
        kind=kind,
        config=model.config.to_dict(),
        tensors={name: t.detach().cpu() for name, t in model.state_dict().items()},
        vocabulary=vocabulary.to_list() if vocabulary is not None else None,
        extras=extras,
    )


def load_vae(path, device='cpu'):
    checkpoint = load_checkpoint(path, kind='vae')
    model = MotionVAE(VAEConfig.from_dict(checkpoint.config))
    model.load_state_dict(checkpoint.tensors)
    return model.to(device).eval(), checkpoint


def load_tmdit(path, device='cpu'):
    checkpoint = load_checkpoint(path, kind='tmdit')
    if 'layout' not in checkpoint.extras:
        raise FormatError(f'{path}: velocity checkpoint has no latent skeleton layout')
    layout = layout_from_dict(checkpoint.extras['layout'])
    model = TMDiT(TMDiTConfig.from_dict(checkpoint.config), layout=layout)
    model.load_state_dict(checkpoint.tensors)
    return model.to(device).eval(), checkpoint
