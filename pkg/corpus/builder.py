"""
Corpus generation.

Seeds: the master seed feeds a numpy `SeedSequence`, which spawns one child
per record in record-index order; a record's seed is the first uint32 of its
child's state. From that seed, `default_rng(seed)` drives limb phases,
`default_rng([seed, 1])` picks the text template and `default_rng([seed, 2])`
draws parameters and length.

Splits: bucket = int(sha256(str(index))[:8], 16) % 100; buckets 0-79 are
train, 80-84 val and 85-99 test.
"""
from dataclasses import asdict, dataclass, field
import hashlib
import logging

import numpy as np
import torch
from tqdm import tqdm

from motionflow.exceptions import InvalidArgument
from skeleton.layout import synthetic_layout

from .container import Corpus, CorpusRecord
from .kinematics import CHANNELS, MIN_FRAMES, generate_motion
from .programs import FPS, PROGRAM_NAMES, PROGRAMS, get_program
from .vocabulary import NULL_ID, build_vocabulary

logger = logging.getLogger(__name__)

SPLITS = ('train', 'val', 'test')


@dataclass
class CorpusSpec:
    n_per_program: int = 200
    min_frames: int = 64
    max_frames: int = 96
    seed: int = 0
    programs: list = field(default_factory=lambda: list(PROGRAM_NAMES))

    def __post_init__(self):
        if self.n_per_program < 1:
            raise InvalidArgument(f'n_per_program must be >= 1, got {self.n_per_program}')
        if not MIN_FRAMES <= self.min_frames <= self.max_frames:
            raise InvalidArgument(
                f'frame range must satisfy {MIN_FRAMES} <= min <= max, '
                f'got [{self.min_frames}, {self.max_frames}]'
            )
        for name in self.programs:
            get_program(name)

    def to_dict(self):
        return asdict(self)


@dataclass
class TextCondition:
    text: str
    tokens: list
    c: torch.Tensor | None = None
    c_vec: torch.Tensor | None = None


def corpus_vocabulary():
    """The closed vocabulary covering every template of every program."""
    return build_vocabulary(text for program in PROGRAMS.values() for text in program.all_texts())


def split_for_index(index):
    bucket = int(hashlib.sha256(str(index).encode('ascii')).hexdigest()[:8], 16) % 100
    if bucket < 80:
        return 'train'
    if bucket < 85:
        return 'val'
    return 'test'


def record_seeds(master_seed, n):
    children = np.random.SeedSequence(master_seed).spawn(n)
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]


def text_condition(program, params, seed, vocabulary=None, encoder=None):
    """Template text, token ids and (with an encoder) word and pooled embeddings.

    `program=None` gives the null condition: empty text, a single null token.
    `encoder` is any module mapping a [1, n] token tensor to (c, c_vec, mask),
    such as the velocity model's text encoder.
    """
    vocabulary = vocabulary or corpus_vocabulary()
    if program is None:
        text, tokens = '', [NULL_ID]
    else:
        program = get_program(program) if isinstance(program, str) else program
        program.check_params(params)
        rng = np.random.default_rng([int(seed), 1])
        text = program.render(params, int(rng.integers(len(program.templates))))
        tokens = vocabulary.encode(text)

    condition = TextCondition(text=text, tokens=tokens)
    if encoder is not None:
        with torch.no_grad():
            c, c_vec, _ = encoder(torch.tensor([tokens], dtype=torch.long))
        condition.c, condition.c_vec = c[0], c_vec[0]
    return condition


def make_record(index, seed, program_name, spec=None, vocabulary=None):
    spec = spec or CorpusSpec()
    program = get_program(program_name)
    rng = np.random.default_rng([seed, 2])
    params = program.sample_params(rng)
    frames = int(rng.integers(spec.min_frames, spec.max_frames + 1))
    condition = text_condition(program, params, seed, vocabulary)
    return CorpusRecord(
        index=index,
        seed=seed,
        program=program.name,
        params=params,
        text=condition.text,
        tokens=condition.tokens,
        split=split_for_index(index),
        motion=generate_motion(program, params, frames, seed),
    )


def corpus_header(spec=None, vocabulary=None):
    layout = synthetic_layout()
    vocabulary = vocabulary or corpus_vocabulary()
    return {
        'fps': FPS,
        'joints': len(layout),
        'channels': CHANNELS,
        'skeleton': layout.name,
        'vocabulary': vocabulary.to_list(),
        'spec': spec.to_dict() if spec is not None else None,
    }


def build_corpus(spec, progress=False):
    """Generate every record of `spec`, program-major, in index order."""
    vocabulary = corpus_vocabulary()
    names = list(spec.programs)
    total = spec.n_per_program * len(names)
    seeds = record_seeds(spec.seed, total)
    records = []
    for index in tqdm(range(total), disable=not progress, desc='records'):
        program_name = names[index // spec.n_per_program]
        records.append(make_record(index, seeds[index], program_name, spec, vocabulary))
    logger.info('Generated %d records over %d programs', total, len(names))
    return Corpus(header=corpus_header(spec, vocabulary), records=records)
