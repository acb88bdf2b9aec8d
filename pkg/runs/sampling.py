"""Text-to-motion generation: tokens, hierarchical sampling in latent space, VAE decoding."""
from dataclasses import dataclass, field
import logging

import numpy as np
import torch

from corpus.builder import corpus_header
from corpus.container import Corpus, CorpusRecord
from flows.hierarchy import GuidanceConfig, hierarchical_sample
from motionflow.exceptions import InvalidArgument
from motionvae.network import DOWNSAMPLE
from training.data import token_batch

logger = logging.getLogger(__name__)

GENERATED_SPLIT = 'generated'


@dataclass
class SampleRequest:
    text: str
    tokens: list
    label: dict = field(default_factory=dict)


def prompt_requests(prompts, vocabulary, n_samples):
    """`n_samples` requests per prompt; an empty prompt asks for the null condition."""
    requests = []
    for prompt in prompts or ['']:
        tokens = vocabulary.encode(prompt)
        requests.extend(SampleRequest(prompt, tokens) for _ in range(n_samples))
    return requests


def split_requests(records, n_per_program):
    """Prompts and labels of the first `n_per_program` records of each program."""
    groups = {}
    for record in records:
        groups.setdefault(record.program, [])
        if len(groups[record.program]) < n_per_program:
            groups[record.program].append(SampleRequest(record.text, list(record.tokens), record.label))
    if not groups:
        raise InvalidArgument('the split holds no records to take prompts from')
    return [request for name in sorted(groups) for request in groups[name]]


@torch.no_grad()
def generate_motions(vae, model, scaler, sched, requests, vocabulary, frames, steps,
                     solver='euler', guidance=1.0, seed=0, batch_size=32, trace=None, device='cpu'):
    """Generate one motion [frames, J, C] per request.

    All randomness is the initial latent noise, drawn batch by batch from one
    generator seeded with `seed`. `trace`, when given, records the first batch.
    """
    if not requests:
        raise InvalidArgument('nothing to sample')
    generator = torch.Generator().manual_seed(seed)
    latent_frames = max(1, frames // DOWNSAMPLE)
    tail = (vae.config.latent_joints, vae.config.latent_dim)
    vfn = model.velocity_fn(sched)
    guide = GuidanceConfig(weight=guidance)

    motions = []
    for start in range(0, len(requests), batch_size):
        chunk = requests[start:start + batch_size]
        noise = torch.randn((len(chunk), latent_frames, *tail), generator=generator).to(device)
        tokens = token_batch([r.tokens for r in chunk], vocabulary).to(device)
        z = hierarchical_sample(vfn, sched, noise, steps, cond=tokens, guidance=guide, time_dim=1,
                                solver=solver, trace=trace if start == 0 else None)
        motion = vae.denormalize(vae.decode(scaler.restore(z), frames=frames))
        motions.extend(np.asarray(m, dtype=np.float32) for m in motion.cpu().numpy())
        logger.info('Sampled %d/%d motions', len(motions), len(requests))
    return motions


def samples_corpus(requests, motions, vocabulary, seed):
    """Package generated motions in the corpus container."""
    records = [
        CorpusRecord(
            index=i,
            seed=seed,
            program=request.label.get('program'),
            params=request.label.get('params') or {},
            text=request.text,
            tokens=list(request.tokens),
            split=GENERATED_SPLIT,
            motion=motion,
        )
        for i, (request, motion) in enumerate(zip(requests, motions))
    ]
    return Corpus(header=corpus_header(None, vocabulary), records=records)
