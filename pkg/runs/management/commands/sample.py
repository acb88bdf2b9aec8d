from pathlib import Path

from corpus.container import write_corpus
from evaluation.reports import write_table
from flows.hierarchy import SamplingTrace
from motionflow.exceptions import InvalidArgument
from runs.command import RunCommand, require_file
from runs.forms import SampleForm
from runs.sampling import generate_motions, prompt_requests, samples_corpus, split_requests
from training.checkpoints import load_tmdit, load_vae
from training.flow import LatentScaler, check_compatible


class Command(RunCommand):
    help = 'Generates motions from text prompts with the hierarchical sampler'

    def add_command_arguments(self, parser):
        parser.add_argument('--prompt', type=str, help='Text prompt; overrides sample.prompt')

    def run(self, config, out_dir, options):
        section = dict(config.section('sample'))
        if options['prompt'] is not None:
            section['prompt'] = options['prompt']
        opts = SampleForm(section).config()
        sched = self.schedule(config)

        vae, _ = load_vae(require_file(config.path('vae'), 'paths.vae'), self.device)
        model, checkpoint = load_tmdit(require_file(config.path('tmdit'), 'paths.tmdit'), self.device)
        vocabulary = checkpoint.vocab()
        if vocabulary is None:
            raise InvalidArgument('the velocity-model checkpoint carries no vocabulary')
        check_compatible(vae, model.config, sched, vocabulary)
        scaler = LatentScaler.from_extras(checkpoint.extras)

        if opts['from_split']:
            records = self.load_corpus(config).split(opts['from_split'])
            requests = split_requests(records, opts['n_samples'])
        else:
            prompts = [opts['prompt']] if opts['prompt'] else []
            if opts['prompt_file']:
                text = require_file(Path(opts['prompt_file']), 'prompt file').read_text(encoding='utf-8')
                prompts = [line.strip() for line in text.splitlines() if line.strip()]
            requests = prompt_requests(prompts, vocabulary, opts['n_samples'])

        self.stdout.write(
            f'Sampling {len(requests)} motions of {opts["frames"]} frames '
            f'({opts["steps"]} {opts["solver"]} steps per stage, guidance {opts["guidance"]})...'
        )
        trace = SamplingTrace()
        motions = generate_motions(
            vae, model, scaler, sched, requests, vocabulary,
            frames=opts['frames'],
            steps=opts['steps'],
            solver=opts['solver'],
            guidance=opts['guidance'],
            seed=config.seed,
            batch_size=opts['batch_size'],
            trace=trace,
            device=self.device,
        )
        samples = write_corpus(out_dir / 'samples.mfc', samples_corpus(requests, motions, vocabulary, config.seed))
        trajectory = write_table(out_dir / 'trajectory.csv', trace.to_frame())

        self.stdout.write(f'Wrote {len(motions)} motions to {samples}')
        return [('motions', samples), ('table', trajectory)]
