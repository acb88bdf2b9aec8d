import pandas as pd

from corpus.builder import build_corpus
from corpus.container import write_corpus
from corpus.forms import CorpusSpecForm
from evaluation.reports import write_table
from runs.command import RunCommand


class Command(RunCommand):
    help = 'Generates the synthetic motion corpus'

    def run(self, config, out_dir, options):
        spec = CorpusSpecForm(config.section('corpus')).corpus_spec(config.seed)
        self.stdout.write(
            f'Generating {spec.n_per_program} records for each of {len(spec.programs)} programs...'
        )
        corpus = build_corpus(spec, progress=options['progress'])
        path = write_corpus(out_dir / 'corpus.mfc', corpus)

        summary = pd.DataFrame([{'program': r.program, 'split': r.split, 'frames': r.frames} for r in corpus])
        summary = (summary.groupby(['program', 'split'])
                   .agg(n=('frames', 'size'), mean_frames=('frames', 'mean'))
                   .reset_index())
        table = write_table(out_dir / 'corpus_summary.csv', summary)

        self.stdout.write(f'Wrote {len(corpus)} records to {path}')
        return [('corpus', path), ('table', table)]
