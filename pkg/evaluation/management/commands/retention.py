from evaluation.forms import RetentionForm
from evaluation.reports import write_report, write_table
from evaluation.retention import retention_study
from motionflow.exceptions import InvalidArgument
from runs.command import RunCommand


class Command(RunCommand):
    help = 'Measures rule-based accuracy of ground-truth motions under temporal downsampling'

    def run(self, config, out_dir, options):
        opts = RetentionForm(config.section('retention')).config()
        corpus = self.load_corpus(config)
        samples = [(r.motion, r.label) for r in corpus.split(opts['split']) if r.program is not None]
        if not samples:
            raise InvalidArgument(f'split {opts["split"]!r} holds no labeled motions')

        table = retention_study(samples, opts['ratios'], fps=corpus.fps)
        for row in table.itertuples(index=False):
            self.stdout.write(f'ratio {row.ratio:.2f}: accuracy {row.accuracy:.4f} (n={row.n})')

        accuracy = dict(zip(table['ratio'], table['accuracy']))
        report = {
            'split': opts['split'],
            'n': len(samples),
            'accuracy': accuracy,
            'max_drop': max(accuracy.values()) - min(accuracy.values()),
        }
        return [
            ('table', write_table(out_dir / 'retention.csv', table)),
            ('report', write_report(out_dir / 'report.json', report)),
        ]
