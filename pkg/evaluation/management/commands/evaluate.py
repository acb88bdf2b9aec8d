import pandas as pd

from corpus.container import read_corpus
from evaluation.forms import EvalForm
from evaluation.metrics import diversity, frechet_pose_distance
from evaluation.reports import write_report, write_table
from evaluation.rules import semantic_accuracy
from motionflow.exceptions import InvalidArgument
from runs.command import RunCommand, require_file


def program_distances(generated, reference):
    """Fréchet distance from each generated label group to each reference label group."""
    rows = []
    generated_groups, reference_groups = _by_program(generated), _by_program(reference)
    for name, motions in generated_groups.items():
        for other, reference_motions in reference_groups.items():
            if len(motions) < 2 or len(reference_motions) < 2:
                continue
            rows.append({
                'generated': name,
                'reference': other,
                'matched': name == other,
                'distance': frechet_pose_distance(motions, reference_motions),
            })
    return pd.DataFrame(rows, columns=['generated', 'reference', 'matched', 'distance'])


def _by_program(records):
    groups = {}
    for record in records:
        if record.program is not None:
            groups.setdefault(record.program, []).append(record.motion)
    return dict(sorted(groups.items()))


class Command(RunCommand):
    help = 'Scores generated motions (or two halves of a split) against a corpus split'

    def run(self, config, out_dir, options):
        opts = EvalForm(config.section('eval')).config()
        corpus = self.load_corpus(config)
        reference = corpus.split(opts['split'])
        if opts['samples']:
            generated = read_corpus(require_file(opts['samples'], 'eval.samples')).records
            mode = 'samples'
        else:
            generated, reference = reference[0::2], reference[1::2]
            mode = 'split_halves'
        if len(generated) < 2 or len(reference) < 2:
            raise InvalidArgument('evaluation needs at least two generated and two reference motions')

        labeled = [(r.motion, r.label) for r in generated if r.program is not None]
        report = {
            'mode': mode,
            'split': opts['split'],
            'n_generated': len(generated),
            'n_reference': len(reference),
            'frechet_pose_distance': frechet_pose_distance([r.motion for r in generated],
                                                           [r.motion for r in reference]),
            'diversity': diversity([r.motion for r in generated], opts['n_pairs'], config.seed),
            'reference_diversity': diversity([r.motion for r in reference], opts['n_pairs'], config.seed),
            'semantic_accuracy': semantic_accuracy(labeled, corpus.fps) if labeled else None,
        }
        written = [('report', write_report(out_dir / 'report.json', report))]
        distances = program_distances(generated, reference)
        if len(distances):
            written.append(('table', write_table(out_dir / 'frechet_by_program.csv', distances)))

        self.stdout.write(f'Fréchet pose distance: {report["frechet_pose_distance"]:.4f}')
        self.stdout.write(f'Diversity: {report["diversity"]:.4f} (reference {report["reference_diversity"]:.4f})')
        if report['semantic_accuracy'] is not None:
            self.stdout.write(f'Semantic accuracy: {report["semantic_accuracy"]:.4f}')
        return written
