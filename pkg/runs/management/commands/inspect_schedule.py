import pandas as pd

from evaluation.reports import write_table
from runs.command import RunCommand


class Command(RunCommand):
    help = 'Prints the stage table of a scale schedule'

    def add_command_arguments(self, parser):
        parser.add_argument('--length', type=int, default=16,
                            help='Full-scale latent length used for the stage lengths')

    def run(self, config, out_dir, options):
        sched = self.schedule(config)
        table = pd.DataFrame(sched.stage_table(options['length']))

        self.stdout.write(f'{"k":>3} {"r_k":>8} {"t_start":>8} {"t_end":>8} {"length":>7}')
        for row in table.itertuples(index=False):
            self.stdout.write(f'{row.k:>3} {row.scale:>8.4f} {row.t_start:>8.4f} {row.t_end:>8.4f} {row.length:>7}')
        return [('table', write_table(out_dir / 'stages.csv', table))]
