import logging

import torch

from evaluation.diagnostics import noise_consistency_diagnostic
from evaluation.forms import DiagnoseForm
from evaluation.reports import write_report
from motionvae.network import DOWNSAMPLE
from runs.command import RunCommand, require_file
from tmdit.network import TMDiT
from training.checkpoints import load_tmdit
from training.forms import TMDiTConfigForm

logger = logging.getLogger(__name__)


class Command(RunCommand):
    help = 'Compares consistent and fresh-noise renoising between sampling stages'

    def run(self, config, out_dir, options):
        opts = DiagnoseForm(config.section('diagnose')).config()
        sched = self.schedule(config)

        checkpoint_path = config.optional_path('tmdit')
        if checkpoint_path is not None:
            model, _ = load_tmdit(require_file(checkpoint_path, 'paths.tmdit'), self.device)
        else:
            logger.warning('No paths.tmdit given; diagnosing with a freshly initialized velocity model')
            torch.manual_seed(config.seed)
            model = TMDiT(TMDiTConfigForm(config.section('tmdit')).tmdit_config(sched.scales)).eval()

        shape = (1, max(1, opts['frames'] // DOWNSAMPLE), model.config.latent_joints, model.config.latent_dim)
        with torch.no_grad():
            report = noise_consistency_diagnostic(
                model.velocity_fn(sched), sched, opts['seeds'], opts['steps'], shape,
                time_dim=1, dtype=torch.float32,
            )
        path = write_report(out_dir / 'report.json', report.to_dict())

        self.stdout.write(f'Consistent rule: gap {report.consistent_transition_gap:.3g}, '
                          f'{report.consistent_fresh_draws} draws after init')
        self.stdout.write(f'Fresh-noise rule: gap {report.naive_transition_gap:.3g}, '
                          f'{report.naive_fresh_draws} draws after init')
        if report.consistent_fresh_draws or report.consistent_transition_gap:
            self.stdout.write(self.style.WARNING('The consistent rule was not reproducible'))
        return [('report', path)]
