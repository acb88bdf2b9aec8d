"""Base class for the pipeline's management commands."""
import logging
from pathlib import Path

import torch
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from corpus.container import read_corpus
from motionflow.exceptions import InvalidConfig, MotionFlowError, TrainingDiverged

from .config import load_run_config
from .forms import ScheduleForm
from .models import Run

logger = logging.getLogger(__name__)

EXIT_CODES = {
    'ok': 0,
    'unexpected': 1,
    'usage': 2,
    'config': 3,
    'missing': 4,
    'domain': 5,
    'diverged': 6,
}


def exit_code_for(exc):
    if isinstance(exc, InvalidConfig):
        return EXIT_CODES['config']
    if isinstance(exc, FileNotFoundError):
        return EXIT_CODES['missing']
    if isinstance(exc, TrainingDiverged):
        return EXIT_CODES['diverged']
    if isinstance(exc, MotionFlowError):
        return EXIT_CODES['domain']
    return EXIT_CODES['unexpected']


def require_file(path, what):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f'{what} not found: {path}')
    return path


class RunCommand(BaseCommand):
    """A command driven by a run config.

    Subclasses implement `run(config, out_dir, options)` and return the
    artifacts they wrote as (kind, path) pairs.
    """
    command_name = None

    def add_arguments(self, parser):
        parser.add_argument('--config', type=Path, help='YAML run config')
        parser.add_argument('--seed', type=int, help='Master seed; overrides the config seed')
        parser.add_argument(
            '--set',
            dest='overrides',
            action='append',
            default=[],
            metavar='KEY=VALUE',
            help='Dotted-key config override; repeatable'
        )
        parser.add_argument('--out', type=Path, help='Output directory')
        parser.add_argument('--progress', action='store_true', help='Show progress bars')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    @property
    def name(self):
        return self.command_name or self.__module__.rsplit('.', 1)[-1]

    def output_dir(self, options):
        return Path(options['out'] or settings.MOTIONFLOW_OUTPUT_ROOT / self.name)

    @property
    def device(self):
        return settings.MOTIONFLOW_DEVICE

    def handle(self, *args, **options):
        if settings.MOTIONFLOW_NUM_THREADS:
            torch.set_num_threads(settings.MOTIONFLOW_NUM_THREADS)

        run = None
        try:
            if options['config'] is not None:
                require_file(options['config'], 'config file')
            config = load_run_config(options['config'], options['overrides'], options['seed'])
            out_dir = self.output_dir(options)
            run = self.start_run(config, out_dir)
            written = [('config', path) for path in config.copy_to(out_dir)]
            written += self.run(config, out_dir, options) or []
        except CommandError as exc:
            self.finish_run(run, exc.returncode, str(exc))
            raise
        except Exception as exc:
            code = exit_code_for(exc)
            if code == EXIT_CODES['unexpected']:
                logger.exception('%s failed', self.name)
            else:
                logger.error('%s failed: %s', self.name, exc)
            self.finish_run(run, code, str(exc))
            raise CommandError(str(exc), returncode=code) from exc

        self.finish_run(run, EXIT_CODES['ok'], artifacts=written)
        self.stdout.write(self.style.SUCCESS(f'{self.name} finished; outputs in {out_dir}'))

    def run(self, config, out_dir, options):
        raise NotImplementedError

    def schedule(self, config):
        return ScheduleForm(config.section('schedule')).config()['schedule']

    def load_corpus(self, config, key='corpus'):
        return read_corpus(require_file(config.path(key), f'paths.{key}'))

    def start_run(self, config, out_dir):
        if not settings.MOTIONFLOW_RUN_LEDGER:
            return None
        try:
            return Run.objects.create(command=self.name, seed=config.seed, config=config.data,
                                      output_dir=str(out_dir))
        except DatabaseError as exc:
            logger.warning('Run ledger unavailable (%s); run `manage.py migrate` to enable it', exc)
            return None

    def finish_run(self, run, exit_code, error='', artifacts=()):
        if run is None:
            return
        try:
            for kind, path in artifacts:
                run.add_artifact(kind, path)
            run.finish(exit_code, error)
        except DatabaseError as exc:
            logger.warning('Could not update run %s: %s', run.pk, exc)
