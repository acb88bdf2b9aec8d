from corpus.vocabulary import Vocabulary
from evaluation.reports import write_table
from motionflow.exceptions import InvalidArgument
from runs.command import RunCommand, require_file
from training.checkpoints import load_vae, model_checkpoint, save_checkpoint
from training.flow import train_tmdit
from training.forms import TMDiTConfigForm, TrainConfigForm


class Command(RunCommand):
    help = 'Trains the velocity model on latents of a frozen VAE'

    def run(self, config, out_dir, options):
        sched = self.schedule(config)
        train_config = TrainConfigForm(config.section('train_tmdit')).train_config(config.seed)
        corpus = self.load_corpus(config)
        vae, _ = load_vae(require_file(config.path('vae'), 'paths.vae'), self.device)
        tmdit_config = TMDiTConfigForm(config.section('tmdit')).tmdit_config(
            sched.scales,
            latent_joints=vae.config.latent_joints,
            latent_dim=vae.config.latent_dim,
        )
        records = corpus.split(train_config.split)
        if not records:
            raise InvalidArgument(f'split {train_config.split!r} of the corpus is empty')
        vocabulary = Vocabulary.from_list(corpus.header['vocabulary'])

        self.stdout.write(
            f'Training the velocity model ({tmdit_config.n_blocks} blocks, width {tmdit_config.model_dim}) '
            f'for {train_config.steps} steps over {sched.K} stages...'
        )
        model, history, scaler = train_tmdit(records, vae, tmdit_config, sched, train_config, vocabulary,
                                             device=self.device, progress=options['progress'])

        extras = dict(scaler.to_extras(), schedule={'scales': list(sched.scales), 'times': list(sched.times)})
        checkpoint = save_checkpoint(out_dir / 'tmdit.mfk',
                                     model_checkpoint('tmdit', model, vocabulary, extras))
        metrics = write_table(out_dir / 'metrics.csv', history)
        if len(history):
            self.stdout.write(f'Final flow loss: {history["loss"].iloc[-1]:.5f}')
        return [('checkpoint', checkpoint), ('table', metrics)]
