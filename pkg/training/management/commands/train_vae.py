from corpus.vocabulary import Vocabulary
from evaluation.reports import write_report, write_table
from motionflow.exceptions import InvalidArgument
from runs.command import RunCommand
from training.checkpoints import model_checkpoint, save_checkpoint
from training.forms import TrainConfigForm, VAEConfigForm
from training.vae import reconstruction_mse, train_vae


class Command(RunCommand):
    help = 'Trains the motion VAE on a corpus split'

    def run(self, config, out_dir, options):
        vae_config = VAEConfigForm(config.section('vae')).vae_config()
        train_config = TrainConfigForm(config.section('train_vae')).train_config(config.seed)
        corpus = self.load_corpus(config)
        records = corpus.split(train_config.split)
        if not records:
            raise InvalidArgument(f'split {train_config.split!r} of the corpus is empty')

        self.stdout.write(f'Training the VAE for {train_config.steps} steps on {len(records)} records...')
        model, history = train_vae(records, vae_config, train_config, device=self.device,
                                   progress=options['progress'])

        vocabulary = Vocabulary.from_list(corpus.header['vocabulary'])
        checkpoint = save_checkpoint(out_dir / 'vae.mfk', model_checkpoint('vae', model, vocabulary))
        metrics = write_table(out_dir / 'metrics.csv', history)
        recon = reconstruction_mse(model, records, self.device)
        report = write_report(out_dir / 'report.json', {
            'steps': train_config.steps,
            'split': train_config.split,
            'n_records': len(records),
            'recon_mse': recon,
            'final_loss': float(history['loss'].iloc[-1]) if len(history) else None,
        })

        self.stdout.write(f'Reconstruction MSE (normalized units): {recon:.5f}')
        return [('checkpoint', checkpoint), ('table', metrics), ('report', report)]
