from django import forms

from motionflow.exceptions import InvalidConfig
from motionvae.network import VAEConfig
from runs.forms import ConfigForm, FloatListField
from tmdit.network import ARCHITECTURES, TMDiTConfig

from .config import TrainConfig


class TrainConfigForm(ConfigForm):
    """Optimizer and loop settings shared by both training stages"""
    section = 'train'

    steps = forms.IntegerField(min_value=0, initial=5000)
    batch_size = forms.IntegerField(min_value=1, initial=32)
    lr = forms.FloatField(min_value=0.0, initial=2e-4)
    weight_decay = forms.FloatField(min_value=0.0, initial=0.01)
    lr_drops = FloatListField(required=False, initial=[0.5, 0.75])
    lr_factor = forms.FloatField(min_value=0.0, max_value=1.0, initial=0.2)
    cfg_dropout = forms.FloatField(min_value=0.0, max_value=1.0, initial=0.1)
    log_every = forms.IntegerField(min_value=0, initial=100)
    split = forms.ChoiceField(choices=[(s, s) for s in ('train', 'val', 'test', 'all')], initial='train')

    def clean_lr(self):
        lr = self.cleaned_data['lr']
        if lr <= 0:
            raise forms.ValidationError('Learning rate must be positive.')
        return lr

    def train_config(self, seed):
        data = dict(self.config(), seed=seed)
        try:
            return TrainConfig(**data)
        except InvalidConfig as exc:
            raise InvalidConfig(f'invalid {self.section} section: {exc}') from exc


class VAEConfigForm(ConfigForm):
    section = 'vae'

    hidden = forms.IntegerField(min_value=1, initial=64)
    latent_dim = forms.IntegerField(min_value=1, initial=8)
    kl_weight = forms.FloatField(min_value=0.0, initial=1e-2)
    aug_weight = forms.FloatField(min_value=0.0, initial=0.5)
    topology = forms.BooleanField(required=False, initial=True)

    def vae_config(self):
        return VAEConfig(**self.config())


class TMDiTConfigForm(ConfigForm):
    """Velocity-model size; `desk: true` starts from the small preset"""
    section = 'tmdit'

    desk = forms.BooleanField(required=False, initial=True)
    n_blocks = forms.IntegerField(min_value=1, required=False)
    n_separate = forms.IntegerField(min_value=0, required=False)
    n_shared = forms.IntegerField(min_value=0, required=False)
    model_dim = forms.IntegerField(min_value=16, required=False)
    n_heads = forms.IntegerField(min_value=1, required=False)
    ffn_dim = forms.IntegerField(min_value=1, required=False)
    vocab_size = forms.IntegerField(min_value=2, required=False)
    max_words = forms.IntegerField(min_value=1, required=False)
    l_max = forms.IntegerField(min_value=1, required=False)
    latent_dim = forms.IntegerField(min_value=1, required=False)
    text_dim = forms.IntegerField(min_value=0, required=False)
    rope_base = forms.FloatField(min_value=1.0, required=False)
    text_rope = forms.NullBooleanField(required=False)
    arch = forms.ChoiceField(choices=[(a, a) for a in ARCHITECTURES], required=False)

    def tmdit_config(self, scales, **defaults):
        """Build the config; `defaults` fill keys the section leaves out (e.g. the VAE latent shape)."""
        data = dict(self.config())
        desk = data.pop('desk')
        values = dict(defaults)
        values.update({k: v for k, v in data.items() if v not in (None, '')})
        values['scales'] = list(scales)
        try:
            return TMDiTConfig.desk(**values) if desk else TMDiTConfig(**values)
        except InvalidConfig as exc:
            raise InvalidConfig(f'invalid {self.section} section: {exc}') from exc
