from django import forms

from runs.forms import ConfigForm, FloatListField, IntListField

from .metrics import DIVERSITY_PAIRS
from .retention import DEFAULT_RATIOS

SPLIT_CHOICES = [(s, s) for s in ('train', 'val', 'test', 'all')]


class EvalForm(ConfigForm):
    """Metrics of generated motions (or a split's two halves) against a split"""
    section = 'eval'

    split = forms.ChoiceField(choices=SPLIT_CHOICES, initial='test')
    samples = forms.CharField(required=False)
    n_pairs = forms.IntegerField(min_value=1, initial=DIVERSITY_PAIRS)


class RetentionForm(ConfigForm):
    section = 'retention'

    split = forms.ChoiceField(choices=SPLIT_CHOICES, initial='test')
    ratios = FloatListField(required=False, initial=list(DEFAULT_RATIOS))

    def clean_ratios(self):
        ratios = self.cleaned_data['ratios'] or list(DEFAULT_RATIOS)
        if any(not 0 < r <= 1 for r in ratios):
            raise forms.ValidationError('Ratios must lie in (0, 1].')
        return ratios


class DiagnoseForm(ConfigForm):
    section = 'diagnose'

    seeds = IntListField(required=False, initial=[0, 1, 2, 3])
    steps = forms.IntegerField(min_value=1, initial=10)
    frames = forms.IntegerField(min_value=4, initial=64)

    def clean_seeds(self):
        seeds = self.cleaned_data['seeds']
        if not seeds:
            raise forms.ValidationError('Give at least one seed.')
        return seeds
