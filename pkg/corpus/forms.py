from django import forms

from runs.forms import ConfigForm

from .builder import CorpusSpec
from .kinematics import MIN_FRAMES
from .programs import PROGRAM_NAMES


class CorpusSpecForm(ConfigForm):
    """How many records of which programs, and how long"""
    section = 'corpus'

    n_per_program = forms.IntegerField(min_value=1, initial=200)
    min_frames = forms.IntegerField(min_value=MIN_FRAMES, initial=64)
    max_frames = forms.IntegerField(min_value=MIN_FRAMES, initial=96)
    programs = forms.MultipleChoiceField(
        choices=[(name, name) for name in PROGRAM_NAMES],
        required=False,
        initial=list(PROGRAM_NAMES),
    )

    def clean(self):
        cleaned_data = super().clean()
        low, high = cleaned_data.get('min_frames'), cleaned_data.get('max_frames')
        if low is not None and high is not None and low > high:
            raise forms.ValidationError('min_frames cannot exceed max_frames.')
        if not cleaned_data.get('programs'):
            cleaned_data['programs'] = list(PROGRAM_NAMES)
        return cleaned_data

    def corpus_spec(self, seed):
        return CorpusSpec(seed=seed, **self.config())
