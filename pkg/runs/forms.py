from django import forms

from flows.hierarchy import SOLVERS
from flows.schedule import DEFAULT_PRESET, PRESETS, make_schedule, parse_real, preset_schedule
from motionflow.exceptions import InvalidConfig, InvalidSchedule


class FloatListField(forms.Field):
    """A list of reals; accepts YAML lists, "1/3"-style fractions and comma strings."""

    def to_python(self, value):
        if value in self.empty_values:
            return []
        if isinstance(value, str):
            value = value.replace(',', ' ').split()
        try:
            return [parse_real(v) for v in value]
        except (TypeError, InvalidSchedule) as exc:
            raise forms.ValidationError(f'Enter a list of numbers ({exc}).') from exc


class IntListField(forms.Field):

    def to_python(self, value):
        if value in self.empty_values:
            return []
        if isinstance(value, str):
            value = value.replace(',', ' ').split()
        try:
            return [int(v) for v in value]
        except (TypeError, ValueError) as exc:
            raise forms.ValidationError('Enter a list of integers.') from exc


class ConfigForm(forms.Form):
    """Validates one section of a run config.

    Missing keys fall back to each field's `initial`; unknown keys are errors.
    """
    section = None

    def __init__(self, data=None, **kwargs):
        data = dict(data or {})
        self.unknown = sorted(set(data) - set(self.base_fields))
        for name, field in self.base_fields.items():
            if name not in data and field.initial is not None:
                data[name] = field.initial
        super().__init__(data, **kwargs)

    def clean(self):
        cleaned_data = super().clean()
        if self.unknown:
            raise forms.ValidationError(f'Unknown keys: {", ".join(self.unknown)}.')
        return cleaned_data

    def config(self):
        """Cleaned data, or InvalidConfig listing every error."""
        if not self.is_valid():
            errors = self.errors.get_json_data()
            details = '; '.join(
                f'{field}: {" ".join(e["message"] for e in messages)}' for field, messages in errors.items()
            )
            raise InvalidConfig(f'invalid {self.section or "config"} section: {details}', errors=errors)
        return self.cleaned_data


class ScheduleForm(ConfigForm):
    """Scale schedule: a preset name, or explicit scales with optional times."""
    section = 'schedule'

    preset = forms.ChoiceField(choices=[(name, name) for name in PRESETS], required=False)
    scales = FloatListField(required=False)
    times = FloatListField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        preset = cleaned_data.get('preset')
        scales = cleaned_data.get('scales')
        times = cleaned_data.get('times') or None

        if preset and scales:
            raise forms.ValidationError('Give either a preset or explicit scales, not both.')
        try:
            if scales:
                cleaned_data['schedule'] = make_schedule(scales, times)
            else:
                if times:
                    raise forms.ValidationError('Times need explicit scales.')
                cleaned_data['schedule'] = preset_schedule(preset or DEFAULT_PRESET)
        except InvalidSchedule as exc:
            raise forms.ValidationError(str(exc)) from exc
        return cleaned_data


class SampleForm(ConfigForm):
    """Sampling options for the `sample` command.

    With `from_split`, prompts and labels come from the first `n_samples`
    records of each program in that corpus split; otherwise every prompt
    (or the null condition, when none is given) is sampled `n_samples` times.
    """
    section = 'sample'

    prompt = forms.CharField(required=False, strip=True, empty_value='')
    prompt_file = forms.CharField(required=False)
    n_samples = forms.IntegerField(min_value=1, initial=4)
    frames = forms.IntegerField(min_value=4, initial=64)
    steps = forms.IntegerField(min_value=1, initial=10)
    solver = forms.ChoiceField(choices=[(s, s) for s in SOLVERS], initial='euler')
    guidance = forms.FloatField(min_value=0.0, initial=2.5)
    batch_size = forms.IntegerField(min_value=1, initial=32)
    from_split = forms.ChoiceField(
        choices=[('', 'none')] + [(s, s) for s in ('train', 'val', 'test')],
        required=False,
    )

    def clean(self):
        cleaned_data = super().clean()
        if cleaned_data.get('prompt') and cleaned_data.get('prompt_file'):
            raise forms.ValidationError('Give either a prompt or a prompt file, not both.')
        if cleaned_data.get('from_split') and (cleaned_data.get('prompt') or cleaned_data.get('prompt_file')):
            raise forms.ValidationError('Prompts drawn from a split exclude explicit prompts.')
        return cleaned_data
