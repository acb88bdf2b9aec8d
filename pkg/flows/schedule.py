"""Scale schedules: the stage scales r_1..r_K and the time partition t_0..t_K."""
from dataclasses import dataclass
from fractions import Fraction
import math

from motionflow.exceptions import InvalidArgument, InvalidSchedule

from .resample import resampled_length


@dataclass(frozen=True)
class ScaleSchedule:
    scales: tuple
    times: tuple

    def __post_init__(self):
        object.__setattr__(self, 'scales', tuple(float(r) for r in self.scales))
        object.__setattr__(self, 'times', tuple(float(t) for t in self.times))

    @property
    def K(self):
        return len(self.scales)

    @property
    def stages(self):
        """Stage indices, 1-based."""
        return range(1, self.K + 1)

    def check_stage(self, k):
        if isinstance(k, bool) or int(k) != k or not 1 <= k <= self.K:
            raise InvalidArgument(f'stage must be in [1, {self.K}], got {k!r}')
        return int(k)

    def scale(self, k):
        return self.scales[self.check_stage(k) - 1]

    def interval(self, k):
        """(t_{k-1}, t_k) for stage k."""
        k = self.check_stage(k)
        return self.times[k - 1], self.times[k]

    def tau(self, t, k):
        start, end = self.interval(k)
        return (t - start) / (end - start)

    def time_at(self, tau, k):
        start, end = self.interval(k)
        return start + tau * (end - start)

    def stage_length(self, length, k):
        return resampled_length(length, self.scale(k))

    def stage_lengths(self, length):
        return [self.stage_length(length, k) for k in self.stages]

    def stage_table(self, length=None):
        """One row per stage: k, r_k, t_{k-1}, t_k and (optionally) the latent length."""
        rows = []
        for k in self.stages:
            start, end = self.interval(k)
            row = {'k': k, 'scale': self.scale(k), 't_start': start, 't_end': end}
            if length is not None:
                row['length'] = self.stage_length(length, k)
            rows.append(row)
        return rows


def parse_real(value):
    """Accept numbers or fraction strings such as "1/3"."""
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError) as exc:
            raise InvalidSchedule(f'not a real number: {value!r}') from exc
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidSchedule(f'not a real number: {value!r}') from exc


def make_schedule(scales, times=None):
    """Validate scales (and optional times) into a ScaleSchedule.

    Without `times`, the partition is uniform: t_k = k/K.
    """
    scales = [parse_real(r) for r in (scales or [])]
    if not scales:
        raise InvalidSchedule('a schedule needs at least one scale')
    if any(not math.isfinite(r) or r <= 0 for r in scales):
        raise InvalidSchedule(f'scales must be positive, got {scales}')
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise InvalidSchedule(f'scales must be strictly increasing, got {scales}')
    if scales[-1] > 1:
        raise InvalidSchedule(f'the last scale must be <= 1, got {scales[-1]}')

    K = len(scales)
    if times is None:
        times = [k / K for k in range(K + 1)]
    else:
        times = [parse_real(t) for t in times]
        if len(times) != K + 1:
            raise InvalidSchedule(f'{K} scales need {K + 1} time points, got {len(times)}')
        if times[0] != 0 or times[-1] != 1:
            raise InvalidSchedule(f'time points must run from 0 to 1, got {times}')
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidSchedule(f'time points must be strictly increasing, got {times}')

    return ScaleSchedule(scales=tuple(scales), times=tuple(times))


# Scale settings compared in the scale ablation; the three-stage one is the default.
PRESETS = {
    'single_0.4': ['2/5'],
    'single_0.6': ['3/5'],
    'single_0.8': ['4/5'],
    'single_1': ['1'],
    'two_stage': ['1/2', '1'],
    'three_stage': ['1/3', '2/3', '1'],
    'four_stage': ['1/4', '1/2', '3/4', '1'],
}

DEFAULT_PRESET = 'three_stage'


def preset_schedule(name):
    try:
        scales = PRESETS[name]
    except KeyError:
        raise InvalidSchedule(
            f'unknown schedule preset {name!r}; choose from {", ".join(sorted(PRESETS))}'
        ) from None
    return make_schedule(scales)
