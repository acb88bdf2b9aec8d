from dataclasses import asdict, dataclass, field, fields

from motionflow.exceptions import InvalidConfig

from .schedules import DEFAULT_DROPS, DEFAULT_FACTOR


@dataclass
class TrainConfig:
    steps: int = 5000
    batch_size: int = 32
    lr: float = 2e-4
    weight_decay: float = 0.01
    lr_drops: list = field(default_factory=lambda: list(DEFAULT_DROPS))
    lr_factor: float = DEFAULT_FACTOR
    seed: int = 0
    cfg_dropout: float = 0.1
    log_every: int = 100
    split: str = 'train'

    def __post_init__(self):
        if self.steps < 0:
            raise InvalidConfig(f'steps must be >= 0, got {self.steps}')
        if self.batch_size < 1:
            raise InvalidConfig(f'batch_size must be >= 1, got {self.batch_size}')
        if not self.lr > 0:
            raise InvalidConfig(f'lr must be positive, got {self.lr}')
        if not 0 <= self.cfg_dropout <= 1:
            raise InvalidConfig(f'cfg_dropout must lie in [0, 1], got {self.cfg_dropout}')
        if not 0 < self.lr_factor <= 1:
            raise InvalidConfig(f'lr_factor must lie in (0, 1], got {self.lr_factor}')
        drops = [float(d) for d in self.lr_drops]
        if drops != sorted(drops) or any(not 0 <= d <= 1 for d in drops):
            raise InvalidConfig(f'lr_drops must be increasing fractions in [0, 1], got {self.lr_drops}')
        self.lr_drops = drops

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidConfig(f'unknown training keys: {", ".join(sorted(unknown))}')
        return cls(**data)
