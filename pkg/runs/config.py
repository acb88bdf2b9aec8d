"""
Run configs.

A run config is a YAML file with a mandatory top-level `seed`, a `paths`
section naming input files and one section per concern (`corpus`,
`schedule`, `vae`, `tmdit`, `train_vae`, `train_tmdit`, `sample`, `eval`,
`retention`, `diagnose`). `--set key=value` overrides are dotted keys.
Each section is validated by its form when a command reads it.
"""
import logging
from pathlib import Path
import shutil

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException
import yaml

from motionflow.exceptions import InvalidConfig

logger = logging.getLogger(__name__)

CONFIG_COPY = 'config.yaml'
RESOLVED_COPY = 'resolved.yaml'


class RunConfig:
    """A loaded, override-merged run config"""

    def __init__(self, data, source=None):
        self.data = data
        self.source = Path(source) if source is not None else None
        if self.data.get('seed') is None:
            raise InvalidConfig('the run config needs a top-level seed')
        try:
            self.seed = int(self.data['seed'])
        except (TypeError, ValueError):
            raise InvalidConfig(f'seed must be an integer, got {self.data["seed"]!r}') from None

    def section(self, name):
        value = self.data.get(name) or {}
        if not isinstance(value, dict):
            raise InvalidConfig(f'section {name!r} must be a mapping')
        return value

    def path(self, key):
        """`paths.<key>` as a Path; InvalidConfig when the command needs it and it is absent."""
        value = self.section('paths').get(key)
        if not value:
            raise InvalidConfig(f'paths.{key} is required for this command')
        return Path(value)

    def optional_path(self, key):
        value = self.section('paths').get(key)
        return Path(value) if value else None

    def copy_to(self, out_dir):
        """Copy the config file verbatim, plus the merged result, into `out_dir`."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        target = out_dir / CONFIG_COPY
        if self.source is not None and not (target.exists() and target.samefile(self.source)):
            written.append(Path(shutil.copyfile(self.source, target)))
        resolved = out_dir / RESOLVED_COPY
        resolved.write_text(OmegaConf.to_yaml(self.data, sort_keys=True), encoding='utf-8')
        written.append(resolved)
        return written


def load_run_config(path=None, overrides=(), seed=None):
    """Load `path`, apply dotted `overrides` and an optional seed override.

    Without a path the config is built from the overrides alone.
    """
    try:
        base = OmegaConf.load(path) if path is not None else OmegaConf.create({})
    except (OmegaConfBaseException, yaml.YAMLError) as exc:
        raise InvalidConfig(f'cannot parse {path}: {exc}') from exc

    for item in overrides:
        if '=' not in item:
            raise InvalidConfig(f'override {item!r} is not of the form key=value')
    try:
        merged = OmegaConf.merge(base, OmegaConf.from_dotlist(list(overrides)))
        data = OmegaConf.to_container(merged, resolve=True) or {}
    except OmegaConfBaseException as exc:
        raise InvalidConfig(f'cannot apply overrides: {exc}') from exc
    if not isinstance(data, dict):
        raise InvalidConfig(f'{path} must hold a mapping at the top level')
    if seed is not None:
        data['seed'] = seed
    logger.debug('Loaded run config from %s with %d overrides', path, len(overrides))
    return RunConfig(data, source=path)
