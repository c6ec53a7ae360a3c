import os
from functools import lru_cache
from pathlib import Path

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from fog_observability.core.errors import ConfigError, WeightRangeError, WeightSumError
from fog_observability.core.model import validate_weights
from fog_observability.utils import path_resolver

ENV_PREFIX = 'ODLC_'
ENV_SEPARATOR = '__'
YAML_SUFFIXES = ('.yaml', '.yml')


@lru_cache(maxsize=128)
def _load_cfg(cfg_file):
    cfg = OmegaConf.load(cfg_file)
    base = cfg.get('base')
    if not base:
        return cfg
    del cfg['base']
    # if extension exists make a recursive call for each extension
    config = OmegaConf.create()
    for f in base:
        cfg_path = path_resolver.resolve_cfg_path(f)
        config = OmegaConf.merge(config, _load_cfg(cfg_path))
    # override with cfg fields
    config = OmegaConf.merge(config, cfg)
    return config


def parse_key_value_lines(lines, source='<config>'):
    """`key = value` lines to an OmegaConf dot-list. Values are read as YAML scalars or flow lists."""
    dotlist = []
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise ConfigError(f'{source}:{line_no}: expected "key = value", got {line!r}')
        key, value = (part.strip() for part in line.split('=', 1))
        if not key:
            raise ConfigError(f'{source}:{line_no}: empty key')
        dotlist.append(f'{key}={value}')
    return dotlist


def load_mapping(path):
    """Loads a YAML file (with `base:` inheritance) or a `key = value` file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'Config file is missing: {path}', path=str(path))
    try:
        if path.suffix in YAML_SUFFIXES:
            return _load_cfg(path).copy()
        with open(path, 'r', encoding='utf-8') as fin:
            return OmegaConf.from_dotlist(parse_key_value_lines(fin, source=str(path)))
    except OmegaConfBaseException as err:
        raise ConfigError(f'Cannot read {path}: {err}', path=str(path)) from err


def env_overrides(environ=None):
    """`ODLC_METRIC__INTERVAL_S=10` -> `metric.interval_s=10`. Variables without a section separator are ignored."""
    environ = os.environ if environ is None else environ
    dotlist = []
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX) or ENV_SEPARATOR not in name:
            continue
        key = '.'.join(part.lower() for part in name[len(ENV_PREFIX):].split(ENV_SEPARATOR))
        dotlist.append(f'{key}={value}')
    return dotlist


def _merge(cfg, other, source):
    try:
        return OmegaConf.merge(cfg, other)
    except OmegaConfBaseException as err:
        raise ConfigError(f'Invalid configuration from {source}: {err}', source=source) from err


def load_config(config_path=None, overrides=None, environ=None):
    """Builds the effective configuration: flags > environment > config file > defaults.

    Args:
        config_path: optional YAML or `key = value` file.
        overrides: dot-list strings or a mapping coming from command line flags.
        environ: environment mapping, `os.environ` when None.
    """
    cfg = _load_cfg(path_resolver.BASE_CFG_PATH).copy()
    OmegaConf.set_struct(cfg, True)
    if config_path is not None:
        cfg = _merge(cfg, load_mapping(config_path), str(config_path))
    env = env_overrides(environ)
    if env:
        cfg = _merge(cfg, _from_dotlist(env, 'environment'), 'environment')
    if overrides:
        if isinstance(overrides, dict):
            overrides = [f'{key}={value}' for key, value in overrides.items() if value is not None]
        cfg = _merge(cfg, _from_dotlist(overrides, 'flags'), 'flags')
    OmegaConf.set_struct(cfg, True)
    return cfg


def _from_dotlist(dotlist, source):
    try:
        return OmegaConf.from_dotlist(list(dotlist))
    except OmegaConfBaseException as err:
        raise ConfigError(f'Invalid configuration from {source}: {err}', source=source) from err


def load_weight_profile(profile):
    """A profile name, a YAML path, or an inline `w_metric,w_log,w_trace` triple."""
    profile = str(profile)
    if ',' in profile:
        try:
            values = [float(item) for item in profile.split(',')]
        except ValueError:
            raise ConfigError(f'Bad inline weight profile {profile!r}')
        if len(values) != 3:
            raise ConfigError(f'Inline weight profile needs 3 values, got {profile!r}')
        return validate_weights(*values, name='inline')
    path = path_resolver.resolve_profile_path(profile)
    if not path.is_file():
        names = ', '.join(path_resolver.get_profile_names())
        raise ConfigError(f'Unknown weight profile {profile!r}. Available: {names}', profile=profile)
    weights = load_mapping(path).get('weights')
    if weights is None:
        raise ConfigError(f'{path} has no weights section')
    try:
        return validate_weights(weights.w_metric, weights.w_log, weights.w_trace,
                                name=weights.get('name', path.stem))
    except (WeightSumError, WeightRangeError):
        raise
    except OmegaConfBaseException as err:
        raise ConfigError(f'Incomplete weight profile {path}: {err}') from err


def to_container(cfg):
    return OmegaConf.to_container(cfg, resolve=True)
