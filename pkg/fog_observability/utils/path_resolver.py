from pathlib import Path
import os

# /path/to/fog_observability/utils/path_resolver.py ->  /path/to/fog_observability
_PACKAGE_ROOT = Path(__file__).parent.parent.absolute()
_USER_DATA_DIR = Path.home() / ".odlc"
BASE_CFG_DIR = _PACKAGE_ROOT / 'cfg'
BASE_CFG_PATH = BASE_CFG_DIR / 'base' / 'base.yaml'
PROFILES_DIR = BASE_CFG_DIR / 'profiles'
SCENARIOS_DIR = BASE_CFG_DIR / 'scenarios'
REGIONS_DIR = BASE_CFG_DIR / 'regions'
SCHEDULES_DIR = BASE_CFG_DIR / 'schedules'


def resolve_cfg_path(path):
    return BASE_CFG_DIR / path


def resolve_data_path(path):
    data_dir = os.getenv('ODLC_DATA', str(_USER_DATA_DIR))
    return Path(data_dir) / path


def resolve_profile_path(name):
    path = Path(name)
    if path.suffix in ('.yaml', '.yml') and path.is_file():
        return path
    return PROFILES_DIR / f'{name}.yaml'


def resolve_scenario_path(name):
    path = Path(name)
    if path.is_file():
        return path
    return SCENARIOS_DIR / f'{name}.yaml'


def get_profile_names():
    return sorted([name.with_suffix('').name for name in PROFILES_DIR.glob('*.yaml')])


def get_scenario_names():
    return sorted([name.with_suffix('').name for name in SCENARIOS_DIR.glob('*.yaml')])


def resolve_region_path(name):
    path = Path(name)
    if path.is_file():
        return path
    return REGIONS_DIR / f'{name}.jsonl'


def resolve_schedule_path(name):
    path = Path(name)
    if path.is_file():
        return path
    return SCHEDULES_DIR / f'{name}.txt'
