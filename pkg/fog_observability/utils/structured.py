import enum
import json
import math
import os
import tempfile
from pathlib import Path


def dumps_line(obj):
    """One compact JSON object, no trailing newline."""
    return json.dumps(obj, separators=(',', ':'), ensure_ascii=False, allow_nan=True)


def loads_line(line):
    if isinstance(line, (bytes, bytearray)):
        line = line.decode('utf-8')
    return json.loads(line)


def to_plain(value):
    """Makes namedtuples, dataclasses and enums JSON friendly."""
    if hasattr(value, 'to_dict'):
        return to_plain(value.to_dict())
    if hasattr(value, '_asdict'):
        return {key: to_plain(item) for key, item in value._asdict().items()}
    if isinstance(value, dict):
        return {str(key): to_plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        return [to_plain(item) for item in value]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, float) and math.isinf(value):
        return str(value)
    return value


def write_plot_data(path, header, rows):
    """Columnar plot data: tab separated, one header row."""
    with open(path, 'w', encoding='utf-8') as fout:
        fout.write('\t'.join(header) + '\n')
        for row in rows:
            fout.write('\t'.join(str(item) for item in row) + '\n')


def write_json_atomic(path, obj):
    """Writes to a temporary sibling, fsyncs, then renames over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=path.name, suffix='.tmp', dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as fout:
            json.dump(obj, fout, sort_keys=True)
            fout.flush()
            os.fsync(fout.fileno())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def read_json(path, default=None):
    path = Path(path)
    if not path.is_file():
        return default
    with open(path, 'r', encoding='utf-8') as fin:
        return json.load(fin)


def append_lines(path, objects):
    """Appends JSON lines, creating the parent directory on first use."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'a', encoding='utf-8') as fout:
        for obj in objects:
            fout.write(dumps_line(to_plain(obj)) + '\n')


def read_lines(path):
    with open(path, 'r', encoding='utf-8') as fin:
        return [loads_line(line) for line in fin if line.strip()]
