"""Tails application log files from persisted offsets."""
import glob
import os
from collections import namedtuple
from dataclasses import replace

from fog_observability.core.errors import FileRotated, InvalidRecord
from fog_observability.core.records import LogEntry, LogLevel
from fog_observability.utils.logger import get_logger

HarvestedLine = namedtuple('HarvestedLine', ['entry', 'path', 'end_offset', 'inode', 'raw_size'])


def drop_message_fields(message, keys):
    """Removes the whole `key=value` token of every key in `keys`; other text is kept as is."""
    kept = [token for token in message.split(' ') if token.partition('=')[0] not in keys or '=' not in token]
    return ' '.join(kept).strip()


def parse_log_line(text, device_id, source_file, fallback_ms):
    """`<ts_ms> <LEVEL> message`; a missing timestamp or level falls back to read time and INFO."""
    parts = text.split(' ', 2)
    timestamp_ms = fallback_ms
    if parts and parts[0].isdigit():
        timestamp_ms = int(parts[0])
        parts = parts[1:]
    else:
        parts = text.split(' ', 1)
    level = LogLevel.INFO
    if parts and LogLevel.is_level(parts[0]):
        level = LogLevel.parse(parts[0])
        message = ' '.join(parts[1:])
    else:
        message = ' '.join(parts)
    return LogEntry(source_timestamp=timestamp_ms, device_id=device_id, source_file=source_file,
                    level=level, message=message.strip())


class LogHarvester(object):
    """Harvests only the configured files (glob patterns allowed); nothing is auto-discovered."""

    def __init__(self, paths, device_id, clock, offsets=None, drop_fields=()):
        self.patterns = list(paths)
        self.drop_fields = frozenset(drop_fields)
        self.device_id = device_id
        self.clock = clock
        # path -> {'offset': int, 'inode': int}
        self.offsets = {path: dict(state) for path, state in (offsets or {}).items()}
        self.rotations = 0
        self.truncations = 0
        self.skipped_lines = 0
        self._logger = get_logger().getChild('logs')

    def resolve_paths(self):
        paths = []
        for pattern in self.patterns:
            matches = sorted(glob.glob(pattern)) if glob.has_magic(pattern) else [pattern]
            paths.extend(match for match in matches if match not in paths)
        return paths

    def _start_offset(self, path, stat):
        state = self.offsets.get(path)
        if state is None:
            return 0
        if state.get('inode') is not None and state['inode'] != stat.st_ino:
            self.rotations += 1
            err = FileRotated(f'{path} was rotated (inode {state["inode"]} -> {stat.st_ino})', path=path)
            self._logger.warning(f'{err.message}, reading it from the start')
            return 0
        if stat.st_size < state['offset']:
            self.truncations += 1
            self._logger.warning(f'{path} was truncated, reading it from the start')
            return 0
        return state['offset']

    def harvest_file(self, path):
        try:
            stat = os.stat(path)
        except OSError:
            self._logger.debug(f'Log file {path} does not exist yet')
            return []
        offset = self._start_offset(path, stat)
        if offset >= stat.st_size:
            if self.offsets.get(path, {}).get('offset') != offset:
                self.commit(path, offset, stat.st_ino)
            return []
        with open(path, 'rb') as fin:
            fin.seek(offset)
            data = fin.read()
        harvested = []
        now_ms = self.clock.now_ms()
        position = offset
        for raw in data.splitlines(keepends=True):
            if not raw.endswith(b'\n'):
                # partial line, picked up once the writer finishes it
                break
            position += len(raw)
            text = raw.rstrip(b'\r\n').decode('utf-8', errors='replace')
            try:
                entry = parse_log_line(text, self.device_id, path, now_ms)
                if self.drop_fields:
                    entry = replace(entry, message=drop_message_fields(entry.message, self.drop_fields))
            except InvalidRecord:
                self.skipped_lines += 1
                continue
            harvested.append(HarvestedLine(entry, path, position, stat.st_ino, len(raw)))
        if not harvested and position != offset:
            self.commit(path, position, stat.st_ino)
        return harvested

    def harvest(self):
        lines = []
        for path in self.resolve_paths():
            lines.extend(self.harvest_file(path))
        return lines

    def commit(self, path, offset, inode):
        """Called once the lines up to `offset` are staged."""
        self.offsets[path] = {'offset': int(offset), 'inode': int(inode)}


def harvest_logs(harvester):
    return harvester.harvest()
