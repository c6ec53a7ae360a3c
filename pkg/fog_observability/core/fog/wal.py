"""Write-ahead ingest log of the fog node.

Every accepted record is appended and synced before its batch is acknowledged. On start the log
is replayed into the stores; after a tiering cycle it is rewritten with what the stores still hold,
headed by the dedup marks of every stream.
"""
import os
import threading
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path

from fog_observability.core.model import InstrumentationDomain
from fog_observability.utils.logger import get_logger
from fog_observability.utils.structured import dumps_line, loads_line

logger = get_logger().getChild('wal')

WalEntry = namedtuple('WalEntry', ['domain', 'line', 'batch_seq'])


@dataclass
class IngestLog:
    fpath: Path
    fsync: bool = True
    entries: int = 0
    fd: int = -1
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        self.fpath = Path(self.fpath)
        self.fpath.parent.mkdir(parents=True, exist_ok=True)
        if self.fpath.exists():
            logger.info(f'Ingest log exists at {self.fpath}, recovering')
        else:
            self.fpath.touch()
        self.fd = os.open(self.fpath, os.O_WRONLY | os.O_APPEND)

    @staticmethod
    def _encode(domain, line, batch_seq=None):
        if isinstance(line, bytes):
            line = line.decode('utf-8')
        obj = {'domain': InstrumentationDomain.parse(domain).value, 'line': line.rstrip('\n')}
        if batch_seq is not None:
            obj['seq'] = int(batch_seq)
        return dumps_line(obj) + '\n'

    def append(self, domain, lines, batch_seq=None):
        """Appends record lines of one domain; returns once they are on disk."""
        data = ''.join(self._encode(domain, line, batch_seq) for line in lines).encode('utf-8')
        if not data:
            return
        with self._lock:
            os.write(self.fd, data)
            if self.fsync:
                os.fsync(self.fd)
            self.entries += len(lines)

    def _objects(self):
        with open(self.fpath, 'rb') as fin:
            for raw in fin:
                if not raw.endswith(b'\n'):
                    # torn final write, never acknowledged
                    logger.warning(f'Ignoring a partial entry at the end of {self.fpath}')
                    break
                yield loads_line(raw)

    def replay(self):
        """WalEntry of every complete record entry, in write order."""
        for obj in self._objects():
            if 'marks' in obj:
                continue
            yield WalEntry(InstrumentationDomain.parse(obj['domain']), (obj['line'] + '\n').encode('utf-8'),
                           obj.get('seq'))

    def read_marks(self):
        """Dedup marks written by the last checkpoint: {(device_id, domain): {high_watermark, horizon}}."""
        for obj in self._objects():
            if 'marks' not in obj:
                return {}
            return {(mark['device_id'], InstrumentationDomain.parse(mark['domain'])): mark for mark in obj['marks']}
        return {}

    def checkpoint(self, records, marks=None):
        """Replaces the log with `records` ((domain, line) pairs), after a header of `marks` when given."""
        tmp_path = self.fpath.with_suffix(self.fpath.suffix + '.tmp')
        count = 0
        with self._lock:
            with open(tmp_path, 'w', encoding='utf-8') as fout:
                if marks:
                    fout.write(dumps_line({'marks': [
                        dict(values, device_id=device_id, domain=InstrumentationDomain.parse(domain).value)
                        for (device_id, domain), values in marks.items()]}) + '\n')
                for domain, line in records:
                    fout.write(self._encode(domain, line))
                    count += 1
                fout.flush()
                os.fsync(fout.fileno())
            os.close(self.fd)
            os.replace(tmp_path, self.fpath)
            self.fd = os.open(self.fpath, os.O_WRONLY | os.O_APPEND)
            self.entries = count
        logger.info(f'Ingest log checkpointed with {count} entries')

    def close(self):
        with self._lock:
            if self.fd >= 0:
                os.close(self.fd)
                self.fd = -1
