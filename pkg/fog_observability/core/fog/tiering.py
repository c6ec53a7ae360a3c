"""Moves records older than the age limit from the fog stores into archive segments."""
import os
from dataclasses import dataclass
from pathlib import Path

from fog_observability.core.archive.segment import ArchiveSegment, read_segment, write_segment
from fog_observability.core.errors import ChecksumMismatch, InvalidInterval, SinkUnavailable
from fog_observability.core.model import DOMAINS
from fog_observability.utils.logger import get_logger

WEEK_S = 7 * 24 * 3600

logger = get_logger().getChild('tiering')


@dataclass(frozen=True)
class TieringPolicy:
    age_limit_s: float = WEEK_S
    cycle_interval_s: float = 24 * 3600
    sink: str = ''

    def __post_init__(self):
        if self.age_limit_s <= 0:
            raise InvalidInterval(f'age_limit_s must be positive, got {self.age_limit_s}')
        if self.cycle_interval_s <= 0:
            raise InvalidInterval(f'cycle_interval_s must be positive, got {self.cycle_interval_s}')

    @classmethod
    def from_cfg(cls, tiering_cfg, default_sink=''):
        return cls(age_limit_s=float(tiering_cfg.age_limit_s), cycle_interval_s=float(tiering_cfg.cycle_interval_s),
                   sink=str(tiering_cfg.sink or default_sink))

    def cutoff_ms(self, now_ms):
        return int(now_ms - self.age_limit_s * 1000)


def _check_sink(sink):
    if not sink or not os.path.isdir(sink) or not os.access(sink, os.W_OK):
        raise SinkUnavailable(f'Archive sink {sink!r} is not a writable directory', sink=str(sink))
    return Path(sink)


def _export(sink, domain, records, writer):
    """Writes and reads back one segment; a bad copy is removed and written once more."""
    for attempt in (1, 2):
        path, manifest = writer(sink, domain, records)
        try:
            read_segment(path)
            return ArchiveSegment(path=path, manifest=manifest)
        except ChecksumMismatch as err:
            logger.warning(f'Verification of {path} failed (attempt {attempt}): {err.message}')
            _discard(path)
            if attempt == 2:
                raise


def _discard(path):
    try:
        os.unlink(path)
    except FileNotFoundError:
        pass


def tiering_cycle(node, policy, now_ms, writer=write_segment):
    """Exports every record with a source timestamp before `now - age_limit` and removes it from `node`.

    One segment per domain. Every segment is written and verified before any record is deleted, so a
    SinkUnavailable or ChecksumMismatch leaves the fog with all its records and the sink with none of this cycle.
    """
    sink = _check_sink(policy.sink)
    cutoff = policy.cutoff_ms(now_ms)
    exported = []
    try:
        for domain in DOMAINS:
            entries = node.records_before(domain, cutoff)
            if entries:
                segment = _export(sink, domain, [record for _, record in entries], writer)
                exported.append((domain, entries, segment))
    except Exception:
        for _, _, segment in exported:
            _discard(segment.path)
        raise
    for domain, entries, segment in exported:
        node.remove_records(domain, entries)
        logger.info(f'Tiered {segment.manifest.count} {domain.value} records to {segment.path}')
    if exported:
        node.checkpoint()
    return [segment for _, _, segment in exported]
