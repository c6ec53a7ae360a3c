"""Archive catalog: imported segments and historical queries over them."""
import os
import shutil
import tempfile
import threading
from collections import namedtuple
from pathlib import Path

from fog_observability.core.archive.segment import SEGMENT_SUFFIX, SegmentManifest, read_segment
from fog_observability.core.errors import ChecksumMismatch, DuplicateSegment
from fog_observability.core.fog.index import document_text, tokenize
from fog_observability.core.fog.selector import MetricSelector
from fog_observability.core.model import InstrumentationDomain
from fog_observability.core.records import ObservabilityRecord
from fog_observability.utils.logger import get_logger
from fog_observability.utils.structured import read_json, write_json_atomic

CatalogEntry = namedtuple('CatalogEntry', ['path', 'manifest'])
ImportSummary = namedtuple('ImportSummary', ['imported', 'duplicates', 'rejected'])


class ArchiveCatalog(object):
    """Segments copied under `<catalog_dir>/segments`, listed in `<catalog_dir>/catalog.json`."""

    def __init__(self, catalog_dir):
        self.catalog_dir = Path(catalog_dir)
        self.segments_dir = self.catalog_dir / 'segments'
        self.segments_dir.mkdir(parents=True, exist_ok=True)
        self.catalog_path = self.catalog_dir / 'catalog.json'
        self.segments_decompressed = 0
        self._lock = threading.Lock()
        self._logger = get_logger().getChild('archive')
        state = read_json(self.catalog_path, default={'segments': []})
        self.entries = [CatalogEntry(Path(item['path']), SegmentManifest.from_dict(item['manifest']))
                        for item in state['segments']]

    def __len__(self):
        return len(self.entries)

    def _save(self):
        segments = [{'path': str(entry.path), 'manifest': entry.manifest.to_dict()} for entry in self.entries]
        write_json_atomic(self.catalog_path, {'segments': segments})

    def find(self, manifest):
        for entry in self.entries:
            if entry.manifest.identity() == manifest.identity():
                return entry
        return None

    def import_segment(self, path):
        """Verifies a segment file and registers a copy of it.

        A corrupt file raises ChecksumMismatch and stays where it is; a segment already in the
        catalog raises DuplicateSegment and changes nothing.
        """
        path = Path(path)
        segment = read_segment(path)
        with self._lock:
            existing = self.find(segment.manifest)
            if existing is not None:
                raise DuplicateSegment(f'{path.name} is already archived as {existing.path.name}',
                                       path=str(path), existing=str(existing.path))
            target = self.segments_dir / path.name
            suffix = 0
            while target.exists():
                suffix += 1
                target = self.segments_dir / path.name.replace(SEGMENT_SUFFIX, f'~{suffix}{SEGMENT_SUFFIX}')
            fd, tmp_name = tempfile.mkstemp(prefix=target.name, suffix='.tmp', dir=self.segments_dir)
            os.close(fd)
            shutil.copyfile(path, tmp_name)
            shutil.move(tmp_name, target)
            entry = CatalogEntry(target, segment.manifest)
            self.entries.append(entry)
            self._save()
        self._logger.info(f'Imported {path.name}: {segment.manifest.count} {segment.manifest.domain} records')
        return entry

    def import_directory(self, directory):
        imported, duplicates, rejected = [], [], []
        for path in sorted(Path(directory).glob(f'*{SEGMENT_SUFFIX}')):
            try:
                imported.append(self.import_segment(path))
            except DuplicateSegment as err:
                duplicates.append(err.to_dict())
            except ChecksumMismatch as err:
                self._logger.warning(f'Rejected {path.name}: {err.message}')
                rejected.append(err.to_dict())
        return ImportSummary(imported, duplicates, rejected)

    def record_count(self, domain=None):
        domain = InstrumentationDomain.parse(domain).value if domain is not None else None
        return sum(entry.manifest.count for entry in self.entries if domain is None or entry.manifest.domain == domain)

    def historical_query(self, domain, start=None, end=None, selector=None, query=None):
        """Yields ObservabilityRecords of `domain` with a timestamp in [start, end), in segment order.

        Segments are chosen from their manifests alone; `selector` filters metrics, `query` terms
        filter logs and spans.
        """
        domain = InstrumentationDomain.parse(domain)
        metric_selector = MetricSelector.parse(selector) if selector else None
        terms = set(tokenize(query)) if query else None
        entries = sorted((entry for entry in self.entries
                          if entry.manifest.domain == domain.value and entry.manifest.intersects(start, end)),
                         key=lambda entry: (entry.manifest.min_ts, entry.manifest.max_ts, str(entry.path)))
        for entry in entries:
            segment = read_segment(entry.path)
            self.segments_decompressed += 1
            for line in segment.lines:
                record = ObservabilityRecord.from_line(domain, line)
                timestamp = record.timestamp_ms
                if (start is not None and timestamp < start) or (end is not None and timestamp >= end):
                    continue
                payload = record.payload
                if metric_selector is not None and domain == InstrumentationDomain.METRIC and \
                        not metric_selector.matches(payload.name, payload.labels, payload.device_id):
                    continue
                if terms and domain != InstrumentationDomain.METRIC and \
                        not terms <= set(tokenize(document_text(payload))):
                    continue
                yield record


def historical_query(catalog, domain, start=None, end=None, selector=None, query=None):
    return list(catalog.historical_query(domain, start=start, end=end, selector=selector, query=query))
