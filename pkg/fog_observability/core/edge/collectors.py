"""Metric collection: pluggable sources read on a fixed interval and turned into MetricSamples."""
import threading
from abc import ABC, abstractmethod
from collections import namedtuple
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import psutil

from fog_observability.core.errors import InvalidInterval, ParseError, SourceUnavailable
from fog_observability.core.exposition.parser import format_value, parse_exposition
from fog_observability.core.exposition.reduction import ReductionPolicy, encode_exposition
from fog_observability.core.model import InstrumentationDomain
from fog_observability.utils.logger import get_logger

METRIC_SOURCE_NAMES = ('host-stats', 'exposition-file', 'synthetic')

MetricEmission = namedtuple('MetricEmission', ['timestamp_ms', 'samples', 'source_bytes'])


@dataclass
class CollectorConfig:
    metric_interval_s: float
    metric_source: str
    weights: object
    log_paths: List[str] = field(default_factory=list)
    trace_ingest_enabled: bool = True
    exposition_path: Optional[str] = None

    def __post_init__(self):
        if self.metric_interval_s <= 0:
            raise InvalidInterval(f'metric_interval_s must be positive, got {self.metric_interval_s}')
        if self.metric_source not in METRIC_SOURCE_NAMES:
            raise ValueError(f'Unknown metric source {self.metric_source!r}, '
                             f'expected one of {", ".join(METRIC_SOURCE_NAMES)}')

    @classmethod
    def from_cfg(cls, cfg, weights):
        return cls(metric_interval_s=float(cfg.metric.interval_s), metric_source=str(cfg.metric.source),
                   weights=weights, log_paths=list(cfg.logs.paths or []),
                   trace_ingest_enabled=bool(cfg.traces.ingest_enabled),
                   exposition_path=cfg.metric.exposition_path)

    def enabled(self, domain):
        """Zero-weight domains are not collected."""
        if domain == InstrumentationDomain.TRACE and not self.trace_ingest_enabled:
            return False
        return self.weights.is_managed(domain)


class MetricSource(ABC):
    @abstractmethod
    def read(self):
        """Returns the current document as exposition bytes."""
        pass


class ExpositionFileSource(MetricSource):
    def __init__(self, path):
        self.path = Path(path) if path else None

    def read(self):
        if self.path is None:
            raise SourceUnavailable('No exposition file configured')
        try:
            return self.path.read_bytes()
        except OSError as err:
            raise SourceUnavailable(f'Cannot read exposition file {self.path}: {err}', path=str(self.path))


class HostStatsSource(MetricSource):
    """Operating system counters through psutil, published under node-exporter style names."""

    def _lines(self):
        yield '# HELP node_cpu_seconds_total Seconds the CPUs spent in each mode.\n'
        yield '# TYPE node_cpu_seconds_total counter\n'
        for cpu, times in enumerate(psutil.cpu_times(percpu=True)):
            for mode, value in times._asdict().items():
                yield f'node_cpu_seconds_total{{cpu="{cpu}",mode="{mode}"}} {format_value(value)}\n'
        memory = psutil.virtual_memory()
        for name in ('total', 'available', 'used', 'free'):
            metric = f'node_memory_{name.capitalize()}_bytes'
            yield f'# TYPE {metric} gauge\n'
            yield f'{metric} {format_value(getattr(memory, name))}\n'
        disks = psutil.disk_io_counters(perdisk=True) or {}
        if disks:
            yield '# TYPE node_disk_read_bytes_total counter\n'
            for device, counters in sorted(disks.items()):
                yield f'node_disk_read_bytes_total{{device="{device}"}} {format_value(counters.read_bytes)}\n'
            yield '# TYPE node_disk_written_bytes_total counter\n'
            for device, counters in sorted(disks.items()):
                yield f'node_disk_written_bytes_total{{device="{device}"}} {format_value(counters.write_bytes)}\n'
        nics = psutil.net_io_counters(pernic=True) or {}
        if nics:
            yield '# TYPE node_network_receive_bytes_total counter\n'
            for device, counters in sorted(nics.items()):
                yield f'node_network_receive_bytes_total{{device="{device}"}} {format_value(counters.bytes_recv)}\n'
            yield '# TYPE node_network_transmit_bytes_total counter\n'
            for device, counters in sorted(nics.items()):
                yield f'node_network_transmit_bytes_total{{device="{device}"}} {format_value(counters.bytes_sent)}\n'
        battery = psutil.sensors_battery() if hasattr(psutil, 'sensors_battery') else None
        if battery is not None:
            yield '# TYPE node_power_supply_capacity gauge\n'
            yield f'node_power_supply_capacity{{power_supply="BAT0"}} {format_value(battery.percent)}\n'
            yield '# TYPE node_power_supply_online gauge\n'
            yield f'node_power_supply_online{{power_supply="AC"}} {format_value(float(bool(battery.power_plugged)))}\n'

    def read(self):
        try:
            return ''.join(self._lines()).encode('utf-8')
        except (psutil.Error, OSError, RuntimeError) as err:
            raise SourceUnavailable(f'OS counters unreadable: {err}')


class SyntheticSource(MetricSource):
    """Replays a generated corpus; each read renders the next emission."""

    def __init__(self, corpus):
        self.corpus = corpus
        self._emission = 0

    def read(self):
        data = self.corpus.render(self._emission)
        self._emission += 1
        return data


def get_metric_source(name, cfg=None, corpus=None):
    if name == 'synthetic':
        if corpus is None:
            # imported lazily, the generator is only needed without an explicit corpus
            from fog_observability.core.replay.workload import SyntheticExposition
            corpus = SyntheticExposition(size_bytes=int(cfg.metric.payload_bytes), seed=int(cfg.metric.seed))
        return SyntheticSource(corpus)
    factory = {
        'host-stats': lambda: HostStatsSource(),
        'exposition-file': lambda: ExpositionFileSource(cfg.metric.exposition_path if cfg is not None else None),
    }
    if name not in factory:
        raise ValueError(f'Metric source {name} not found')
    return factory[name]()


class MetricCollector(object):
    """Reads a source and applies the reduction policy at the edge."""

    def __init__(self, config, source, device_id, clock, policy=None):
        self.config = config
        self.source = source
        self.device_id = device_id
        self.clock = clock
        self.policy = policy or ReductionPolicy.keep_all()
        self.emissions = 0
        self.skipped = 0
        self._logger = get_logger().getChild('metrics')

    @property
    def interval_s(self):
        return self.config.metric_interval_s * self.policy.interval_scale

    def collect_once(self):
        """One emission, or None when the source is unavailable."""
        timestamp_ms = self.clock.now_ms()
        try:
            raw = self.source.read()
            doc = parse_exposition(raw)
        except (SourceUnavailable, ParseError) as err:
            self.skipped += 1
            self._logger.warning(f'Metric emission skipped: {err}')
            return None
        if self.policy.family_allowlist is not None:
            doc.families = [family for family in doc.families if self.policy.keeps_family(family.name)]
        source_bytes = len(raw) if self.policy.is_identity else len(encode_exposition(doc, self.policy))
        self.emissions += 1
        return MetricEmission(timestamp_ms, doc.to_samples(self.device_id, timestamp_ms), source_bytes)


def collect_metrics(collector, stop_event=None, until_ms=None):
    """Emissions every `collector.interval_s`, stamped at read time."""
    if not collector.config.enabled(InstrumentationDomain.METRIC):
        return
    stop_event = stop_event or threading.Event()
    while not stop_event.is_set():
        if until_ms is not None and collector.clock.now_ms() >= until_ms:
            return
        emission = collector.collect_once()
        if emission is not None:
            yield emission
        collector.clock.sleep(collector.interval_s)
