"""Synthetic workloads modelled on a waste collection truck: metric exposition, application logs
and region-aggregation span trees, all reproducible from a seed."""
import dataclasses
from collections import namedtuple
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from fog_observability.core.errors import ScenarioConfigError
from fog_observability.core.exposition.parser import format_value
from fog_observability.core.model import InstrumentationDomain, project_volume
from fog_observability.core.records import ObservabilityRecord, TraceSpan

# width of format_value() for finite non-negative values below 1e100
VALUE_WIDTH = 12
DEFAULT_BBOX = (-0.42, 39.42, -0.30, 39.52)
_MIN_METRIC_BYTES = 1024
_MIN_LOG_BYTES = 256

_HELP_WORDS = (
    'number', 'of', 'frames', 'captured', 'by', 'the', 'camera', 'since', 'process', 'start', 'total', 'time',
    'spent', 'waiting', 'for', 'uplink', 'bytes', 'queued', 'before', 'upload', 'detector', 'inference', 'runs',
    'completed', 'on', 'accelerator', 'while', 'truck', 'is', 'moving', 'along', 'route', 'segment', 'current',
    'position', 'fix', 'quality', 'reported', 'gnss', 'receiver', 'modem', 'signal', 'strength', 'measured',
    'every', 'collection', 'cycle', 'bins', 'lifted', 'and', 'emptied', 'failed', 'attempts', 'retried', 'after',
    'backoff', 'local', 'storage', 'used', 'video', 'clips', 'kept', 'until', 'acknowledged', 'fog', 'node',
)
_SUBSYSTEMS = ('camera', 'detector', 'uploader', 'gnss', 'modem', 'storage', 'encoder', 'scheduler', 'lift', 'route')
_NOUNS = ('frames', 'detections', 'retries', 'queue_depth', 'latency_seconds', 'errors', 'segments', 'bytes',
          'events', 'samples', 'drops', 'restarts')
_ROUTES = ('R01', 'R02', 'R07', 'R12', 'R19')
_CAMERAS = ('front', 'rear', 'left', 'right')
_MODELS = ('bin-detector-v3', 'litter-seg-v1', 'plate-ocr-v2')
_OBJECTS = ('bin', 'car', 'bag', 'person', 'bike', 'van', 'box', 'sofa')

_GO_FAMILIES = (
    ('go_goroutines', 'gauge', 'Number of goroutines that currently exist.'),
    ('go_threads', 'gauge', 'Number of OS threads created.'),
    ('go_memstats_alloc_bytes', 'gauge', 'Number of bytes allocated and still in use.'),
    ('go_memstats_alloc_bytes_total', 'counter', 'Total number of bytes allocated, even if freed.'),
    ('go_memstats_buck_hash_sys_bytes', 'gauge', 'Number of bytes used by the profiling bucket hash table.'),
    ('go_memstats_frees_total', 'counter', 'Total number of frees.'),
    ('go_memstats_gc_sys_bytes', 'gauge', 'Number of bytes used for garbage collection system metadata.'),
    ('go_memstats_heap_alloc_bytes', 'gauge', 'Number of heap bytes allocated and still in use.'),
    ('go_memstats_heap_idle_bytes', 'gauge', 'Number of heap bytes waiting to be used.'),
    ('go_memstats_heap_inuse_bytes', 'gauge', 'Number of heap bytes that are in use.'),
    ('go_memstats_heap_objects', 'gauge', 'Number of allocated objects.'),
    ('go_memstats_heap_released_bytes', 'gauge', 'Number of heap bytes released to OS.'),
    ('go_memstats_heap_sys_bytes', 'gauge', 'Number of heap bytes obtained from system.'),
    ('go_memstats_last_gc_time_seconds', 'gauge', 'Number of seconds since 1970 of last garbage collection.'),
    ('go_memstats_lookups_total', 'counter', 'Total number of pointer lookups.'),
    ('go_memstats_mallocs_total', 'counter', 'Total number of mallocs.'),
    ('go_memstats_mcache_inuse_bytes', 'gauge', 'Number of bytes in use by mcache structures.'),
    ('go_memstats_next_gc_bytes', 'gauge', 'Number of heap bytes when next garbage collection will take place.'),
    ('go_memstats_stack_inuse_bytes', 'gauge', 'Number of bytes in use by the stack allocator.'),
    ('go_memstats_sys_bytes', 'gauge', 'Number of bytes obtained from system.'),
)
_MEMORY_FIELDS = ('MemTotal', 'MemFree', 'MemAvailable', 'Buffers', 'Cached', 'SwapCached', 'Active', 'Inactive',
                  'Active_anon', 'Inactive_anon', 'Active_file', 'Inactive_file', 'Unevictable', 'Mlocked',
                  'SwapTotal', 'SwapFree', 'Dirty', 'Writeback', 'AnonPages', 'Mapped', 'Shmem', 'Slab',
                  'SReclaimable', 'SUnreclaim')
_DISK_FAMILIES = ('reads_completed_total', 'reads_merged_total', 'read_bytes_total', 'read_time_seconds_total',
                  'writes_completed_total', 'writes_merged_total', 'written_bytes_total',
                  'write_time_seconds_total', 'io_now', 'io_time_seconds_total')
_NETWORK_FAMILIES = ('receive_bytes_total', 'transmit_bytes_total', 'receive_packets_total',
                     'transmit_packets_total', 'receive_errs_total', 'transmit_errs_total', 'receive_drop_total',
                     'transmit_drop_total', 'up')
_POWER_FAMILIES = ('capacity', 'online', 'voltage_volts', 'current_ampere', 'temp_celsius')
_CPU_MODES = ('idle', 'iowait', 'irq', 'nice', 'softirq', 'steal', 'system', 'user')


@dataclass(frozen=True)
class WorkloadSpec:
    devices: int = 1
    duration_s: float = 600.0
    seed: int = 7
    metric_payload_bytes: int = 66560
    metric_interval_s: float = 5.0
    log_line_bytes: int = 1024
    log_interval_s: float = 1.0
    span_tree_bytes: int = 4096
    span_interval_s: float = 15.0
    # (min_lon, min_lat, max_lon, max_lat) for GNSS fields
    bbox: Tuple[float, float, float, float] = DEFAULT_BBOX

    def __post_init__(self):
        if self.devices < 1:
            raise ScenarioConfigError(f'devices must be >= 1, got {self.devices}')
        for name in ('duration_s', 'metric_interval_s', 'log_interval_s', 'span_interval_s'):
            if getattr(self, name) <= 0:
                raise ScenarioConfigError(f'{name} must be positive, got {getattr(self, name)}', key=name)
        if self.metric_payload_bytes < _MIN_METRIC_BYTES:
            raise ScenarioConfigError(f'metric_payload_bytes must be >= {_MIN_METRIC_BYTES}',
                                      key='metric_payload_bytes')
        if self.log_line_bytes < _MIN_LOG_BYTES:
            raise ScenarioConfigError(f'log_line_bytes must be >= {_MIN_LOG_BYTES}', key='log_line_bytes')
        if self.span_tree_bytes <= 0:
            raise ScenarioConfigError('span_tree_bytes must be positive', key='span_tree_bytes')
        min_lon, min_lat, max_lon, max_lat = (float(value) for value in self.bbox)
        if min_lon >= max_lon or min_lat >= max_lat:
            raise ScenarioConfigError(f'Empty bounding box {self.bbox}', key='bbox')
        object.__setattr__(self, 'bbox', (min_lon, min_lat, max_lon, max_lat))

    @classmethod
    def from_cfg(cls, workload_cfg, bbox=None):
        kwargs = {field.name: workload_cfg[field.name] for field in dataclasses.fields(cls)
                  if field.name != 'bbox' and workload_cfg.get(field.name) is not None}
        if bbox is not None:
            kwargs['bbox'] = tuple(bbox)
        try:
            return cls(**{key: type(getattr(cls, key))(value) for key, value in kwargs.items()})
        except (TypeError, ValueError) as err:
            raise ScenarioConfigError(f'Bad workload: {err}') from err

    def rates(self):
        """(payload bytes, interval seconds) per domain."""
        return {
            InstrumentationDomain.METRIC: (self.metric_payload_bytes, self.metric_interval_s),
            InstrumentationDomain.LOG: (self.log_line_bytes, self.log_interval_s),
            InstrumentationDomain.TRACE: (self.span_tree_bytes, self.span_interval_s),
        }

    def projected_bytes(self, domain, hours, devices=None):
        payload, interval = self.rates()[InstrumentationDomain.parse(domain)]
        return project_volume(payload, interval, hours, devices or self.devices)

    def to_dict(self):
        out = dataclasses.asdict(self)
        out['bbox'] = list(self.bbox)
        return out


def device_ids(count):
    return [f'truck-{index:02d}' for index in range(count)]


def emission_times_ms(interval_s, duration_s):
    """Emission instants in [0, duration); there are floor(duration / interval) of them."""
    count = int(np.floor(duration_s / interval_s + 1e-9))
    return [int(round(k * interval_s * 1000)) for k in range(count)]


def _help_text(rng, length):
    words = []
    size = -1
    while size < length:
        word = _HELP_WORDS[int(rng.integers(len(_HELP_WORDS)))]
        words.append(word)
        size += len(word) + 1
    return ' '.join(words)[:length].rstrip() or 'x'


_Family = namedtuple('_Family', ['header', 'first', 'count'])


class SyntheticExposition(object):
    """An exposition document of exactly `size_bytes` bytes per emission.

    The family layout (a `go_` runtime group, node collectors, application families with long help
    text) is fixed by the seed; sample values change with the emission index, counters growing.
    """

    def __init__(self, size_bytes=66560, seed=0):
        if size_bytes < _MIN_METRIC_BYTES:
            raise ValueError(f'size_bytes must be >= {_MIN_METRIC_BYTES}, got {size_bytes}')
        self.size_bytes = int(size_bytes)
        self.seed = int(seed)
        self._rng = np.random.default_rng([self.seed, 0x6d])
        self._families = []
        self._prefixes = []
        self._counter = []
        self._base = []
        self._rate = []
        self._size = 0
        self._build()
        self._counter = np.array(self._counter, dtype=bool)
        self._base = np.array(self._base, dtype=np.float64)
        self._rate = np.array(self._rate, dtype=np.float64)

    @staticmethod
    def _header(name, kind, help_text):
        return f'# HELP {name} {help_text}\n# TYPE {name} {kind}\n'

    @staticmethod
    def _family_size(header, prefixes):
        return len(header) + sum(len(prefix) + VALUE_WIDTH + 1 for prefix in prefixes)

    def _add(self, name, kind, help_text, samples, reserve):
        """`samples` are (sample name, labels text, counter?) triples. Returns False when it does not fit."""
        header = self._header(name, kind, help_text)
        prefixes = [f'{sample}{labels} ' for sample, labels, _ in samples]
        size = self._family_size(header, prefixes)
        if self._size + size + reserve > self.size_bytes:
            return False
        self._families.append(_Family(header, len(self._prefixes), len(prefixes)))
        for (_, _, is_counter), prefix in zip(samples, prefixes):
            self._prefixes.append(prefix)
            self._counter.append(is_counter)
            magnitude = 10 ** self._rng.uniform(0, 8)
            self._base.append(magnitude)
            self._rate.append(magnitude * self._rng.uniform(0.001, 0.05) if is_counter else 0.0)
        self._size += size
        return True

    def _candidates(self):
        rng = self._rng
        yield ('go_gc_duration_seconds', 'summary', 'A summary of the pause duration of garbage collection cycles.',
               [('go_gc_duration_seconds', f'{{quantile="{q}"}}', False) for q in ('0', '0.25', '0.5', '0.75', '1')]
               + [('go_gc_duration_seconds_sum', '', True), ('go_gc_duration_seconds_count', '', True)])
        for name, kind, help_text in _GO_FAMILIES:
            yield name, kind, help_text, [(name, '', kind == 'counter')]
        yield ('node_cpu_seconds_total', 'counter', 'Seconds the CPUs spent in each mode.',
               [('node_cpu_seconds_total', f'{{cpu="{cpu}",mode="{mode}"}}', True)
                for cpu in range(4) for mode in _CPU_MODES])
        yield ('node_cpu_guest_seconds_total', 'counter', 'Seconds the CPUs spent in guests (VMs) for each mode.',
               [('node_cpu_guest_seconds_total', f'{{cpu="{cpu}",mode="{mode}"}}', True)
                for cpu in range(4) for mode in ('nice', 'user')])
        for field in _MEMORY_FIELDS:
            name = f'node_memory_{field}_bytes'
            yield name, 'gauge', f'Memory information field {field}_bytes.', [(name, '', False)]
        for family in _DISK_FAMILIES:
            name = f'node_disk_{family}'
            yield (name, 'counter' if family.endswith('_total') else 'gauge', f'The {family.replace("_", " ")}.',
                   [(name, f'{{device="{device}"}}', family.endswith('_total'))
                    for device in ('mmcblk0', 'mmcblk0p1', 'sda')])
        for family in _NETWORK_FAMILIES:
            name = f'node_network_{family}'
            yield (name, 'counter' if family.endswith('_total') else 'gauge',
                   f'Network device statistic {family}.',
                   [(name, f'{{device="{device}"}}', family.endswith('_total'))
                    for device in ('eth0', 'wlan0', 'wwan0')])
        for family in _POWER_FAMILIES:
            name = f'node_power_supply_{family}'
            yield (name, 'gauge', f'Power supply value {family} as reported by the kernel.',
                   [(name, f'{{power_supply="{supply}"}}', False) for supply in ('BAT0', 'AC')])
        seen = set()
        index = 0
        while True:
            subsystem = _SUBSYSTEMS[int(rng.integers(len(_SUBSYSTEMS)))]
            noun = _NOUNS[int(rng.integers(len(_NOUNS)))]
            is_counter = not noun.startswith('queue') and rng.random() < 0.6
            name = f'roadbot_{subsystem}_{noun}' + ('_total' if is_counter else '')
            if name in seen:
                name = f'roadbot_{subsystem}_{noun}_{index}'
            seen.add(name)
            index += 1
            samples = []
            for _ in range(int(rng.integers(3, 6))):
                labels = (f'{{route="{_ROUTES[int(rng.integers(len(_ROUTES)))]}",'
                          f'segment="s{int(rng.integers(1000)):03d}",'
                          f'camera="{_CAMERAS[int(rng.integers(len(_CAMERAS)))]}",'
                          f'model="{_MODELS[int(rng.integers(len(_MODELS)))]}"}}')
                samples.append((name, labels, is_counter))
            yield name, 'counter' if is_counter else 'gauge', _help_text(rng, int(rng.integers(280, 440))), samples

    def _padding_family(self, room):
        name = 'roadbot_build_info'
        prefix = f'{name}{{version="1.4.2"}} '
        fixed = len(self._header(name, 'gauge', '')) + len(prefix) + VALUE_WIDTH + 1
        return name, room - fixed, prefix

    def _build(self):
        _, _, min_prefix = self._padding_family(0)
        reserve = len(self._header('roadbot_build_info', 'gauge', 'x')) + len(min_prefix) + VALUE_WIDTH + 1
        misses = 0
        for name, kind, help_text, samples in self._candidates():
            if self._add(name, kind, help_text, samples, reserve):
                misses = 0
            elif name.startswith('roadbot_'):
                # application families vary in size, a smaller one may still fit
                misses += 1
                if misses > 8:
                    break
        name, help_length, prefix = self._padding_family(self.size_bytes - self._size)
        help_text = _help_text(self._rng, help_length)
        help_text = help_text + '.' * (help_length - len(help_text))
        self._families.append(_Family(self._header(name, 'gauge', help_text), len(self._prefixes), 1))
        self._prefixes.append(prefix)
        self._counter.append(False)
        self._base.append(1.0)
        self._rate.append(0.0)
        self._size += self._family_size(self._families[-1].header, [prefix])

    @property
    def family_names(self):
        return [family.header.split(' ', 3)[2] for family in self._families]

    def values(self, emission_index):
        noise = np.random.default_rng([self.seed, 0x76, int(emission_index)]).random(len(self._base))
        gauges = self._base * (0.75 + 0.5 * noise)
        return np.where(self._counter, self._base + self._rate * emission_index, gauges)

    def render(self, emission_index=0):
        values = self.values(emission_index)
        out = []
        for family in self._families:
            out.append(family.header)
            for j in range(family.first, family.first + family.count):
                out.append(self._prefixes[j])
                out.append(format_value(values[j]))
                out.append('\n')
        return ''.join(out).encode('utf-8')


class LogLineGenerator(object):
    """Application log lines of exactly `line_bytes` bytes (newline included) with `key=value` fields."""

    def __init__(self, device_id, line_bytes=1024, seed=0, bbox=DEFAULT_BBOX, source_index=0):
        self.device_id = device_id
        self.line_bytes = int(line_bytes)
        self.seed = int(seed)
        self.bbox = bbox
        self.source_index = source_index

    def line(self, index, timestamp_ms):
        rng = np.random.default_rng([self.seed, 0x6c, self.source_index, int(index)])
        latency_ms = float(rng.gamma(2.0, 60.0))
        level = 'ERROR' if rng.random() < 0.01 else ('WARN' if latency_ms > 250 else 'INFO')
        min_lon, min_lat, max_lon, max_lat = self.bbox
        text = (f'{timestamp_ms} {level} clip uploaded seq={index} truck={self.device_id} '
                f'route={_ROUTES[int(rng.integers(len(_ROUTES)))]} latency_ms={latency_ms:.1f} '
                f'throughput_kbps={float(rng.gamma(4.0, 900.0)):.1f} '
                f'lon={rng.uniform(min_lon, max_lon):.6f} lat={rng.uniform(min_lat, max_lat):.6f} '
                f'bins={int(rng.integers(0, 12))} objects=')
        room = self.line_bytes - 1 - len(text)
        objects = []
        size = -1
        while room > 0:
            word = _OBJECTS[int(rng.integers(len(_OBJECTS)))]
            if size + len(word) + 1 > room:
                break
            objects.append(word)
            size += len(word) + 1
        text += ','.join(objects)
        return text + '.' * max(self.line_bytes - 1 - len(text), 0) + '\n'


_PHASES = (
    ('extract', 2_000, 5_000),
    ('assign_naive', 200_000, 400_000),
    ('reduce_naive', 1_000, 2_000),
    ('assign_accelerated', 2_000, 5_000),
    ('reduce_accelerated', 1_000, 2_000),
)


class SpanTreeGenerator(object):
    """One region-aggregation trace per call: a root span and one child per phase.

    The root carries a `pad` attribute sized so the encoded records add up to `tree_bytes`
    whenever the unpadded tree is smaller.
    """

    service = 'region-aggregator'

    def __init__(self, device_id, tree_bytes=4096, seed=0, source_index=0):
        self.device_id = device_id
        self.tree_bytes = int(tree_bytes)
        self.seed = int(seed)
        self.source_index = source_index

    def tree(self, index, start_us):
        rng = np.random.default_rng([self.seed, 0x74, self.source_index, int(index)])
        trace_id = rng.bytes(16).hex()
        root_id = rng.bytes(8).hex()
        points = int(rng.integers(5_000, 20_000))
        children = []
        cursor = int(start_us) + int(rng.integers(100, 500))
        for operation, low, high in _PHASES:
            duration = int(rng.integers(low, high))
            children.append(TraceSpan(trace_id=trace_id, span_id=rng.bytes(8).hex(), parent_span_id=root_id,
                                      service=self.service, operation=operation, start=cursor, duration=duration,
                                      attributes=(('points', str(points)), ('regions', '6')),
                                      device_id=self.device_id))
            cursor += duration + int(rng.integers(50, 200))
        root = TraceSpan(trace_id=trace_id, span_id=root_id, parent_span_id=None, service=self.service,
                         operation='aggregate_by_region', start=int(start_us), duration=cursor - int(start_us),
                         attributes=(('points', str(points)), ('pad', '')), device_id=self.device_id)
        spans = [root] + children
        shortfall = self.tree_bytes - sum(ObservabilityRecord.wrap(span).encoded_size for span in spans)
        if shortfall > 0:
            spans[0] = dataclasses.replace(root, attributes=(('points', str(points)), ('pad', '.' * shortfall)))
        return spans


class DeviceWorkload(namedtuple('DeviceWorkload', ['device_id', 'exposition', 'logs', 'spans'])):
    pass


class Workload(object):
    """Per-device generators for one WorkloadSpec."""

    def __init__(self, spec, devices):
        self.spec = spec
        self.devices = devices

    def __iter__(self):
        return iter(self.devices)

    def __len__(self):
        return len(self.devices)

    def metric_times_ms(self, interval_scale=1.0):
        return emission_times_ms(self.spec.metric_interval_s * interval_scale, self.spec.duration_s)

    def log_times_ms(self):
        return emission_times_ms(self.spec.log_interval_s, self.spec.duration_s)

    def span_times_ms(self):
        return emission_times_ms(self.spec.span_interval_s, self.spec.duration_s)

    def stream(self, device_index, domain, start_ms=0):
        """Every payload of one device and domain, in emission order, as (offset ms, payload) pairs.

        Metrics come as exposition documents, logs as text lines and traces as span lists.
        """
        device = self.devices[device_index]
        domain = InstrumentationDomain.parse(domain)
        if domain == InstrumentationDomain.METRIC:
            for index, offset in enumerate(self.metric_times_ms()):
                yield offset, device.exposition.render(index)
        elif domain == InstrumentationDomain.LOG:
            for index, offset in enumerate(self.log_times_ms()):
                yield offset, device.logs.line(index, start_ms + offset)
        else:
            for index, offset in enumerate(self.span_times_ms()):
                yield offset, device.spans.tree(index, (start_ms + offset) * 1000)


def generate_workload(spec, bbox: Optional[tuple] = None):
    """Deterministic generators for every device of `spec`; device k is seeded with `spec.seed + k`."""
    bbox = bbox or spec.bbox
    devices = []
    for index, device_id in enumerate(device_ids(spec.devices)):
        seed = spec.seed + index
        devices.append(DeviceWorkload(device_id=device_id,
                                      exposition=SyntheticExposition(spec.metric_payload_bytes, seed=seed),
                                      logs=LogLineGenerator(device_id, spec.log_line_bytes, seed=seed, bbox=bbox),
                                      spans=SpanTreeGenerator(device_id, spec.span_tree_bytes, seed=seed)))
    return Workload(spec, devices)
