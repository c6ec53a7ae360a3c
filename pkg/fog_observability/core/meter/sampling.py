"""Per-component resource sampling: live process accounting or injected values in replays."""
import threading
from abc import ABC, abstractmethod
from collections import namedtuple
from dataclasses import asdict, dataclass

import psutil

from fog_observability.core.errors import AccountingUnavailable
from fog_observability.utils.logger import get_logger
from fog_observability.utils.structured import append_lines

Reading = namedtuple('Reading', ['cpu_pct', 'mem_bytes', 'net_bytes_delta'])


@dataclass(frozen=True)
class ResourceSample:
    component: str
    timestamp_ms: int
    cpu_pct: float
    mem_bytes: int
    net_bytes_delta: int
    window_s: float

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, obj):
        return cls(component=obj['component'], timestamp_ms=int(obj['timestamp_ms']), cpu_pct=float(obj['cpu_pct']),
                   mem_bytes=int(obj['mem_bytes']), net_bytes_delta=int(obj['net_bytes_delta']),
                   window_s=float(obj['window_s']))


class AccountingSource(ABC):
    """`read()` returns the usage of the last window; cpu_pct is in [0, 100 * cores]."""

    cores = 1

    @abstractmethod
    def read(self, window_s):
        pass


class PsutilAccounting(AccountingSource):
    def __init__(self, pid=None, net_counter=None):
        self.cores = psutil.cpu_count() or 1
        self._net_counter = net_counter
        self._last_net = net_counter() if net_counter is not None else 0
        try:
            self._process = psutil.Process(pid)
            # primes the counter, the first reading is meaningless
            self._process.cpu_percent(interval=None)
        except (psutil.NoSuchProcess, psutil.AccessDenied) as err:
            raise AccountingUnavailable(f'Cannot account process {pid}: {err}', pid=pid)

    def read(self, window_s):
        try:
            cpu = self._process.cpu_percent(interval=None)
            rss = self._process.memory_info().rss
        except (psutil.NoSuchProcess, psutil.AccessDenied) as err:
            raise AccountingUnavailable(f'Process accounting failed: {err}')
        net_delta = 0
        if self._net_counter is not None:
            current = self._net_counter()
            net_delta, self._last_net = max(current - self._last_net, 0), current
        return Reading(cpu, rss, net_delta)


class InjectedAccounting(AccountingSource):
    """Replays values set by the harness; reading before any injection is an accounting gap."""

    def __init__(self, cores=1):
        self.cores = cores
        self._reading = None

    def inject(self, cpu_pct, mem_bytes, net_bytes_delta):
        self._reading = Reading(float(cpu_pct), int(mem_bytes), int(net_bytes_delta))

    def read(self, window_s):
        if self._reading is None:
            raise AccountingUnavailable('No values injected yet')
        return self._reading


def sample_component(component, source, timestamp_ms, window_s):
    """One ResourceSample with CPU normalised to the whole machine; AccountingUnavailable propagates."""
    reading = source.read(window_s)
    cpu_pct = min(max(reading.cpu_pct / max(source.cores, 1), 0.0), 100.0)
    return ResourceSample(component=component, timestamp_ms=int(timestamp_ms), cpu_pct=cpu_pct,
                          mem_bytes=int(reading.mem_bytes), net_bytes_delta=int(reading.net_bytes_delta),
                          window_s=float(window_s))


class MeterSampler(object):
    """Samples every component each `interval_s` and appends the samples as JSON lines."""

    def __init__(self, sources, clock, out_path, interval_s=5.0, report=None):
        self.sources = dict(sources)
        self.clock = clock
        self.out_path = out_path
        self.interval_s = float(interval_s)
        self.report = report
        self.gaps = 0
        self._stop = threading.Event()
        self._thread = None
        self._logger = get_logger().getChild('meter')

    def sample_once(self):
        now_ms = self.clock.now_ms()
        samples = []
        for component, source in sorted(self.sources.items()):
            try:
                samples.append(sample_component(component, source, now_ms, self.interval_s))
            except AccountingUnavailable as err:
                self.gaps += 1
                if self.report is not None:
                    self.report.record_gap(component, now_ms)
                self._logger.warning(f'No sample for {component}: {err.message}')
        if samples:
            if self.out_path is not None:
                append_lines(self.out_path, samples)
            if self.report is not None:
                for sample in samples:
                    self.report.add(sample)
        return samples

    def _loop(self):
        while not self._stop.wait(self.interval_s):
            self.sample_once()

    def start(self):
        self._thread = threading.Thread(target=self._loop, name='odlc-meter', daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
