"""Formal model of fog observability: instrumentation domains, weights, overheads and outcome.

Everything here is an immutable value or a pure function, safe to share between threads.
"""
import enum
import math
from dataclasses import dataclass
from typing import FrozenSet, Mapping, Optional

from fog_observability.core.errors import InvalidInterval, InvalidRange, WeightRangeError, WeightSumError

WEIGHT_TOLERANCE = 1e-9
EPSILON_OVER = 0.01


class InstrumentationDomain(enum.Enum):
    METRIC = 'metric'
    LOG = 'log'
    TRACE = 'trace'

    @property
    def tag(self):
        return _DOMAIN_TAGS[self]

    @property
    def order(self):
        return _DOMAIN_ORDER[self]

    @classmethod
    def from_tag(cls, tag):
        for domain, domain_tag in _DOMAIN_TAGS.items():
            if domain_tag == tag:
                return domain
        raise ValueError(f'Unknown domain tag {tag!r}')

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        normalized = str(name).strip().lower().rstrip('s')
        for domain in cls:
            if domain.value == normalized:
                return domain
        raise ValueError(f'Unknown instrumentation domain {name!r}')


_DOMAIN_TAGS = {
    InstrumentationDomain.METRIC: 0x01,
    InstrumentationDomain.LOG: 0x02,
    InstrumentationDomain.TRACE: 0x03,
}
_DOMAIN_ORDER = {domain: index for index, domain in enumerate(InstrumentationDomain)}

DOMAINS = tuple(InstrumentationDomain)
ID_SIZE = len(DOMAINS)


@dataclass(frozen=True)
class WeightProfile:
    name: str
    w_metric: float
    w_log: float
    w_trace: float

    def __post_init__(self):
        _check_weights(self.w_metric, self.w_log, self.w_trace)

    def weight(self, domain):
        return {
            InstrumentationDomain.METRIC: self.w_metric,
            InstrumentationDomain.LOG: self.w_log,
            InstrumentationDomain.TRACE: self.w_trace,
        }[InstrumentationDomain.parse(domain)]

    def is_managed(self, domain):
        """A zero weight means the domain is not collected nor transmitted."""
        return self.weight(domain) > 0

    def to_dict(self):
        return {'name': self.name, 'w_metric': self.w_metric, 'w_log': self.w_log, 'w_trace': self.w_trace}


def _check_weights(w_metric, w_log, w_trace):
    weights = (w_metric, w_log, w_trace)
    for value in weights:
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise WeightRangeError(f'Weight {value!r} is not a finite number')
        if value < 0 or value > 1:
            raise WeightRangeError(f'Weight {value} is outside [0, 1]')
    total = math.fsum(weights)
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise WeightSumError(f'Weights must sum to 1, got {total!r}', weights=list(weights))


def validate_weights(w_metric, w_log, w_trace, name='custom'):
    return WeightProfile(name=name, w_metric=float(w_metric), w_log=float(w_log), w_trace=float(w_trace))


@dataclass(frozen=True)
class OverheadVector:
    cpu_pct: float
    mem_pct: float
    net_pct: float

    def __post_init__(self):
        for field_name in ('cpu_pct', 'mem_pct', 'net_pct'):
            value = getattr(self, field_name)
            if not (0.0 <= value <= 100.0):
                raise ValueError(f'{field_name}={value} is outside [0, 100]')

    @classmethod
    def clamped(cls, cpu_pct, mem_pct, net_pct):
        return cls(*(min(max(float(value), 0.0), 100.0) for value in (cpu_pct, mem_pct, net_pct)))

    def to_dict(self):
        return {'cpu_pct': self.cpu_pct, 'mem_pct': self.mem_pct, 'net_pct': self.net_pct}


@dataclass(frozen=True)
class OverheadScore:
    value: float

    def __post_init__(self):
        if not (0.0 < self.value <= 100.0):
            raise ValueError(f'Overhead score must be in (0, 100], got {self.value}')


def overhead_score(vector, epsilon=EPSILON_OVER):
    return OverheadScore(max(vector.cpu_pct, vector.mem_pct, vector.net_pct, epsilon))


@dataclass(frozen=True)
class CorrelationWindow:
    start: int
    end: int
    device_filter: Optional[FrozenSet[str]] = None

    def __post_init__(self):
        if self.start >= self.end:
            raise InvalidRange(f'Window start {self.start} must be before end {self.end}')
        if self.device_filter is not None and not isinstance(self.device_filter, frozenset):
            object.__setattr__(self, 'device_filter', frozenset(self.device_filter))

    def accepts_device(self, device_id):
        return self.device_filter is None or device_id in self.device_filter

    def contains_ms(self, timestamp_ms):
        return self.start <= timestamp_ms < self.end

    def to_dict(self):
        devices = sorted(self.device_filter) if self.device_filter is not None else None
        return {'start': self.start, 'end': self.end, 'device_filter': devices}


@dataclass(frozen=True)
class CorrelationScore:
    occupied_domains: int
    score: float

    def to_dict(self):
        return {'occupied_domains': self.occupied_domains, 'score': self.score}


def correlation_score(counts_per_domain: Mapping):
    occupied = 0
    for domain in DOMAINS:
        count = counts_per_domain.get(domain, counts_per_domain.get(domain.value, 0))
        if count < 0:
            raise ValueError(f'Negative record count for {domain.value}: {count}')
        if count > 0:
            occupied += 1
    score = 0.0 if occupied <= 1 else (occupied - 1) / (ID_SIZE - 1)
    return CorrelationScore(occupied_domains=occupied, score=score)


@dataclass(frozen=True)
class OutcomeReport:
    weights: WeightProfile
    over_metric: OverheadScore
    over_log: OverheadScore
    over_trace: OverheadScore
    over_x: OverheadScore
    x_score: CorrelationScore
    collection_term: float
    analysis_term: float
    outcome: float

    def to_dict(self):
        return {
            'weights': self.weights.to_dict(),
            'over_metric': self.over_metric.value,
            'over_log': self.over_log.value,
            'over_trace': self.over_trace.value,
            'over_x': self.over_x.value,
            'x_score': self.x_score.to_dict(),
            'collection_term': self.collection_term,
            'analysis_term': self.analysis_term,
            'outcome': self.outcome,
        }

    def plot_rows(self):
        return [
            ('metric', self.weights.w_metric / self.over_metric.value),
            ('log', self.weights.w_log / self.over_log.value),
            ('trace', self.weights.w_trace / self.over_trace.value),
            ('collection', self.collection_term),
            ('analysis', self.analysis_term),
            ('outcome', self.outcome),
        ]


def outcome(w, over_m, over_l, over_t, x, over_x):
    collection_term = w.w_metric / over_m.value + w.w_log / over_l.value + w.w_trace / over_t.value
    analysis_term = x.score / over_x.value
    return OutcomeReport(weights=w, over_metric=over_m, over_log=over_l, over_trace=over_t, over_x=over_x,
                         x_score=x, collection_term=collection_term, analysis_term=analysis_term,
                         outcome=collection_term + analysis_term)


def project_volume(payload_bytes, interval_seconds, duration_hours, device_count):
    if interval_seconds <= 0:
        raise InvalidInterval(f'Collection interval must be positive, got {interval_seconds}')
    if payload_bytes <= 0 or duration_hours <= 0 or device_count <= 0:
        raise ValueError('payload_bytes, duration_hours and device_count must be positive')
    emissions = math.floor(duration_hours * 3600 / interval_seconds)
    return int(payload_bytes) * emissions * int(device_count)


def batch_priority(domain, w, over):
    weight = w.weight(domain)
    if weight == 0:
        return 0.0
    return weight / over.value
