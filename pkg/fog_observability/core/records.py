"""Observability records: the unit that flows from collection to the archive.

Each payload has a single-line JSON wire form whose field names are the type's field
names. `ObservabilityRecord` wraps a payload with its dedup key and encoded size.
"""
import enum
import hashlib
import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

from fog_observability.core.errors import InvalidRecord
from fog_observability.core.model import InstrumentationDomain
from fog_observability.utils.structured import dumps_line, loads_line

METRIC_NAME_RE = re.compile(r'^[a-zA-Z_:][a-zA-Z0-9_:]*$')
_HEX_RE = re.compile(r'^[0-9a-f]+$')


class LogLevel(enum.Enum):
    DEBUG = 'DEBUG'
    INFO = 'INFO'
    WARN = 'WARN'
    ERROR = 'ERROR'

    @classmethod
    def parse(cls, text, default=None):
        """Unparsable levels fall back to INFO."""
        if isinstance(text, cls):
            return text
        normalized = str(text or '').strip().upper()
        aliases = {'WARNING': 'WARN', 'ERR': 'ERROR', 'FATAL': 'ERROR', 'CRITICAL': 'ERROR', 'TRACE': 'DEBUG'}
        normalized = aliases.get(normalized, normalized)
        try:
            return cls(normalized)
        except ValueError:
            return default if default is not None else cls.INFO

    @classmethod
    def is_level(cls, text):
        return cls.parse(text, default=False) is not False


def _pairs(items):
    if items is None:
        return ()
    if isinstance(items, dict):
        items = items.items()
    return tuple((str(key), str(value)) for key, value in items)


@dataclass(frozen=True)
class MetricSample:
    name: str
    labels: Tuple[Tuple[str, str], ...]
    value: float
    source_timestamp: int
    device_id: str

    def __post_init__(self):
        if not METRIC_NAME_RE.match(self.name or ''):
            raise InvalidRecord(f'Invalid metric name {self.name!r}')
        labels = _pairs(self.labels)
        keys = [key for key, _ in labels]
        if len(set(keys)) != len(keys):
            raise InvalidRecord(f'Duplicate label keys in {self.name}: {keys}')
        object.__setattr__(self, 'labels', tuple(sorted(labels)))
        value = float(self.value)
        if math.isinf(value):
            raise InvalidRecord(f'Metric {self.name} has an infinite value')
        object.__setattr__(self, 'value', value)
        if self.source_timestamp < 0:
            raise InvalidRecord(f'Negative timestamp {self.source_timestamp}')

    domain = InstrumentationDomain.METRIC

    @property
    def timestamp_ms(self):
        return self.source_timestamp

    def label(self, key, default=None):
        for label_key, value in self.labels:
            if label_key == key:
                return value
        return default

    def to_wire(self):
        return {
            'name': self.name,
            'labels': [list(pair) for pair in self.labels],
            'value': self.value,
            'source_timestamp': self.source_timestamp,
            'device_id': self.device_id,
        }

    @classmethod
    def from_wire(cls, obj):
        return cls(name=obj['name'], labels=_pairs(obj.get('labels')), value=obj['value'],
                   source_timestamp=int(obj['source_timestamp']), device_id=obj['device_id'])

    def content_digest(self):
        return _digest(dumps_line([self.name, [list(pair) for pair in self.labels], self.value]))


@dataclass(frozen=True)
class LogEntry:
    source_timestamp: int
    device_id: str
    source_file: str
    level: LogLevel
    message: str
    fields: Optional[Tuple[Tuple[str, str], ...]] = None

    def __post_init__(self):
        if not self.message:
            raise InvalidRecord('Log message must not be empty')
        object.__setattr__(self, 'level', LogLevel.parse(self.level))
        if self.fields is not None:
            object.__setattr__(self, 'fields', _pairs(self.fields))
        if self.source_timestamp < 0:
            raise InvalidRecord(f'Negative timestamp {self.source_timestamp}')

    domain = InstrumentationDomain.LOG

    @property
    def timestamp_ms(self):
        return self.source_timestamp

    def field_map(self):
        return dict(self.fields or ())

    def with_fields(self, fields):
        return replace(self, fields=_pairs(fields))

    def to_wire(self):
        return {
            'source_timestamp': self.source_timestamp,
            'device_id': self.device_id,
            'source_file': self.source_file,
            'level': self.level.value,
            'message': self.message,
            'fields': [list(pair) for pair in self.fields] if self.fields is not None else None,
        }

    @classmethod
    def from_wire(cls, obj):
        return cls(source_timestamp=int(obj['source_timestamp']), device_id=obj['device_id'],
                   source_file=obj.get('source_file', ''), level=obj.get('level'), message=obj['message'],
                   fields=_pairs(obj['fields']) if obj.get('fields') is not None else None)

    def content_digest(self):
        # fields are derived from the message at ingest and do not take part in identity
        return _digest(dumps_line([self.source_file, self.level.value, self.message]))


@dataclass(frozen=True)
class TraceSpan:
    trace_id: str
    span_id: str
    parent_span_id: Optional[str]
    service: str
    operation: str
    start: int
    duration: int
    attributes: Tuple[Tuple[str, str], ...] = field(default=())
    device_id: str = ''

    def __post_init__(self):
        if len(self.trace_id) != 32 or not _HEX_RE.match(self.trace_id):
            raise InvalidRecord(f'trace_id must be 32 lowercase hex chars, got {self.trace_id!r}')
        for name in ('span_id', 'parent_span_id'):
            value = getattr(self, name)
            if value is not None and (len(value) != 16 or not _HEX_RE.match(value)):
                raise InvalidRecord(f'{name} must be 16 lowercase hex chars, got {value!r}')
        if self.duration < 0:
            raise InvalidRecord(f'Span {self.span_id} has negative duration {self.duration}')
        object.__setattr__(self, 'attributes', _pairs(self.attributes))

    domain = InstrumentationDomain.TRACE

    @property
    def timestamp_ms(self):
        return self.start // 1000

    @property
    def end(self):
        return self.start + self.duration

    def attribute_map(self):
        return dict(self.attributes)

    def to_wire(self):
        return {
            'trace_id': self.trace_id,
            'span_id': self.span_id,
            'parent_span_id': self.parent_span_id,
            'service': self.service,
            'operation': self.operation,
            'start': self.start,
            'duration': self.duration,
            'attributes': [list(pair) for pair in self.attributes],
            'device_id': self.device_id,
        }

    @classmethod
    def from_wire(cls, obj):
        return cls(trace_id=obj['trace_id'], span_id=obj['span_id'], parent_span_id=obj.get('parent_span_id'),
                   service=obj['service'], operation=obj['operation'], start=int(obj['start']),
                   duration=int(obj['duration']), attributes=_pairs(obj.get('attributes')),
                   device_id=obj.get('device_id', ''))

    def content_digest(self):
        return _digest(encode_payload(self))


PAYLOAD_TYPES = {
    InstrumentationDomain.METRIC: MetricSample,
    InstrumentationDomain.LOG: LogEntry,
    InstrumentationDomain.TRACE: TraceSpan,
}


def _digest(text):
    if isinstance(text, str):
        text = text.encode('utf-8')
    return hashlib.blake2b(text, digest_size=16).digest()


def encode_payload(payload):
    """Wire line of a payload, newline terminated."""
    return (dumps_line(payload.to_wire()) + '\n').encode('utf-8')


def decode_payload(domain, line):
    domain = InstrumentationDomain.parse(domain)
    try:
        return PAYLOAD_TYPES[domain].from_wire(loads_line(line))
    except InvalidRecord:
        raise
    except (ValueError, KeyError, TypeError) as err:
        raise InvalidRecord(f'Cannot decode {domain.value} record: {err}') from err


def dedup_key(payload):
    head = f'{payload.device_id}\x1f{payload.domain.value}\x1f{payload.timestamp_ms}\x1f'.encode('utf-8')
    return hashlib.blake2b(head + payload.content_digest(), digest_size=16).hexdigest()


@dataclass(frozen=True)
class ObservabilityRecord:
    payload: object
    dedup_key: str
    encoded_size: int
    line: bytes = field(repr=False, compare=False)

    @classmethod
    def wrap(cls, payload):
        line = encode_payload(payload)
        return cls(payload=payload, dedup_key=dedup_key(payload), encoded_size=len(line), line=line)

    @classmethod
    def from_line(cls, domain, line):
        if isinstance(line, str):
            line = line.encode('utf-8')
        if not line.endswith(b'\n'):
            line += b'\n'
        payload = decode_payload(domain, line)
        return cls(payload=payload, dedup_key=dedup_key(payload), encoded_size=len(line), line=line)

    @property
    def domain(self):
        return self.payload.domain

    @property
    def device_id(self):
        return self.payload.device_id

    @property
    def timestamp_ms(self):
        return self.payload.timestamp_ms
