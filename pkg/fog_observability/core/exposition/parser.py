"""Parser and canonical encoder for the metrics text exposition format."""
import enum
import math
from collections import namedtuple
from dataclasses import dataclass, field
from typing import List, Optional

from fog_observability.core.errors import ParseError
from fog_observability.core.records import METRIC_NAME_RE, MetricSample

HISTOGRAM_SUFFIXES = ('_bucket', '_sum', '_count')
SUMMARY_SUFFIXES = ('_sum', '_count')

ExpositionSample = namedtuple('ExpositionSample', ['name', 'labels', 'value', 'timestamp', 'raw_value'])


class MetricKind(enum.Enum):
    COUNTER = 'counter'
    GAUGE = 'gauge'
    HISTOGRAM = 'histogram'
    SUMMARY = 'summary'
    UNTYPED = 'untyped'


@dataclass
class MetricFamily:
    name: str
    help: Optional[str] = None
    kind: MetricKind = MetricKind.UNTYPED
    # False when no TYPE line was seen; canonical re-encoding then emits none
    type_declared: bool = False
    samples: List[ExpositionSample] = field(default_factory=list)

    def accepts(self, sample_name):
        if sample_name == self.name:
            return True
        if not sample_name.startswith(self.name):
            return False
        suffix = sample_name[len(self.name):]
        if self.kind == MetricKind.HISTOGRAM:
            return suffix in HISTOGRAM_SUFFIXES
        if self.kind == MetricKind.SUMMARY:
            return suffix in SUMMARY_SUFFIXES
        return False


@dataclass
class ExpositionDocument:
    families: List[MetricFamily] = field(default_factory=list)
    raw_size_bytes: int = 0

    @property
    def sample_count(self):
        return sum(len(family.samples) for family in self.families)

    def family(self, name):
        for family in self.families:
            if family.name == name:
                return family
        return None

    def to_samples(self, device_id, timestamp_ms):
        """MetricSamples stamped with the read time; explicit sample timestamps win."""
        samples = []
        for family in self.families:
            for sample in family.samples:
                if math.isinf(sample.value):
                    continue
                ts = sample.timestamp if sample.timestamp is not None else timestamp_ms
                samples.append(MetricSample(name=sample.name, labels=sample.labels, value=sample.value,
                                            source_timestamp=ts, device_id=device_id))
        return samples


def _unescape(value):
    out = []
    i = 0
    while i < len(value):
        char = value[i]
        if char == '\\' and i + 1 < len(value):
            nxt = value[i + 1]
            out.append({'n': '\n', '"': '"', '\\': '\\'}.get(nxt, '\\' + nxt))
            i += 2
            continue
        out.append(char)
        i += 1
    return ''.join(out)


def _escape(value):
    return value.replace('\\', '\\\\').replace('\n', '\\n').replace('"', '\\"')


def _parse_labels(text, line_no):
    """Parses the inside of `{...}`; quoted values may contain commas, braces and escapes."""
    labels = []
    i = 0
    length = len(text)
    while i < length:
        while i < length and text[i] in ' ,':
            i += 1
        if i >= length:
            break
        eq = text.find('=', i)
        if eq < 0:
            raise ParseError(f'Label without value in {{{text}}}', line=line_no)
        key = text[i:eq].strip()
        if not key or not METRIC_NAME_RE.match(key):
            raise ParseError(f'Invalid label name {key!r}', line=line_no)
        i = eq + 1
        if i >= length or text[i] != '"':
            raise ParseError(f'Label {key} value is not quoted', line=line_no)
        i += 1
        start = i
        while i < length and text[i] != '"':
            i += 2 if text[i] == '\\' else 1
        if i >= length:
            raise ParseError(f'Unterminated label value for {key}', line=line_no)
        labels.append((key, _unescape(text[start:i])))
        i += 1
    keys = [key for key, _ in labels]
    if len(set(keys)) != len(keys):
        raise ParseError(f'Duplicate label names {keys}', line=line_no)
    return tuple(sorted(labels))


def _find_closing_brace(line, start, line_no):
    i = start
    in_quotes = False
    while i < len(line):
        char = line[i]
        if in_quotes:
            if char == '\\':
                i += 2
                continue
            if char == '"':
                in_quotes = False
        elif char == '"':
            in_quotes = True
        elif char == '}':
            return i
        elif char == '{':
            raise ParseError('Unbalanced braces', line=line_no)
        i += 1
    raise ParseError('Unbalanced braces', line=line_no)


def parse_sample_line(line, line_no=None):
    brace = line.find('{')
    space = line.find(' ')
    if brace >= 0 and (space < 0 or brace < space):
        name = line[:brace]
        close = _find_closing_brace(line, brace + 1, line_no)
        labels = _parse_labels(line[brace + 1:close], line_no)
        rest = line[close + 1:]
    else:
        if '}' in line.split(' ', 1)[0]:
            raise ParseError('Unbalanced braces', line=line_no)
        name, _, rest = line.partition(' ')
        labels = ()
    if not METRIC_NAME_RE.match(name):
        raise ParseError(f'Invalid metric name {name!r}', line=line_no)
    tokens = rest.split()
    if not tokens or len(tokens) > 2:
        raise ParseError(f'Expected "<value> [timestamp]" after {name}', line=line_no)
    try:
        value = float(tokens[0])
    except ValueError:
        raise ParseError(f'Bad sample value {tokens[0]!r}', line=line_no)
    timestamp = None
    if len(tokens) == 2:
        try:
            timestamp = int(tokens[1])
        except ValueError:
            raise ParseError(f'Bad sample timestamp {tokens[1]!r}', line=line_no)
    return ExpositionSample(name=name, labels=labels, value=value, timestamp=timestamp, raw_value=tokens[0])


class _DocumentBuilder(object):
    def __init__(self):
        self._families = []
        self._current = None

    def _family_for_metadata(self, name):
        if self._current is None or self._current.name != name:
            existing = next((family for family in self._families if family.name == name), None)
            if existing is None:
                existing = MetricFamily(name=name)
                self._families.append(existing)
            self._current = existing
        return self._current

    def help(self, name, text):
        self._family_for_metadata(name).help = text

    def type(self, name, kind, line_no):
        try:
            metric_kind = MetricKind(kind)
        except ValueError:
            raise ParseError(f'Unknown metric type {kind!r}', line=line_no)
        family = self._family_for_metadata(name)
        family.kind = metric_kind
        family.type_declared = True

    def sample(self, sample):
        if self._current is None or not self._current.accepts(sample.name):
            self._current = MetricFamily(name=sample.name)
            self._families.append(self._current)
        self._current.samples.append(sample)

    def build(self, raw_size):
        return ExpositionDocument(families=self._families, raw_size_bytes=raw_size)


def parse_exposition(data):
    """Parses a text exposition document from bytes, str or a binary/text stream."""
    if hasattr(data, 'read'):
        data = data.read()
    raw = data.encode('utf-8') if isinstance(data, str) else bytes(data)
    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as err:
        raise ParseError(f'Input is not UTF-8: {err}')
    builder = _DocumentBuilder()
    for line_no, line in enumerate(text.split('\n'), start=1):
        line = line.rstrip('\r')
        if not line.strip():
            continue
        if line.startswith('#'):
            parts = line.split(None, 3)
            if len(parts) >= 3 and parts[1] == 'HELP':
                builder.help(parts[2], parts[3] if len(parts) == 4 else '')
            elif len(parts) >= 4 and parts[1] == 'TYPE':
                builder.type(parts[2], parts[3].strip(), line_no)
            # any other comment is ignored
            continue
        builder.sample(parse_sample_line(line.strip(), line_no))
    return builder.build(len(raw))


def encode_sample(sample):
    labels = ''
    if sample.labels:
        labels = '{' + ','.join(f'{key}="{_escape(value)}"' for key, value in sample.labels) + '}'
    line = f'{sample.name}{labels} {sample.raw_value}'
    if sample.timestamp is not None:
        line += f' {sample.timestamp}'
    return line + '\n'


def encode_family(family, strip_help=False, strip_type=False):
    lines = []
    if family.help is not None and not strip_help:
        lines.append(f'# HELP {family.name} {family.help}\n')
    if family.type_declared and not strip_type:
        lines.append(f'# TYPE {family.name} {family.kind.value}\n')
    lines.extend(encode_sample(sample) for sample in family.samples)
    return ''.join(lines)


def format_value(value):
    """Fixed-width value text used by generated documents."""
    if math.isnan(value):
        return 'NaN'
    return f'{value:.6e}'
