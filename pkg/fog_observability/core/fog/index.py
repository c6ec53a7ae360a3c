"""Inverted index for log entries and trace spans."""
import operator
import re
import threading
from collections import defaultdict, namedtuple

from fog_observability.core.errors import BadSelector
from fog_observability.core.records import LogEntry, TraceSpan
from fog_observability.utils.logger import get_logger

_TOKEN_SPLIT_RE = re.compile(r'[^0-9A-Za-z]+')
_FIELD_RE = re.compile(r'(\w+)=(\S+)')
_FILTER_RE = re.compile(r'^\s*([A-Za-z_][\w.]*)\s*(>=|<=|!=|=|>|<)\s*(.*?)\s*$')

_NUMERIC_OPS = {
    '>': operator.gt,
    '>=': operator.ge,
    '<': operator.lt,
    '<=': operator.le,
}


def tokenize(text):
    """Lowercase tokens split on every non-alphanumeric character."""
    return [token for token in _TOKEN_SPLIT_RE.split((text or '').lower()) if token]


def extract_fields(message):
    """`key=value` tokens of a log message; a repeated key keeps its last value."""
    fields = {}
    for key, value in _FIELD_RE.findall(message or ''):
        fields[key] = value
    return fields


def within_distance_one(a, b):
    """True if `b` is at most one insertion, deletion, substitution or adjacent transposition from `a`."""
    if a == b:
        return True
    len_a, len_b = len(a), len(b)
    if abs(len_a - len_b) > 1:
        return False
    if len_a == len_b:
        diffs = [i for i in range(len_a) if a[i] != b[i]]
        if len(diffs) == 1:
            return True
        return (len(diffs) == 2 and diffs[1] == diffs[0] + 1
                and a[diffs[0]] == b[diffs[1]] and a[diffs[1]] == b[diffs[0]])
    if len_a > len_b:
        a, b = b, a
    # b is one character longer than a
    i = 0
    while i < len(a) and a[i] == b[i]:
        i += 1
    return a[i:] == b[i + 1:]


class FieldFilter(namedtuple('FieldFilter', ['field', 'op', 'value'])):
    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        if isinstance(text, (list, tuple)) and len(text) == 3:
            return cls(*text)
        match = _FILTER_RE.match(str(text))
        if not match:
            raise BadSelector(f'Malformed field filter {text!r}', selector=str(text))
        return cls(*match.groups())

    def accepts(self, actual):
        if actual is None:
            return self.op == '!='
        if self.op == '=':
            return _same_value(actual, self.value)
        if self.op == '!=':
            return not _same_value(actual, self.value)
        try:
            return _NUMERIC_OPS[self.op](float(actual), float(self.value))
        except ValueError:
            return False

    def __str__(self):
        return f'{self.field}{self.op}{self.value}'


def _same_value(actual, expected):
    if str(actual) == str(expected):
        return True
    try:
        return float(actual) == float(expected)
    except ValueError:
        return False


def document_fields(payload):
    """Fields kept in the field index of a document."""
    if isinstance(payload, LogEntry):
        fields = {'level': payload.level.value, 'device_id': payload.device_id, 'source_file': payload.source_file}
        fields.update(payload.field_map())
        return fields
    if isinstance(payload, TraceSpan):
        fields = {'service': payload.service, 'operation': payload.operation, 'trace_id': payload.trace_id,
                  'span_id': payload.span_id, 'device_id': payload.device_id, 'duration': str(payload.duration)}
        for key, value in payload.attributes:
            fields.setdefault(key, value)
        return fields
    raise TypeError(f'Cannot index {type(payload).__name__}')


def document_text(payload):
    if isinstance(payload, LogEntry):
        return payload.message
    return ' '.join((payload.service, payload.operation, payload.trace_id))


class InvertedIndex(object):
    """Term -> sorted doc ids, plus a field index and the documents themselves.

    Doc ids are assigned in insertion order, so appending keeps every posting list strictly increasing.
    """

    def __init__(self, name='index'):
        self.name = name
        self._docs = {}
        self._doc_ids = []
        self._postings = defaultdict(list)
        self._fields = defaultdict(lambda: defaultdict(list))
        self._by_length = defaultdict(set)
        self._next_id = 0
        self._lock = threading.RLock()
        self._logger = get_logger().getChild(name)

    def __len__(self):
        return len(self._docs)

    def __contains__(self, doc_id):
        return doc_id in self._docs

    def add(self, payload):
        with self._lock:
            doc_id = self._next_id
            self._next_id += 1
            self._docs[doc_id] = payload
            self._doc_ids.append(doc_id)
            for term in sorted(set(tokenize(document_text(payload)))):
                postings = self._postings[term]
                if not postings:
                    self._by_length[len(term)].add(term)
                postings.append(doc_id)
            for field, value in document_fields(payload).items():
                if value is not None:
                    self._fields[field][str(value)].append(doc_id)
            return doc_id

    def get(self, doc_id):
        return self._docs[doc_id]

    def postings(self, term):
        with self._lock:
            return list(self._postings.get(term, ()))

    def field_postings(self, field, value):
        with self._lock:
            return list(self._fields.get(field, {}).get(str(value), ()))

    def terms(self):
        return sorted(self._postings)

    def _expand(self, token):
        candidates = set()
        for length in (len(token) - 1, len(token), len(token) + 1):
            for term in self._by_length.get(length, ()):
                if within_distance_one(token, term):
                    candidates.add(term)
        return candidates

    def _match_terms(self, tokens, fuzzy):
        """Doc ids holding every token (AND); None when there is no term constraint."""
        matched = None
        for token in dict.fromkeys(tokens):
            if fuzzy:
                ids = set()
                for term in self._expand(token):
                    ids.update(self._postings[term])
            else:
                ids = set(self._postings.get(token, ()))
            matched = ids if matched is None else matched & ids
            if not matched:
                return set()
        return matched

    def search(self, query='', filters=(), start=None, end=None, fuzzy=False, limit=None):
        """Documents matching all query tokens and filters, newest first.

        A query with neither terms nor filters returns every document in the time range.
        """
        filters = [FieldFilter.parse(item) for item in filters or ()]
        tokens = tokenize(query)
        with self._lock:
            matched = self._match_terms(tokens, fuzzy) if tokens else None
            candidates = sorted(matched) if matched is not None else list(self._doc_ids)
            hits = []
            for doc_id in candidates:
                payload = self._docs[doc_id]
                timestamp = payload.timestamp_ms
                if start is not None and timestamp < start:
                    continue
                if end is not None and timestamp >= end:
                    continue
                if filters:
                    fields = document_fields(payload)
                    if not all(item.accepts(fields.get(item.field)) for item in filters):
                        continue
                hits.append((timestamp, doc_id, payload))
        hits.sort(key=lambda hit: (hit[0], hit[1]), reverse=True)
        payloads = [payload for _, _, payload in hits]
        return payloads[:limit] if limit is not None else payloads

    def documents(self, start=None, end=None):
        """(doc_id, payload) in insertion order, optionally limited to timestamps in [start, end)."""
        with self._lock:
            return [(doc_id, self._docs[doc_id]) for doc_id in self._doc_ids
                    if (start is None or self._docs[doc_id].timestamp_ms >= start)
                    and (end is None or self._docs[doc_id].timestamp_ms < end)]

    def remove(self, doc_ids):
        doc_ids = set(doc_ids) & set(self._docs)
        if not doc_ids:
            return 0
        with self._lock:
            for term in list(self._postings):
                postings = [doc_id for doc_id in self._postings[term] if doc_id not in doc_ids]
                if postings:
                    self._postings[term] = postings
                else:
                    del self._postings[term]
                    self._by_length[len(term)].discard(term)
            for field, values in self._fields.items():
                for value in list(values):
                    postings = [doc_id for doc_id in values[value] if doc_id not in doc_ids]
                    if postings:
                        values[value] = postings
                    else:
                        del values[value]
            for doc_id in doc_ids:
                del self._docs[doc_id]
            self._doc_ids = [doc_id for doc_id in self._doc_ids if doc_id not in doc_ids]
        self._logger.debug(f'Removed {len(doc_ids)} documents')
        return len(doc_ids)

    def posting_lists_sorted(self):
        return all(all(a < b for a, b in zip(postings, postings[1:])) for postings in self._postings.values())

