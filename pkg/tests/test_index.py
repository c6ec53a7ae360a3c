import numpy as np
import pytest

from conftest import T0_MS
from fog_observability.core.errors import BadSelector
from fog_observability.core.fog.index import (FieldFilter, InvertedIndex, extract_fields, tokenize,
                                              within_distance_one)
from fog_observability.core.fog.node import enrich_log
from fog_observability.core.records import LogEntry


def test_tokenize_lowercases_and_splits():
    assert tokenize('Upload FAILED: truck-07/clip_3.mp4') == ['upload', 'failed', 'truck', '07', 'clip', '3', 'mp4']
    assert tokenize('') == []


def test_extract_fields_keeps_the_last_value():
    assert extract_fields('upload done latency_ms=42 seq=3 seq=4') == {'latency_ms': '42', 'seq': '4'}


@pytest.mark.parametrize('a, b, expected', [
    ('upload', 'upload', True),
    ('upload', 'uplaod', True),
    ('upload', 'uploads', True),
    ('upload', 'uplod', True),
    ('upload', 'xpload', True),
    ('upload', 'uplxxd', False),
    ('upload', 'up', False),
    ('upload', 'daolpu', False),
])
def test_distance_one(a, b, expected):
    assert within_distance_one(a, b) is expected
    assert within_distance_one(b, a) is expected


@pytest.mark.parametrize('text, actual, expected', [
    ('level=ERROR', 'ERROR', True),
    ('level=ERROR', 'WARN', False),
    ('latency_ms>40', '42', True),
    ('latency_ms>40', '40', False),
    ('latency_ms<=40', '40.0', True),
    ('latency_ms>40', 'slow', False),
    ('latency_ms=42', '42.0', True),
    ('region!=north', None, True),
    ('region=north', None, False),
])
def test_field_filters(text, actual, expected):
    assert FieldFilter.parse(text).accepts(actual) is expected


def test_malformed_filter():
    with pytest.raises(BadSelector):
        FieldFilter.parse('~~')


@pytest.fixture
def index(make_log):
    index = InvertedIndex('logs')
    messages = [
        ('upload failed latency_ms=120', 'ERROR'),
        ('upload done latency_ms=42', 'INFO'),
        ('gnss fix acquired', 'INFO'),
        ('upload done latency_ms=35', 'INFO'),
        ('Upload retry latency_ms=80', 'WARN'),
    ]
    for k, (message, level) in enumerate(messages):
        index.add(enrich_log(make_log(message=message, ts=T0_MS + 1000 * k, level=level)))
    return index


def _messages(entries):
    return [entry.message for entry in entries]


def test_terms_are_anded_and_results_newest_first(index):
    assert _messages(index.search('upload done')) == ['upload done latency_ms=35', 'upload done latency_ms=42']
    assert _messages(index.search('UPLOAD')) == ['Upload retry latency_ms=80', 'upload done latency_ms=35',
                                                 'upload done latency_ms=42', 'upload failed latency_ms=120']
    assert index.search('upload gnss') == []


def test_fuzzy_search_tolerates_one_edit(index):
    assert index.search('uplaod') == []
    assert len(index.search('uplaod', fuzzy=True)) == 4
    assert _messages(index.search('acqired', fuzzy=True)) == ['gnss fix acquired']


def test_filters_and_time_range(index):
    assert _messages(index.search('upload', filters=['latency_ms>40'])) == \
        ['Upload retry latency_ms=80', 'upload done latency_ms=42', 'upload failed latency_ms=120']
    assert _messages(index.search(filters=['level=ERROR'])) == ['upload failed latency_ms=120']
    assert _messages(index.search('upload', start=T0_MS + 1000, end=T0_MS + 4000)) == \
        ['upload done latency_ms=35', 'upload done latency_ms=42']


def test_empty_query_returns_everything_up_to_the_limit(index):
    assert len(index.search()) == 5
    assert _messages(index.search(limit=2)) == ['Upload retry latency_ms=80', 'upload done latency_ms=35']


def test_field_postings(index):
    assert index.field_postings('level', 'INFO') == [1, 2, 3]
    assert index.field_postings('latency_ms', 42) == [1]


def test_remove_keeps_postings_sorted(index):
    assert index.remove([0, 3, 99]) == 2
    assert len(index) == 3
    assert index.postings('upload') == [1, 4]
    assert 'failed' not in index.terms()
    assert index.posting_lists_sorted()
    index.add(index.get(1))
    assert index.postings('upload') == [1, 4, 5]


def test_spans_are_searchable_by_service_and_attribute(make_span):
    index = InvertedIndex('spans')
    index.add(make_span(span=1, service='region-aggregator', operation='aggregate_by_region', points='100'))
    index.add(make_span(span=2, parent=1, service='point-store', operation='load_points', start=T0_MS * 1000 + 5))
    assert [span.span_id for span in index.search('aggregator')] == ['0000000000000001']
    assert len(index.search(filters=['points=100'])) == 1
    assert len(index.search(filters=['duration>=1000'])) == 2


def test_search_matches_a_scan():
    rng = np.random.default_rng(9)
    vocabulary = ['upload', 'done', 'failed', 'clip', 'gnss', 'fix', 'retry', 'uplink', 'slow']
    index = InvertedIndex('logs')
    entries = []
    for _ in range(400):
        words = list(rng.choice(vocabulary, size=int(rng.integers(1, 5))))
        entry = LogEntry(source_timestamp=T0_MS + int(rng.integers(0, 100)) * 1000, device_id='truck-00',
                         source_file='app.log', level='INFO', message=' '.join(words))
        entries.append((index.add(entry), entry))
    for _ in range(1000):
        query = list(rng.choice(vocabulary, size=int(rng.integers(1, 3)), replace=False))
        start = T0_MS + int(rng.integers(0, 50)) * 1000
        expected = [(entry.timestamp_ms, doc_id) for doc_id, entry in entries
                    if set(query) <= set(entry.message.split()) and entry.timestamp_ms >= start]
        expected = [index.get(doc_id) for _, doc_id in sorted(expected, reverse=True)]
        assert index.search(' '.join(query), start=start) == expected
