from pathlib import Path

import numpy as np
import pytest

from conftest import T0_MS, trace_id
from fog_observability.core.archive.segment import read_segment, write_segment
from fog_observability.core.errors import (ChecksumMismatch, InvalidInterval, MalformedFrame, SinkUnavailable,
                                            StorageFull)
from fog_observability.core.fog.alerts import AlertRule
from fog_observability.core.fog.dedup import DedupTable, RecentKeys
from fog_observability.core.fog.node import QUERY_KINDS, FogNode, enrich_log, tiering_policy_from_cfg
from fog_observability.core.fog.tiering import TieringPolicy
from fog_observability.core.fog.wal import IngestLog
from fog_observability.core.model import CorrelationWindow, InstrumentationDomain
from fog_observability.core.records import ObservabilityRecord, decode_payload
from fog_observability.core.wire.protocol import DataFrame, decode_frame, encode_ack_frame, encode_data_frame

METRIC, LOG, TRACE = InstrumentationDomain.METRIC, InstrumentationDomain.LOG, InstrumentationDomain.TRACE


def _frame(payloads, seq=1, device='truck-00'):
    records = [ObservabilityRecord.wrap(payload) for payload in payloads]
    return DataFrame(device, records[0].domain, seq, [record.line for record in records])


@pytest.fixture
def logs(make_log):
    return [make_log(message=f'clip uploaded seq={k} latency_ms={40 + k}', ts=T0_MS + 100 * k) for k in range(4)]


def test_frame_is_stored_and_acked(logs):
    node = FogNode()
    ack = node.ingest_frame(_frame(logs, seq=3))
    assert (ack.device_id, ack.domain, ack.batch_seq, ack.accepted) == ('truck-00', LOG, 3, 4)
    assert node.record_count(LOG) == 4
    assert node.stats()['batch_high_watermarks'] == {'truck-00/log': 3}
    assert node.bytes_received == len(encode_data_frame('truck-00', LOG, 3, _frame(logs).lines))


def test_resent_frames_are_acked_but_stored_once(logs):
    node = FogNode()
    node.ingest_frame(_frame(logs[:2]))
    ack = node.ingest_frame(_frame(logs, seq=2))
    assert ack.accepted == 4
    assert node.record_count(LOG) == 4
    assert node.duplicates[LOG] == 2
    result = node.ingest_records('truck-00', LOG, [ObservabilityRecord.wrap(logs[0])] * 2)
    assert (result.accepted, result.stored, result.duplicates) == (2, 0, 2)


def test_same_content_from_another_device_is_kept(logs, make_log):
    node = FogNode()
    node.ingest_frame(_frame(logs[:1]))
    node.ingest_frame(_frame([make_log(message=logs[0].message, device='truck-01')], device='truck-01'))
    assert node.record_count(LOG) == 2


def test_a_bad_record_rejects_the_frame(logs):
    node = FogNode()
    frame = _frame(logs)
    frame = frame._replace(lines=frame.lines[:1] + [b'{"message": 3}\n'])
    with pytest.raises(MalformedFrame):
        node.ingest_frame(frame)
    assert node.record_count() == 0
    assert node.malformed_frames == 1


def test_ingest_batch_speaks_frames(logs):
    node = FogNode()
    ack = decode_frame(node.ingest_batch(encode_data_frame('truck-00', LOG, 5, _frame(logs).lines)))
    assert (ack.batch_seq, ack.accepted) == (5, 4)
    with pytest.raises(MalformedFrame):
        node.ingest_batch(encode_ack_frame('truck-00', LOG, 5, 4))
    with pytest.raises(MalformedFrame):
        node.ingest_batch(b'\x00\x00\x00\x01')
    assert node.malformed_frames == 2


def test_storage_limit(logs):
    node = FogNode(storage_limit_bytes=ObservabilityRecord.wrap(logs[0]).encoded_size * 2 + 10)
    node.ingest_frame(_frame(logs[:2]))
    with pytest.raises(StorageFull):
        node.ingest_frame(_frame(logs[2:], seq=2))
    assert node.record_count(LOG) == 2
    assert node.storage_full == 1
    # duplicates take no room
    node.ingest_frame(_frame(logs[:2], seq=2))


def test_enrich_log_adds_message_fields(make_log):
    entry = enrich_log(make_log(message='upload done latency_ms=42 seq=3', fields=[('seq', '9')]))
    assert entry.field_map() == {'latency_ms': '42', 'seq': '9'}
    plain = make_log(message='gnss fix')
    assert enrich_log(plain) is plain


def test_logs_are_searchable_by_enriched_fields(logs):
    node = FogNode()
    node.ingest_frame(_frame(logs))
    assert [entry.message for entry in node.search_logs('clip', filters=['latency_ms>=42'])] == \
        ['clip uploaded seq=3 latency_ms=43', 'clip uploaded seq=2 latency_ms=42']


@pytest.fixture
def mixed(logs, make_sample, make_span, make_log):
    node = FogNode()
    node.ingest_frame(_frame([make_sample(value=float(k), ts=T0_MS + 1000 * k) for k in range(3)]))
    node.ingest_frame(_frame(logs))
    node.ingest_frame(_frame([
        make_span(span=1, start=T0_MS * 1000 + 200_000, duration=5000, service='region-aggregator'),
        make_span(span=2, parent=1, start=T0_MS * 1000 + 201_000, duration=2000, service='point-store'),
    ]))
    node.ingest_frame(_frame([make_log(message='other truck', device='truck-01', ts=T0_MS)], device='truck-01'))
    return node


def test_correlation_counts_every_domain(mixed):
    result = mixed.correlate(CorrelationWindow(T0_MS, T0_MS + 1000))
    assert result.counts() == {'metric': 1, 'log': 5, 'trace': 2}
    assert result.score.occupied_domains == 3
    assert result.score.score == 1.0


def test_correlation_filters_devices_and_time(mixed):
    result = mixed.correlate(CorrelationWindow(T0_MS, T0_MS + 1000, frozenset({'truck-01'})))
    assert result.counts() == {'metric': 0, 'log': 1, 'trace': 0}
    assert result.score.score == 0.0
    later = mixed.correlate(CorrelationWindow(T0_MS + 1500, T0_MS + 2500))
    assert later.counts() == {'metric': 1, 'log': 0, 'trace': 0}
    assert 'records' not in later.to_dict(include_records=False)


def test_span_overlapping_the_window_start_counts(mixed):
    result = mixed.correlate(CorrelationWindow(T0_MS + 203, T0_MS + 204))
    assert result.counts()['trace'] == 1


@pytest.mark.slow
def test_correlation_matches_a_scan(make_sample, make_log, make_span):
    rng = np.random.default_rng(23)
    devices = ['truck-00', 'truck-01', 'truck-02']
    node = FogNode()
    samples, entries, spans = [], [], []
    for number, device in enumerate(devices):
        samples.append([make_sample(value=float(k), ts=T0_MS + 6000 * k + int(rng.integers(0, 6000)), device=device)
                        for k in range(100)])
        entries.append([make_log(message=f'clip {k} from {device}', ts=T0_MS + int(rng.integers(0, 600_000)),
                                 device=device) for k in range(100)])
        spans.append([make_span(span=100 * number + k + 1, device=device, duration=int(rng.integers(0, 5_000_000)),
                                start=T0_MS * 1000 + int(rng.integers(0, 600_000_000))) for k in range(100)])
        for payloads in (samples[-1], entries[-1], spans[-1]):
            node.ingest_frame(_frame(payloads, device=device))
    samples, entries, spans = (sum(groups, []) for groups in (samples, entries, spans))
    for _ in range(1000):
        start = T0_MS + int(rng.integers(0, 600_000))
        end = start + int(rng.integers(1, 120_000))
        chosen = frozenset(device for device in devices if rng.random() < 0.5)
        devices_filter = chosen if rng.random() < 0.5 else None
        result = node.correlate(CorrelationWindow(start, end, devices_filter))

        def accepted(record):
            return devices_filter is None or record.device_id in devices_filter

        assert sorted((sample.device_id, sample.source_timestamp) for sample in result.metrics) == \
            sorted((sample.device_id, sample.source_timestamp) for sample in samples
                   if accepted(sample) and start <= sample.source_timestamp < end)
        assert sorted(entry.message for entry in result.logs) == \
            sorted(entry.message for entry in entries if accepted(entry) and start <= entry.source_timestamp < end)
        # a zero-length span occupies its start microsecond
        assert sorted(span.span_id for span in result.traces) == \
            sorted(span.span_id for span in spans if accepted(span) and span.start < end * 1000
                   and span.start + max(span.duration, 1) > start * 1000)


def test_trace_queries(mixed):
    tree = mixed.assemble_trace(trace_id(1))
    assert tree.depth == 2
    assert [span.service for span in mixed.critical_path(trace_id(1))] == ['region-aggregator', 'point-store']
    graph = mixed.dependency_graph()
    assert graph.edge('region-aggregator', 'point-store').count == 1


def test_query_api_kinds(mixed):
    assert set(QUERY_KINDS) == {'range', 'logs', 'trace', 'critical', 'deps', 'correlate', 'alerts', 'stats'}
    series = mixed.handle_query({'kind': 'range', 'selector': 'node_load1', 'start': T0_MS, 'end': T0_MS + 10_000})
    assert series['series'][0]['points'] == [[T0_MS, 0.0], [T0_MS + 1000, 1.0], [T0_MS + 2000, 2.0]]
    entries = mixed.handle_query({'kind': 'logs', 'query': 'clip', 'limit': 1})['entries']
    assert [entry['message'] for entry in entries] == ['clip uploaded seq=3 latency_ms=43']
    assert mixed.handle_query({'kind': 'trace', 'trace_id': trace_id(1)})['depth'] == 2
    assert len(mixed.handle_query({'kind': 'critical', 'trace_id': trace_id(1)})['spans']) == 2
    assert mixed.handle_query({'kind': 'deps'})['nodes'] == ['point-store', 'region-aggregator']
    correlated = mixed.handle_query({'kind': 'correlate', 'start': T0_MS, 'end': T0_MS + 1000, 'records': False})
    assert correlated['score'] == {'occupied_domains': 3, 'score': 1.0}
    assert mixed.handle_query({'kind': 'alerts'}) == {'events': [], 'firing': []}
    assert mixed.handle_query({'kind': 'stats'})['records'] == {'metric': 3, 'log': 5, 'trace': 2}


@pytest.mark.parametrize('request_, error', [
    ({'kind': 'teleport'}, 'OdlcError'),
    ({'kind': 'trace', 'trace_id': 'f' * 32}, 'TraceNotFound'),
    ({'kind': 'range', 'selector': 'node_load1{', 'start': 0, 'end': 1}, 'BadSelector'),
    ({'kind': 'range', 'selector': 'node_load1', 'start': 5, 'end': 1}, 'InvalidRange'),
    ({'kind': 'correlate', 'start': 0}, 'KeyError'),
])
def test_query_errors_come_back_as_responses(mixed, request_, error):
    assert mixed.handle_query(request_)['error'] == error


def test_configured_alert_rules(mixed):
    rule = {'id': 'load', 'selector': 'node_load1', 'comparator': '>=', 'threshold': 2}
    rules = FogNode(alert_rules=[rule]).alert_rules
    assert rules == [AlertRule('load', 'node_load1', '>=', 2.0)]
    [event] = mixed.evaluate_alerts(T0_MS + 2000, rules)
    assert event.rule_id == 'load'
    assert mixed.handle_query({'kind': 'alerts'})['firing'] == ['load']


def test_node_recovers_from_its_ingest_log(tmp_path, logs, make_sample):
    node = FogNode(data_dir=tmp_path, head_max_samples=2)
    node.ingest_frame(_frame(logs))
    node.ingest_frame(_frame([make_sample(value=float(k), ts=T0_MS + 1000 * k) for k in range(3)]))
    node.close()
    recovered = FogNode(data_dir=tmp_path, head_max_samples=2)
    assert recovered.record_count(LOG) == 4
    assert recovered.record_count(METRIC) == 3
    recovered.ingest_frame(_frame(logs, seq=2))
    assert recovered.record_count(LOG) == 4
    assert recovered.duplicates[LOG] == 4
    recovered.close()


def test_torn_last_entry_is_ignored(tmp_path, logs):
    wal = IngestLog(tmp_path / 'ingest.wal')
    wal.append(LOG, [ObservabilityRecord.wrap(entry).line for entry in logs[:2]])
    wal.close()
    with open(tmp_path / 'ingest.wal', 'ab') as fout:
        fout.write(b'{"domain":"log","line":"{\\"sour')
    replayed = list(IngestLog(tmp_path / 'ingest.wal').replay())
    assert [entry.domain for entry in replayed] == [LOG, LOG]
    assert replayed[0].line == ObservabilityRecord.wrap(logs[0]).line
    assert replayed[0].batch_seq is None


def test_checkpoint_rewrites_the_log(tmp_path, logs):
    wal = IngestLog(tmp_path / 'ingest.wal', fsync=False)
    wal.append('log', [ObservabilityRecord.wrap(entry).line for entry in logs])
    wal.checkpoint([(LOG, ObservabilityRecord.wrap(logs[3]).line)])
    assert wal.entries == 1
    wal.append(LOG, [ObservabilityRecord.wrap(logs[0]).line])
    assert len(list(wal.replay())) == 2
    wal.close()


def test_recent_keys_forget_the_oldest():
    keys = RecentKeys(capacity=2)
    keys.add('a')
    keys.add('b')
    assert 'a' in keys
    keys.add('c')
    assert 'b' not in keys
    assert 'a' in keys and 'c' in keys
    keys.complete(4)
    keys.complete(2)
    assert keys.high_watermark == 4


def test_dedup_streams_are_per_device_and_domain():
    table = DedupTable(capacity=8)
    table.stream('truck-01', LOG).complete(3)
    table.stream('truck-00', TRACE).complete(1)
    table.stream('truck-00', METRIC).add('k')
    assert 'k' not in table.stream('truck-00', LOG)
    assert table.high_watermarks() == {'truck-00/metric': -1, 'truck-00/log': -1, 'truck-00/trace': 1,
                                         'truck-01/log': 3}


def test_completed_seqs_are_tracked_out_of_order():
    keys = RecentKeys(capacity=2)
    for seq in (1, 2, 4, 5):
        keys.complete(seq)
    assert keys.completed_floor == 2
    assert keys.completed(4) and not keys.completed(3)
    keys.complete(3)
    assert keys.completed_floor == 5
    for seq, key in ((1, 'a'), (2, 'b'), (3, 'c')):
        keys.add(key, seq)
    assert keys.horizon == 1
    assert keys.beyond_horizon(1)
    assert not keys.beyond_horizon(2)
    assert not keys.beyond_horizon(None)


def test_resend_past_the_dedup_window_is_not_stored_again(make_log):
    node = FogNode(dedup_keys=4)
    batches = {seq: [make_log(message=f'clip uploaded seq={seq}', ts=T0_MS + seq)] for seq in range(1, 11)}
    for seq, batch in batches.items():
        if seq != 3:
            node.ingest_frame(_frame(batch, seq=seq))
    assert node.record_count(LOG) == 9
    ack = node.ingest_frame(_frame(batches[1], seq=1))
    assert ack.accepted == 1
    assert node.record_count(LOG) == 9
    assert node.duplicates[LOG] == 1
    # never completed, so stored even though later batches pushed the window past it
    node.ingest_frame(_frame(batches[3], seq=3))
    assert node.record_count(LOG) == 10


def test_tiered_batches_stay_out_after_a_restart(tmp_path, make_log):
    node = FogNode(data_dir=tmp_path / 'fog')
    batches = {seq: [make_log(message=f'clip uploaded seq={seq}', ts=T0_MS + seq)] for seq in range(1, 4)}
    for seq, batch in batches.items():
        node.ingest_frame(_frame(batch, seq=seq))
    sink = tmp_path / 'sink'
    sink.mkdir()
    [segment] = node.tiering_cycle(TieringPolicy(age_limit_s=60, sink=str(sink)), now_ms=T0_MS + 120_000)
    assert segment.manifest.count == 3
    node.close()
    restarted = FogNode(data_dir=tmp_path / 'fog')
    assert restarted.record_count() == 0
    restarted.ingest_frame(_frame(batches[2], seq=2))
    assert restarted.record_count() == 0
    assert restarted.duplicates[LOG] == 1
    restarted.ingest_frame(_frame([make_log(message='clip uploaded seq=4', ts=T0_MS + 4)], seq=4))
    assert restarted.record_count(LOG) == 1
    restarted.close()


@pytest.fixture
def aged(tmp_path, logs, make_sample, make_span):
    node = FogNode(data_dir=tmp_path / 'fog')
    node.ingest_frame(_frame(logs))
    node.ingest_frame(_frame([make_sample(value=1.0, ts=T0_MS), make_sample(value=2.0, ts=T0_MS + 90_000)]))
    node.ingest_frame(_frame([make_span(span=1, start=T0_MS * 1000)]))
    sink = tmp_path / 'sink'
    sink.mkdir()
    return node, TieringPolicy(age_limit_s=60, sink=str(sink))


def test_tiering_moves_old_records_to_segments(aged, logs):
    node, policy = aged
    segments = node.tiering_cycle(policy, now_ms=T0_MS + 120_000)
    assert [segment.manifest.domain for segment in segments] == ['metric', 'log', 'trace']
    assert [segment.manifest.count for segment in segments] == [1, 4, 1]
    assert node.record_count() == 1
    archived = [decode_payload(LOG, line) for line in read_segment(segments[1].path).lines]
    assert [entry.message for entry in archived] == [entry.message for entry in logs]
    assert archived[0].field_map()['latency_ms'] == '40'
    node.close()
    restarted = FogNode(data_dir=node.data_dir)
    assert restarted.record_count() == 1
    restarted.close()


def test_tiering_without_a_sink_deletes_nothing(aged):
    node, _ = aged
    with pytest.raises(SinkUnavailable):
        node.tiering_cycle(TieringPolicy(age_limit_s=60, sink='/nonexistent/sink'), now_ms=T0_MS + 120_000)
    assert node.record_count() == 7


def test_unverifiable_segment_keeps_its_records(aged):
    node, policy = aged
    attempts = []

    def corrupting_writer(sink, domain, records):
        path, manifest = write_segment(sink, domain, records)
        attempts.append(path)
        data = bytearray(path.read_bytes())
        data[-30] ^= 0xFF
        path.write_bytes(bytes(data))
        return path, manifest

    with pytest.raises(ChecksumMismatch):
        node.tiering_cycle(policy, now_ms=T0_MS + 120_000, writer=corrupting_writer)
    assert len(attempts) == 2
    assert not attempts[-1].exists()
    assert node.record_count() == 7


def test_one_bad_domain_keeps_every_domain_in_the_fog(aged):
    node, policy = aged

    def log_corrupting_writer(sink, domain, records):
        path, manifest = write_segment(sink, domain, records)
        if InstrumentationDomain.parse(domain) == LOG:
            data = bytearray(path.read_bytes())
            data[-30] ^= 0xFF
            path.write_bytes(bytes(data))
        return path, manifest

    with pytest.raises(ChecksumMismatch):
        node.tiering_cycle(policy, now_ms=T0_MS + 120_000, writer=log_corrupting_writer)
    assert node.record_count(METRIC) == 2
    assert node.record_count() == 7
    assert list(Path(policy.sink).iterdir()) == []
    node.close()
    restarted = FogNode(data_dir=node.data_dir)
    assert restarted.record_count() == 7
    assert len(restarted.tiering_cycle(policy, now_ms=T0_MS + 120_000)) == 3
    assert restarted.record_count() == 1
    restarted.close()


def test_tiering_policy_validation(cfg, tmp_path):
    with pytest.raises(InvalidInterval):
        TieringPolicy(age_limit_s=0)
    assert TieringPolicy().cutoff_ms(T0_MS) == T0_MS - 7 * 24 * 3600 * 1000
    policy = tiering_policy_from_cfg(cfg, tmp_path / 'fog')
    assert policy.sink == str(tmp_path / 'fog' / 'outbox')
    assert (tmp_path / 'fog' / 'outbox').is_dir()
