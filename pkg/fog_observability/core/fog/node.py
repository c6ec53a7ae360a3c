"""Fog node: ingest, storage, queries, correlation, alerts and tiering over the three stores."""
import threading
from collections import namedtuple
from pathlib import Path

from fog_observability.core.errors import InvalidRecord, MalformedFrame, OdlcError, StorageFull
from fog_observability.core.fog.alerts import DEFAULT_MAX_EVENTS, AlertEngine, AlertRule
from fog_observability.core.fog.dedup import DedupTable
from fog_observability.core.fog.index import InvertedIndex, extract_fields
from fog_observability.core.fog.tiering import TieringPolicy, tiering_cycle
from fog_observability.core.fog.traces import assemble_trace, critical_path, dependency_graph
from fog_observability.core.fog.tsdb import TimeSeriesStore
from fog_observability.core.fog.wal import IngestLog
from fog_observability.core.model import DOMAINS, CorrelationWindow, InstrumentationDomain, correlation_score
from fog_observability.core.records import ObservabilityRecord, encode_payload
from fog_observability.core.wire.protocol import AckFrame, DataFrame, data_frame_size, decode_frame, encode_ack_frame
from fog_observability.utils.logger import get_logger

IngestResult = namedtuple('IngestResult', ['accepted', 'stored', 'duplicates'])


class CorrelationResult(namedtuple('CorrelationResult', ['window', 'metrics', 'logs', 'traces', 'score'])):
    def counts(self):
        return {
            InstrumentationDomain.METRIC.value: len(self.metrics),
            InstrumentationDomain.LOG.value: len(self.logs),
            InstrumentationDomain.TRACE.value: len(self.traces),
        }

    def to_dict(self, include_records=True):
        out = {'window': self.window.to_dict(), 'counts': self.counts(), 'score': self.score.to_dict()}
        if include_records:
            out['records'] = {
                InstrumentationDomain.METRIC.value: [sample.to_wire() for sample in self.metrics],
                InstrumentationDomain.LOG.value: [entry.to_wire() for entry in self.logs],
                InstrumentationDomain.TRACE.value: [span.to_wire() for span in self.traces],
            }
        return out


def enrich_log(entry):
    """Adds `key=value` tokens of the message as fields; fields already present win."""
    extracted = extract_fields(entry.message)
    if not extracted:
        return entry
    extracted.update(entry.field_map())
    return entry.with_fields(sorted(extracted.items()))


class FogNode(object):
    def __init__(self, data_dir=None, head_max_samples=4096, dedup_keys=1 << 16, storage_limit_bytes=None,
                 alert_rules=(), alert_lookback_s=300.0, alert_max_events=DEFAULT_MAX_EVENTS):
        self.data_dir = Path(data_dir) if data_dir else None
        self.tsdb = TimeSeriesStore(head_max_samples=head_max_samples,
                                    data_dir=self.data_dir / 'tsdb' if self.data_dir else None)
        self.logs = InvertedIndex('logs')
        self.spans = InvertedIndex('spans')
        self.dedup = DedupTable(dedup_keys)
        self.storage_limit_bytes = storage_limit_bytes
        self.alert_rules = [rule if isinstance(rule, AlertRule) else AlertRule.from_dict(rule) for rule in alert_rules]
        self.alerts = AlertEngine(self.tsdb, log_path=self.data_dir / 'alerts.jsonl' if self.data_dir else None,
                                  lookback_s=alert_lookback_s, max_events=alert_max_events)
        self.stored_bytes = {domain: 0 for domain in DOMAINS}
        self.ingested = {domain: 0 for domain in DOMAINS}
        self.duplicates = {domain: 0 for domain in DOMAINS}
        self.malformed_frames = 0
        self.bytes_received = 0
        self.storage_full = 0
        self.tiering_skipped = 0
        self.tiering_failures = 0
        self._lock = threading.RLock()
        self._logger = get_logger().getChild('fog')
        self.wal = None
        if self.data_dir is not None:
            self.wal = IngestLog(self.data_dir / 'ingest.wal')
            self._recover()

    @classmethod
    def from_cfg(cls, cfg, data_dir=None):
        return cls(data_dir=data_dir or cfg.fog.data_dir, head_max_samples=int(cfg.fog.head_max_samples),
                   dedup_keys=int(cfg.fog.dedup_keys),
                   storage_limit_bytes=int(cfg.fog.storage_limit_bytes) if cfg.fog.storage_limit_bytes else None,
                   alert_rules=list(cfg.alerts.rules or ()), alert_max_events=int(cfg.alerts.max_events))

    def _recover(self):
        replayed = 0
        with self._lock:
            for (device_id, domain), marks in self.wal.read_marks().items():
                self.dedup.stream(device_id, domain).restore(marks)
            for entry in self.wal.replay():
                record = ObservabilityRecord.from_line(entry.domain, entry.line)
                stream = self.dedup.stream(record.device_id, entry.domain)
                if entry.batch_seq is not None:
                    stream.complete(entry.batch_seq)
                if record.dedup_key in stream:
                    continue
                self._route(record)
                stream.add(record.dedup_key, -1 if entry.batch_seq is None else entry.batch_seq)
                replayed += 1
        if replayed:
            self._logger.info(f'Recovered {replayed} records from the ingest log')

    # --- ingest
    def _route(self, record):
        payload = record.payload
        if record.domain == InstrumentationDomain.METRIC:
            self.tsdb.append(payload)
        elif record.domain == InstrumentationDomain.LOG:
            self.logs.add(enrich_log(payload))
        else:
            self.spans.add(payload)
        self.stored_bytes[record.domain] += record.encoded_size
        self.ingested[record.domain] += 1

    def total_stored_bytes(self):
        return sum(self.stored_bytes.values())

    def ingest_frame(self, frame):
        """Stores the new records of a data frame; returns the ack to send back.

        Every record is accounted in the ack, duplicates included.
        """
        try:
            records = [ObservabilityRecord.from_line(frame.domain, line) for line in frame.lines]
        except InvalidRecord as err:
            self.malformed_frames += 1
            raise MalformedFrame(f'Frame {frame.batch_seq} from {frame.device_id} has a bad record: {err.message}',
                                 device_id=frame.device_id, batch_seq=frame.batch_seq)
        self.bytes_received += data_frame_size(sum(record.encoded_size for record in records))
        result = self.ingest_records(frame.device_id, frame.domain, records, batch_seq=frame.batch_seq)
        return AckFrame(frame.device_id, frame.domain, frame.batch_seq, result.accepted)

    def ingest_records(self, device_id, domain, records, batch_seq=None):
        """Stores the records not seen before.

        A batch at or below the stream's dedup horizon was completed before its keys were forgotten, so none of
        its records are new.
        """
        with self._lock:
            stream = self.dedup.stream(device_id, domain)
            fresh, keys = [], set()
            for record in () if stream.beyond_horizon(batch_seq) else records:
                if record.dedup_key in keys or record.dedup_key in stream:
                    continue
                keys.add(record.dedup_key)
                fresh.append(record)
            incoming = sum(record.encoded_size for record in fresh)
            if self.storage_limit_bytes is not None and self.total_stored_bytes() + incoming > self.storage_limit_bytes:
                self.storage_full += 1
                raise StorageFull(f'Storing {incoming} more bytes exceeds the {self.storage_limit_bytes} byte limit',
                                  device_id=device_id)
            if self.wal is not None and fresh:
                self.wal.append(domain, [record.line for record in fresh], batch_seq=batch_seq)
            for record in fresh:
                self._route(record)
                stream.add(record.dedup_key, -1 if batch_seq is None else batch_seq)
            if batch_seq is not None:
                stream.complete(batch_seq)
            self.duplicates[domain] += len(records) - len(fresh)
        return IngestResult(accepted=len(records), stored=len(fresh), duplicates=len(records) - len(fresh))

    def ingest_batch(self, data):
        """Frame bytes (length prefix included) in, ack frame bytes out."""
        try:
            frame = decode_frame(data)
        except MalformedFrame:
            self.malformed_frames += 1
            raise
        if not isinstance(frame, DataFrame):
            self.malformed_frames += 1
            raise MalformedFrame('Expected a data frame')
        ack = self.ingest_frame(frame)
        return encode_ack_frame(ack.device_id, ack.domain, ack.batch_seq, ack.accepted)

    # --- queries
    def query_range(self, selector, start, end, aggregation='raw', step_s=None):
        return self.tsdb.query_range(selector, start, end, aggregation=aggregation, step_s=step_s)

    def search_logs(self, query='', filters=(), start=None, end=None, fuzzy=False, limit=None):
        return self.logs.search(query, filters=filters, start=start, end=end, fuzzy=fuzzy, limit=limit)

    def trace_spans(self, trace_id):
        return [self.spans.get(doc_id) for doc_id in self.spans.field_postings('trace_id', trace_id)]

    def assemble_trace(self, trace_id):
        return assemble_trace(trace_id, self.trace_spans(trace_id))

    def critical_path(self, trace_id):
        return critical_path(self.assemble_trace(trace_id))

    def dependency_graph(self, start=None, end=None):
        by_id = {(span.trace_id, span.span_id): span for _, span in self.spans.documents()}
        children = [span for _, span in self.spans.documents(start, end)]
        return dependency_graph(children, lambda span: by_id.get((span.trace_id, span.parent_span_id)))

    def correlate(self, window):
        """Records of every domain inside the window; spans count when their run overlaps it."""
        devices = window.device_filter
        metrics = self.tsdb.samples(window.start, window.end, device_filter=devices)
        logs = [entry for _, entry in self.logs.documents(window.start, window.end)
                if window.accepts_device(entry.device_id)]
        start_us, end_us = window.start * 1000, window.end * 1000
        traces = [span for _, span in self.spans.documents()
                  if window.accepts_device(span.device_id) and span.start < end_us
                  and max(span.end, span.start + 1) > start_us]
        counts = {InstrumentationDomain.METRIC: len(metrics), InstrumentationDomain.LOG: len(logs),
                  InstrumentationDomain.TRACE: len(traces)}
        return CorrelationResult(window, metrics, logs, traces, correlation_score(counts))

    def evaluate_alerts(self, now_ms, rules=None):
        return self.alerts.evaluate(self.alert_rules if rules is None else rules, now_ms)

    # --- tiering
    def records_before(self, domain, cutoff):
        """(handle, ObservabilityRecord) of every stored record older than `cutoff`."""
        domain = InstrumentationDomain.parse(domain)
        if domain == InstrumentationDomain.METRIC:
            return [(sample, ObservabilityRecord.wrap(sample)) for sample in self.tsdb.samples(end=cutoff)]
        index = self.logs if domain == InstrumentationDomain.LOG else self.spans
        return [(doc_id, ObservabilityRecord.wrap(payload)) for doc_id, payload in index.documents(end=cutoff)]

    def remove_records(self, domain, entries):
        domain = InstrumentationDomain.parse(domain)
        with self._lock:
            if domain == InstrumentationDomain.METRIC:
                self.tsdb.delete_samples([handle for handle, _ in entries])
            else:
                index = self.logs if domain == InstrumentationDomain.LOG else self.spans
                index.remove([handle for handle, _ in entries])
            self.stored_bytes[domain] -= sum(record.encoded_size for _, record in entries)

    def all_records(self):
        for sample in self.tsdb.samples():
            yield InstrumentationDomain.METRIC, encode_payload(sample)
        for _, entry in self.logs.documents():
            yield InstrumentationDomain.LOG, encode_payload(entry)
        for _, span in self.spans.documents():
            yield InstrumentationDomain.TRACE, encode_payload(span)

    def checkpoint(self):
        """Rewrites the ingest log with the stored records.

        Keys of records gone from the stores are not restored on recovery, so every completed batch is written
        as past the horizon.
        """
        if self.wal is not None:
            with self._lock:
                marks = {key: stream.marks(horizon=max(stream.horizon, stream.high_watermark))
                         for key, stream in self.dedup.items()}
                self.wal.checkpoint(self.all_records(), marks=marks)

    def tiering_cycle(self, policy, now_ms, **kwargs):
        with self._lock:
            return tiering_cycle(self, policy, now_ms, **kwargs)

    def record_count(self, domain=None):
        counts = {InstrumentationDomain.METRIC: len(self.tsdb), InstrumentationDomain.LOG: len(self.logs),
                  InstrumentationDomain.TRACE: len(self.spans)}
        return counts[InstrumentationDomain.parse(domain)] if domain is not None else sum(counts.values())

    def stats(self):
        return {
            'records': {domain.value: self.record_count(domain) for domain in DOMAINS},
            'stored_bytes': {domain.value: self.stored_bytes[domain] for domain in DOMAINS},
            'ingested': {domain.value: self.ingested[domain] for domain in DOMAINS},
            'duplicates': {domain.value: self.duplicates[domain] for domain in DOMAINS},
            'malformed_frames': self.malformed_frames,
            'bytes_received': self.bytes_received,
            'storage_full': self.storage_full,
            'tiering_skipped': self.tiering_skipped,
            'tiering_failures': self.tiering_failures,
            'bad_alert_rules': self.alerts.bad_rules,
            'batch_high_watermarks': self.dedup.high_watermarks(),
        }

    def handle_query(self, request):
        """One query API request (a dict with `kind`) to a JSON-friendly response dict."""
        kind = request.get('kind')
        try:
            handler = _QUERY_HANDLERS[kind]
        except KeyError:
            return {'error': 'OdlcError', 'message': f'Unknown query kind {kind!r}'}
        try:
            return handler(self, request)
        except OdlcError as err:
            return err.to_dict()
        except (KeyError, TypeError, ValueError) as err:
            return {'error': type(err).__name__, 'message': str(err)}

    def close(self):
        if self.wal is not None:
            self.wal.close()


def _window(request):
    devices = request.get('devices')
    return CorrelationWindow(int(request['start']), int(request['end']),
                             frozenset(devices) if devices is not None else None)


def _optional_int(request, key):
    return int(request[key]) if request.get(key) is not None else None


_QUERY_HANDLERS = {
    'range': lambda node, req: {'series': [series.to_dict() for series in node.query_range(
        req['selector'], int(req['start']), int(req['end']), req.get('aggregation', 'raw'), req.get('step_s'))]},
    'logs': lambda node, req: {'entries': [entry.to_wire() for entry in node.search_logs(
        req.get('query', ''), req.get('filters', ()), _optional_int(req, 'start'), _optional_int(req, 'end'),
        bool(req.get('fuzzy', False)), _optional_int(req, 'limit'))]},
    'trace': lambda node, req: node.assemble_trace(req['trace_id']).to_dict(),
    'critical': lambda node, req: {'spans': [span.to_wire() for span in node.critical_path(req['trace_id'])]},
    'deps': lambda node, req: node.dependency_graph(_optional_int(req, 'start'), _optional_int(req, 'end')).to_dict(),
    'correlate': lambda node, req: node.correlate(_window(req)).to_dict(bool(req.get('records', True))),
    'alerts': lambda node, req: {'events': [event.to_dict() for event in node.alerts.query(
        _optional_int(req, 'since'), req.get('rule_id'))], 'firing': node.alerts.firing()},
    'stats': lambda node, req: node.stats(),
}

QUERY_KINDS = tuple(_QUERY_HANDLERS)


def ingest_batch(node, data):
    return node.ingest_batch(data)


def tiering_policy_from_cfg(cfg, data_dir):
    """Without a configured sink, segments go to an `outbox` directory next to the fog data."""
    outbox = Path(data_dir) / 'outbox'
    if not cfg.tiering.sink:
        outbox.mkdir(parents=True, exist_ok=True)
    return TieringPolicy.from_cfg(cfg.tiering, default_sink=str(outbox))
