"""Edge agent: collectors, staging and transmission running side by side on the device."""
import socketserver
import threading

from fog_observability.core.cfg_utils import load_weight_profile
from fog_observability.core.edge.collectors import CollectorConfig, MetricCollector, collect_metrics, get_metric_source
from fog_observability.core.edge.logs import LogHarvester
from fog_observability.core.edge.planner import BatchPlanner, LinkState
from fog_observability.core.edge.spans import SpanRecorder
from fog_observability.core.edge.staging import StagingStore
from fog_observability.core.edge.transmit import Transmitter
from fog_observability.core.errors import InvalidRecord, RecordTooLarge
from fog_observability.core.exposition.reduction import ReductionPolicy
from fog_observability.core.model import DOMAINS, EPSILON_OVER, InstrumentationDomain, OverheadScore
from fog_observability.core.records import ObservabilityRecord, TraceSpan
from fog_observability.core.wire.connection import SocketConnection, parse_address
from fog_observability.utils import path_resolver
from fog_observability.utils.clock import SystemClock
from fog_observability.utils.logger import get_logger
from fog_observability.utils.structured import loads_line, read_json, write_json_atomic


class AgentState(object):
    """Log offsets and next batch sequence numbers, synced after staging and ack events."""

    def __init__(self, path):
        self.path = path
        state = read_json(path, default={}) if path is not None else {}
        self.offsets = state.get('offsets', {})
        self.batch_seq = state.get('batch_seq', {})
        self._lock = threading.Lock()

    def save(self, offsets, batch_seq):
        with self._lock:
            self.offsets = dict(offsets)
            self.batch_seq = dict(batch_seq)
            if self.path is not None:
                write_json_atomic(self.path, {'offsets': self.offsets, 'batch_seq': self.batch_seq})


class _SpanIngestHandler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            if not line.strip():
                continue
            try:
                span = TraceSpan.from_wire(loads_line(line))
            except (InvalidRecord, ValueError, KeyError, TypeError) as err:
                self.server.agent.logger.warning(f'Dropping malformed span: {err}')
                continue
            self.server.agent.stage_payload(span)


class _SpanIngestServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class EdgeAgent(object):
    def __init__(self, cfg, clock=None, connection=None, weights=None, metric_source=None):
        self.cfg = cfg
        self.clock = clock or SystemClock()
        self.logger = get_logger().getChild('edge')
        self.device_id = str(cfg.device.id)
        self.weights = weights or load_weight_profile(cfg.weights.profile)
        self.collector_config = CollectorConfig.from_cfg(cfg, self.weights)
        data_dir = cfg.device.data_dir or path_resolver.resolve_data_path(f'edge/{self.device_id}')
        self.state = AgentState(cfg.logs.state_file or f'{data_dir}/state.json')
        self.planner = BatchPlanner(self.device_id, max_batch_bytes=int(cfg.transmit.max_batch_bytes),
                                    next_seq=self.state.batch_seq)
        self.store = StagingStore(int(cfg.staging.capacity_bytes), self.weights,
                                  high_watermark=float(cfg.staging.high_watermark),
                                  max_record_bytes=self.planner.max_record_bytes)
        self.policy = ReductionPolicy.from_cfg(cfg.reduction, cfg.exposition.collectors)
        source = metric_source or get_metric_source(self.collector_config.metric_source, cfg)
        self.metric_collector = MetricCollector(self.collector_config, source, self.device_id, self.clock,
                                                self.policy)
        self.harvester = LogHarvester(self.collector_config.log_paths, self.device_id, self.clock,
                                      offsets=self.state.offsets, drop_fields=list(cfg.logs.drop_fields or ()))
        self.recorder = SpanRecorder('edge-agent', self.clock, sink=self.stage_payload, device_id=self.device_id)
        self.transmitter = Transmitter(self.device_id, self.store, self.planner,
                                       timeout_s=float(cfg.transmit.timeout_s), on_ack=self._on_ack)
        self.connection = connection or SocketConnection(cfg.fog.address)
        self.overheads = {domain: OverheadScore(EPSILON_OVER) for domain in DOMAINS}
        self.admission_failures = 0
        self._stop = threading.Event()
        self._threads = []
        self._span_server = None

    def stage_payload(self, payload):
        if not self.collector_config.enabled(payload.domain):
            return None
        try:
            return self.store.stage(ObservabilityRecord.wrap(payload))
        except RecordTooLarge as err:
            self.admission_failures += 1
            self.logger.warning(err.message)
            return None

    def _save_state(self):
        self.state.save(self.harvester.offsets, self.planner.seq_state())

    def _on_ack(self, batch, ack):
        self._save_state()

    def collect_logs_once(self):
        staged = 0
        for line in self.harvester.harvest():
            self.stage_payload(line.entry)
            self.harvester.commit(line.path, line.end_offset, line.inode)
            staged += 1
        if staged:
            self._save_state()
        return staged

    def transmit_cycle(self, link=None):
        link = link or LinkState(available=True, bandwidth_budget_bytes_per_cycle=int(self.cfg.link.budget_bytes))
        plan = self.planner.plan(self.store, link, self.weights, self.overheads)
        if not plan:
            return []
        statuses = self.transmitter.transmit(plan, self.connection, link)
        self._save_state()
        return statuses

    def _metric_loop(self):
        for emission in collect_metrics(self.metric_collector, stop_event=self._stop):
            for sample in emission.samples:
                self.stage_payload(sample)

    def _log_loop(self):
        while not self._stop.is_set():
            self.collect_logs_once()
            self._stop.wait(float(self.cfg.logs.poll_interval_s))

    def _transmit_loop(self):
        while not self._stop.is_set():
            self.transmit_cycle()
            self._stop.wait(float(self.cfg.link.cycle_s))

    def _start_span_ingest(self):
        host, port = parse_address(self.cfg.traces.ingest_address)
        self._span_server = _SpanIngestServer((host, port), _SpanIngestHandler)
        self._span_server.agent = self
        self._spawn(self._span_server.serve_forever, 'span-ingest')

    def _spawn(self, target, name):
        thread = threading.Thread(target=target, name=f'odlc-{name}', daemon=True)
        thread.start()
        self._threads.append(thread)

    def start(self):
        if self.collector_config.enabled(InstrumentationDomain.METRIC):
            self._spawn(self._metric_loop, 'metrics')
        if self.collector_config.enabled(InstrumentationDomain.LOG) and self.collector_config.log_paths:
            self._spawn(self._log_loop, 'logs')
        if self.collector_config.enabled(InstrumentationDomain.TRACE):
            self._start_span_ingest()
        self._spawn(self._transmit_loop, 'transmit')
        self.logger.info(f'Edge agent {self.device_id} started, weights {self.weights.to_dict()}')

    def stop(self):
        self._stop.set()
        if self._span_server is not None:
            self._span_server.shutdown()
            self._span_server.server_close()
        for thread in self._threads:
            thread.join(timeout=5)
        self.connection.close()
        self._save_state()

    def wait(self, duration_s=None):
        self._stop.wait(duration_s)
