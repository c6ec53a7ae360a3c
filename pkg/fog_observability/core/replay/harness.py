"""End-to-end replays: edge agents, a fog node and the archive wired in one process on a virtual clock."""
import contextlib
import tempfile
import time
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import psutil
from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException
from termcolor import colored
from tqdm import tqdm

from fog_observability.core.archive.catalog import ArchiveCatalog
from fog_observability.core.archive.regions import aggregate_by_region, load_regions
from fog_observability.core.cfg_utils import load_config, load_weight_profile
from fog_observability.core.edge.agent import EdgeAgent
from fog_observability.core.edge.collectors import SyntheticSource
from fog_observability.core.edge.planner import LinkState
from fog_observability.core.edge.transmit import AckStatus
from fog_observability.core.errors import (ConnectionLost, InvalidInterval, MalformedFrame, NoSamples,
                                           ScenarioConfigError, StorageFull, TransmitTimeout)
from fog_observability.core.fog.node import FogNode
from fog_observability.core.fog.tiering import TieringPolicy
from fog_observability.core.meter.report import ARCHIVE, FOG, MeterBasis, MeterReport, compose_outcome, edge_component
from fog_observability.core.meter.sampling import InjectedAccounting, MeterSampler
from fog_observability.core.model import DOMAINS, CorrelationWindow, InstrumentationDomain
from fog_observability.core.records import ObservabilityRecord, encode_payload
from fog_observability.core.replay.schedule import LinkSchedule, load_schedule
from fog_observability.core.replay.workload import WorkloadSpec, generate_workload
from fog_observability.core.wire.protocol import FRAME_OVERHEAD, decode_frame
from fog_observability.utils import path_resolver
from fog_observability.utils.clock import VirtualClock
from fog_observability.utils.logger import get_logger
from fog_observability.utils.structured import to_plain, write_json_atomic, write_plot_data

PLOT_COLUMNS = ('device', 'domain', 'generated', 'generated_bytes', 'staged', 'evicted', 'transmitted',
                'transmitted_bytes', 'acked', 'ingested', 'ingested_bytes', 'archived', 'in_flight')

logger = get_logger().getChild('replay')


def _cpu_seconds(process=psutil.Process()):
    times = process.cpu_times()
    return times.user + times.system


class LoopbackConnection(object):
    """Edge connection that hands frames straight to a FogNode.

    Acks are dropped with `ack_drop_probability`, which the edge sees as a timeout and answers
    with a resend of the same batch.
    """

    def __init__(self, node, ack_drop_probability=0.0, rng=None):
        self.node = node
        self.ack_drop_probability = float(ack_drop_probability)
        self.rng = rng or np.random.default_rng(0)
        self.frames = 0
        self.bytes_received = 0
        self.acks_dropped = 0
        self.fog_cpu_s = 0.0
        self.ingested = {domain: 0 for domain in DOMAINS}
        self.ingested_bytes = {domain: 0 for domain in DOMAINS}
        self.delivered = {domain: set() for domain in DOMAINS}
        self._acks = deque()

    def connect(self):
        return self

    def send_frame(self, frame):
        node = self.node
        before = {domain: (node.ingested[domain], node.stored_bytes[domain]) for domain in DOMAINS}
        began = _cpu_seconds()
        try:
            ack = node.ingest_batch(frame)
        except StorageFull:
            # the node withholds the ack, the edge times out and keeps the batch
            return
        except MalformedFrame as err:
            raise ConnectionLost(f'Fog node closed the session: {err.message}')
        finally:
            self.fog_cpu_s += _cpu_seconds() - began
            self.frames += 1
            self.bytes_received += len(frame)
        for domain in DOMAINS:
            self.ingested[domain] += node.ingested[domain] - before[domain][0]
            self.ingested_bytes[domain] += node.stored_bytes[domain] - before[domain][1]
        data = decode_frame(frame)
        self.delivered[data.domain].update(ObservabilityRecord.from_line(data.domain, line).dedup_key
                                           for line in data.lines)
        if self.ack_drop_probability and self.rng.random() < self.ack_drop_probability:
            self.acks_dropped += 1
            return
        self._acks.append(decode_frame(ack))

    def recv_frame(self, timeout):
        if not self._acks:
            raise TransmitTimeout(f'No ack within {timeout}s')
        return self._acks.popleft()

    def close(self):
        self._acks.clear()


@dataclass
class DomainTally:
    generated: int = 0
    generated_bytes: int = 0
    staged: int = 0
    staged_bytes: int = 0
    rejected: int = 0
    evicted: int = 0
    evicted_bytes: int = 0
    evicted_delivered: int = 0
    transmitted: int = 0
    transmitted_bytes: int = 0
    acked: int = 0
    acked_bytes: int = 0
    ingested: int = 0
    ingested_bytes: int = 0
    fog: int = 0
    archived: int = 0
    in_flight: int = 0

    def add(self, other):
        for name, value in asdict(other).items():
            setattr(self, name, getattr(self, name) + value)
        return self

    def violations(self):
        """Accounting identities that must hold once the links are drained."""
        problems = []
        if self.generated != self.staged + self.rejected:
            problems.append(f'generated {self.generated} != staged {self.staged} + rejected {self.rejected}')
        # a record can reach the fog before its ack is lost and then be evicted on the edge
        lost = self.evicted - self.evicted_delivered
        if self.ingested + lost + self.in_flight != self.staged:
            problems.append(f'ingested {self.ingested} + evicted undelivered {lost} + in flight {self.in_flight}'
                            f' != staged {self.staged}')
        if self.fog + self.archived != self.ingested:
            problems.append(f'fog {self.fog} + archived {self.archived} != ingested {self.ingested}')
        if self.ingested > self.transmitted:
            problems.append(f'ingested {self.ingested} > transmitted {self.transmitted}')
        return problems

    def to_dict(self):
        return asdict(self)


def audit_evictions(events, weights):
    """Every eviction must hit a lowest-weight non-empty domain and its oldest record."""
    problems = []
    for event in events:
        present = [domain for domain in DOMAINS if event.staged_counts.get(domain.value, 0) > 0]
        lowest = min(weights.weight(domain) for domain in present)
        if event.weight > lowest:
            problems.append({'dedup_key': event.dedup_key, 'reason': 'not the lowest weight domain',
                             'domain': event.domain.value})
        if event.oldest_retained_ms is not None and event.timestamp_ms > event.oldest_retained_ms:
            problems.append({'dedup_key': event.dedup_key, 'reason': 'not the oldest record',
                             'domain': event.domain.value})
    return problems


@dataclass
class ScenarioResult:
    name: str
    spec: WorkloadSpec
    schedule: LinkSchedule
    weights: object
    reduction: dict
    counters: dict
    fog_stats: dict
    acks_dropped: int
    frames: int
    drain_cycles: int
    evictions: int
    eviction_violations: list
    archive: dict
    payload: dict
    region_aggregates: list
    outcome: object
    edge_cpu_pct: float
    cpu_ceiling_pct: float
    virtual_s: float
    wall_s: float

    def totals(self, domain=None):
        total = DomainTally()
        for per_domain in self.counters.values():
            for name, tally in per_domain.items():
                if domain is None or name == InstrumentationDomain.parse(domain).value:
                    total.add(tally)
        return total

    def violations(self):
        problems = []
        for device, per_domain in sorted(self.counters.items()):
            for domain, tally in sorted(per_domain.items()):
                problems.extend(f'{device}/{domain}: {problem}' for problem in tally.violations())
        return problems

    @property
    def conserved(self):
        return not self.violations()

    def generated_bytes_per_hour(self, domain):
        return self.totals(domain).generated_bytes * 3600.0 / self.virtual_s

    def projections(self, hours_per_day=9, months=6):
        """Volumes at the generated rates: per hour, per operating day, per week and per `months`."""
        out = {}
        for domain in DOMAINS:
            hourly = self.generated_bytes_per_hour(domain)
            out[domain.value] = {'hourly': hourly, 'daily': hourly * hours_per_day,
                                 'weekly': hourly * hours_per_day * 7,
                                 f'{months}_months': hourly * hours_per_day * 30 * months}
        return out

    def to_dict(self):
        return {
            'name': self.name,
            'spec': self.spec.to_dict(),
            'timeline': self.schedule.to_dict(),
            'weights': self.weights.to_dict(),
            'reduction': self.reduction,
            'counters': {device: {domain: tally.to_dict() for domain, tally in per_domain.items()}
                         for device, per_domain in self.counters.items()},
            'totals': {domain.value: self.totals(domain).to_dict() for domain in DOMAINS},
            'violations': self.violations(),
            'fog': self.fog_stats,
            'acks_dropped': self.acks_dropped,
            'frames': self.frames,
            'drain_cycles': self.drain_cycles,
            'evictions': self.evictions,
            'eviction_violations': self.eviction_violations,
            'archive': self.archive,
            'payload': self.payload,
            'projections': self.projections(),
            'regions': [aggregate.to_dict() for aggregate in self.region_aggregates],
            'outcome': self.outcome.to_dict() if self.outcome is not None else None,
            'edge_cpu_pct': self.edge_cpu_pct,
            'cpu_ceiling_pct': self.cpu_ceiling_pct,
            'virtual_s': self.virtual_s,
            'wall_s': self.wall_s,
        }

    def plot_rows(self):
        for device, per_domain in sorted(self.counters.items()):
            for domain, tally in sorted(per_domain.items()):
                values = tally.to_dict()
                yield [device, domain] + [values[column] for column in PLOT_COLUMNS[2:]]


class _DeviceRun(object):
    """One simulated truck: its agent, its generators and what it has produced so far."""

    def __init__(self, index, device, agent, connection, log_path):
        self.index = index
        self.device = device
        self.agent = agent
        self.connection = connection
        self.log_path = log_path
        self.generated = {domain: [0, 0] for domain in DOMAINS}
        self.transmitted = {domain: [0, 0] for domain in DOMAINS}
        self.cpu_s = {domain: 0.0 for domain in DOMAINS}
        self.sent_bytes = {domain: 0 for domain in DOMAINS}
        self.next_ms = {domain: 0 for domain in DOMAINS}
        self.emitted = {domain: 0 for domain in DOMAINS}

    def enabled(self, domain):
        return self.agent.collector_config.enabled(domain)

    def idle(self):
        planner = self.agent.planner
        return self.agent.store.is_empty() and not any(planner.pending[domain] for domain in DOMAINS)


class ScenarioRunner(object):
    def __init__(self, spec, schedule, cfg, work_dir, name='scenario', progress=False):
        self.spec = spec
        self.schedule = schedule
        self.cfg = cfg
        self.work_dir = Path(work_dir)
        self.name = name
        self.progress = progress
        self.tick_s = float(cfg.replay.tick_s)
        self.clock = VirtualClock(start_ms=0, ratio=float(cfg.replay.virtual_clock))
        self.weights = load_weight_profile(cfg.weights.profile)
        self.regions = self._load_regions()
        self.workload = generate_workload(spec, bbox=self._bbox())
        self.node = FogNode.from_cfg(cfg, data_dir=self.work_dir / 'fog')
        rng = np.random.default_rng(int(cfg.replay.seed))
        self.runs = [self._device_run(index, device, rng) for index, device in enumerate(self.workload)]
        self.meter_interval_s = float(cfg.meter.sample_interval_s)
        self.sources = {component: InjectedAccounting(cores=psutil.cpu_count() or 1)
                        for component in [edge_component(domain) for domain in DOMAINS] + [FOG, ARCHIVE]}
        self.report = MeterReport(MeterBasis.from_cfg(cfg.meter))
        self.sampler = MeterSampler({component: source for component, source in self.sources.items()
                                     if component != ARCHIVE},
                                    self.clock, self.work_dir / 'meter.jsonl', self.meter_interval_s, self.report)
        self._fog_cpu_mark = 0.0
        self._fog_bytes_mark = 0
        self._frames_mark = 0

    def _load_regions(self):
        if not self.cfg.replay.regions:
            return []
        path = path_resolver.resolve_region_path(self.cfg.replay.regions)
        if not path.is_file():
            raise ScenarioConfigError(f'Region file is missing: {path}', path=str(path))
        return load_regions(path)

    def _bbox(self):
        if not self.regions:
            return None
        boxes = np.array([polygon.bbox for polygon in self.regions])
        return (float(boxes[:, 0].min()), float(boxes[:, 1].min()), float(boxes[:, 2].max()),
                float(boxes[:, 3].max()))

    def _device_run(self, index, device, rng):
        edge_dir = self.work_dir / 'edge' / device.device_id
        edge_dir.mkdir(parents=True, exist_ok=True)
        log_path = edge_dir / 'app.log'
        log_path.touch()
        cfg = OmegaConf.merge(self.cfg, OmegaConf.create({
            'device': {'id': device.device_id, 'data_dir': str(edge_dir)},
            'metric': {'interval_s': self.spec.metric_interval_s, 'source': 'synthetic'},
            'logs': {'paths': [str(log_path)], 'state_file': str(edge_dir / 'state.json')},
        }))
        connection = LoopbackConnection(self.node, float(self.cfg.replay.ack_drop_probability),
                                        rng=np.random.default_rng([int(self.cfg.replay.seed), index]))
        try:
            agent = EdgeAgent(cfg, clock=self.clock, connection=connection, weights=self.weights,
                              metric_source=SyntheticSource(device.exposition))
        except (InvalidInterval, ValueError) as err:
            raise ScenarioConfigError(f'Cannot build the edge agent of {device.device_id}: {err}') from err
        return _DeviceRun(index, device, agent, connection, log_path)

    # --- one tick
    def _collect_metrics(self, run, now_ms):
        collector = run.agent.metric_collector
        while run.next_ms[InstrumentationDomain.METRIC] <= now_ms:
            run.next_ms[InstrumentationDomain.METRIC] += int(round(collector.interval_s * 1000))
            emission = collector.collect_once()
            if emission is None:
                continue
            for sample in emission.samples:
                run.agent.stage_payload(sample)
            tally = run.generated[InstrumentationDomain.METRIC]
            tally[0] += len(emission.samples)
            tally[1] += emission.source_bytes

    def _collect_logs(self, run, now_ms):
        domain = InstrumentationDomain.LOG
        lines = []
        while run.next_ms[domain] <= now_ms:
            lines.append(run.device.logs.line(run.emitted[domain], run.next_ms[domain]))
            run.emitted[domain] += 1
            run.next_ms[domain] += int(round(self.spec.log_interval_s * 1000))
        if lines:
            with open(run.log_path, 'a', encoding='utf-8') as fout:
                fout.write(''.join(lines))
            run.generated[domain][0] += len(lines)
            run.generated[domain][1] += sum(len(line.encode('utf-8')) for line in lines)
        run.agent.collect_logs_once()

    def _collect_spans(self, run, now_ms):
        domain = InstrumentationDomain.TRACE
        while run.next_ms[domain] <= now_ms:
            for span in run.device.spans.tree(run.emitted[domain], run.next_ms[domain] * 1000):
                run.agent.stage_payload(span)
                run.generated[domain][0] += 1
                run.generated[domain][1] += len(encode_payload(span))
            run.emitted[domain] += 1
            run.next_ms[domain] += int(round(self.spec.span_interval_s * 1000))

    _COLLECTORS = {
        InstrumentationDomain.METRIC: _collect_metrics,
        InstrumentationDomain.LOG: _collect_logs,
        InstrumentationDomain.TRACE: _collect_spans,
    }

    def _transmit(self, run, link):
        fog_before = run.connection.fog_cpu_s
        began = _cpu_seconds()
        statuses = run.agent.transmit_cycle(link)
        spent = _cpu_seconds() - began - (run.connection.fog_cpu_s - fog_before)
        sent = {domain: 0 for domain in DOMAINS}
        for status in statuses:
            if status.status in (AckStatus.ACKED, AckStatus.TIMEOUT):
                run.transmitted[status.domain][0] += status.records
                run.transmitted[status.domain][1] += status.encoded_bytes
                sent[status.domain] += status.encoded_bytes
        total = sum(sent.values())
        for domain in DOMAINS:
            run.sent_bytes[domain] += sent[domain]
            if total:
                run.cpu_s[domain] += max(spent, 0.0) * sent[domain] / total

    def _tick(self, now_ms, link):
        for run in self.runs:
            for domain in DOMAINS:
                if not run.enabled(domain) or now_ms >= self.spec.duration_s * 1000:
                    continue
                began = _cpu_seconds()
                self._COLLECTORS[domain](self, run, now_ms)
                run.cpu_s[domain] += _cpu_seconds() - began
            self._transmit(run, link)

    def _sample_overheads(self):
        devices = len(self.runs)
        window_s = self.meter_interval_s
        for domain in DOMAINS:
            cpu_s = sum(run.cpu_s[domain] for run in self.runs) / devices
            mem = sum(run.agent.store.staged_bytes(domain) for run in self.runs) / devices
            net = sum(run.sent_bytes[domain] for run in self.runs) / devices
            self.sources[edge_component(domain)].inject(100.0 * cpu_s / window_s, mem, net)
            for run in self.runs:
                run.cpu_s[domain] = 0.0
                run.sent_bytes[domain] = 0
        fog_cpu = sum(run.connection.fog_cpu_s for run in self.runs)
        fog_bytes = sum(run.connection.bytes_received for run in self.runs)
        frames = sum(run.connection.frames for run in self.runs)
        net = fog_bytes - self._fog_bytes_mark + (frames - self._frames_mark) * FRAME_OVERHEAD
        self.sources[FOG].inject(100.0 * (fog_cpu - self._fog_cpu_mark) / window_s, self.node.total_stored_bytes(),
                                 net)
        self._fog_cpu_mark, self._fog_bytes_mark, self._frames_mark = fog_cpu, fog_bytes, frames
        self.sampler.sample_once()

    # --- phases
    def run_collection(self):
        ticks = int(np.ceil(self.spec.duration_s / self.tick_s))
        next_sample_ms = int(self.meter_interval_s * 1000)
        next_alerts_ms = 0
        alert_interval_ms = int(float(self.cfg.alerts.eval_interval_s) * 1000)
        for _ in tqdm(range(ticks), desc=f'Replaying {self.name}', unit='tick', disable=not self.progress):
            now_ms = self.clock.now_ms()
            self._tick(now_ms, self.schedule.link_state(now_ms / 1000.0, self.tick_s))
            if self.node.alert_rules and now_ms >= next_alerts_ms:
                self.node.evaluate_alerts(now_ms)
                next_alerts_ms += alert_interval_ms
            self.clock.advance(self.tick_s)
            if self.clock.now_ms() >= next_sample_ms:
                self._sample_overheads()
                next_sample_ms += int(self.meter_interval_s * 1000)

    def drain(self):
        """Transmits whatever is staged over the fastest link the schedule offers.

        A schedule that is never up has nothing to drain over; the residue stays in flight.
        """
        bandwidth = self.schedule.max_bandwidth()
        if bandwidth <= 0:
            return 0
        link = LinkState(available=True, bandwidth_budget_bytes_per_cycle=int(bandwidth * self.tick_s))
        cycles = 0
        limit = int(self.cfg.replay.drain_max_cycles)
        while cycles < limit and not all(run.idle() for run in self.runs):
            for run in self.runs:
                self._transmit(run, link)
            self.clock.advance(self.tick_s)
            cycles += 1
        if not all(run.idle() for run in self.runs):
            logger.warning(f'Links not drained after {cycles} cycles')
        return cycles

    def compose_outcome(self, end_ms):
        if end_ms <= 0:
            return None
        try:
            return compose_outcome(self.report, self.weights, CorrelationWindow(0, end_ms + 1), self.node)
        except NoSamples as err:
            logger.warning(f'No outcome: {err.message}')
            return None

    def tier_and_archive(self):
        outbox = self.work_dir / 'outbox'
        outbox.mkdir(parents=True, exist_ok=True)
        policy = TieringPolicy(age_limit_s=float(self.cfg.replay.tiering_age_limit_s),
                               cycle_interval_s=float(self.cfg.tiering.cycle_interval_s), sink=str(outbox))
        began = _cpu_seconds()
        segments = self.node.tiering_cycle(policy, self.clock.now_ms())
        catalog = ArchiveCatalog(self.work_dir / 'archive')
        summary = catalog.import_directory(outbox)
        segment_bytes = sum(Path(entry.path).stat().st_size for entry in catalog.entries)
        self.sources[ARCHIVE].inject(100.0 * (_cpu_seconds() - began) / self.meter_interval_s, segment_bytes,
                                     segment_bytes)
        MeterSampler({ARCHIVE: self.sources[ARCHIVE]}, self.clock, self.sampler.out_path, self.meter_interval_s,
                     self.report).sample_once()
        return catalog, {'segments': len(segments), 'imported': len(summary.imported),
                         'duplicates': len(summary.duplicates), 'rejected': len(summary.rejected),
                         'bytes': segment_bytes, 'records': catalog.record_count()}

    def _held(self, catalog):
        """(fog counts, archive counts) keyed by (device, domain)."""
        fog, archived = {}, {}
        for domain, line in self.node.all_records():
            key = (ObservabilityRecord.from_line(domain, line).device_id, domain)
            fog[key] = fog.get(key, 0) + 1
        for domain in DOMAINS:
            for record in catalog.historical_query(domain):
                key = (record.device_id, domain)
                archived[key] = archived.get(key, 0) + 1
        return fog, archived

    def counters(self, catalog):
        fog, archived = self._held(catalog)
        evicted_delivered = {}
        for run in self.runs:
            for event in run.agent.store.eviction_log or ():
                if event.dedup_key in run.connection.delivered[event.domain]:
                    key = (run.device.device_id, event.domain)
                    evicted_delivered[key] = evicted_delivered.get(key, 0) + 1
        counters = {}
        for run in self.runs:
            staging = run.agent.store.counters
            per_domain = {}
            for domain in DOMAINS:
                stage = staging[domain]
                key = (run.device.device_id, domain)
                per_domain[domain.value] = DomainTally(
                    generated=run.generated[domain][0], generated_bytes=run.generated[domain][1],
                    staged=stage.staged, staged_bytes=stage.staged_bytes, rejected=stage.rejected,
                    evicted=stage.evicted, evicted_bytes=stage.evicted_bytes,
                    evicted_delivered=evicted_delivered.get(key, 0),
                    transmitted=run.transmitted[domain][0], transmitted_bytes=run.transmitted[domain][1],
                    acked=stage.acked, acked_bytes=stage.acked_bytes,
                    ingested=run.connection.ingested[domain], ingested_bytes=run.connection.ingested_bytes[domain],
                    fog=fog.get(key, 0), archived=archived.get(key, 0),
                    in_flight=len(run.agent.store.snapshot(domain)))
            counters[run.device.device_id] = per_domain
        return counters

    def region_aggregates(self, catalog):
        if not self.regions:
            return []
        logs = [entry for _, entry in self.node.logs.documents()]
        logs.extend(record.payload for record in catalog.historical_query(InstrumentationDomain.LOG))
        aggregates, _ = aggregate_by_region(logs, self.regions, 'throughput_kbps')
        return aggregates

    def payload_share(self, counters):
        payload_bytes = float(self.cfg.payload.bytes_per_s) * self.spec.duration_s * len(self.runs)
        generated = sum(tally.generated_bytes for per_domain in counters.values() for tally in per_domain.values())
        transmitted = sum(tally.transmitted_bytes for per_domain in counters.values()
                          for tally in per_domain.values())
        return {'payload_bytes': payload_bytes, 'observability_bytes': generated, 'wire_bytes': transmitted,
                'ratio': generated / payload_bytes if payload_bytes else None,
                'wire_ratio': transmitted / payload_bytes if payload_bytes else None}

    def edge_cpu_pct(self):
        """Mean edge CPU over the collection phase, from the meter samples of every edge component."""
        values = []
        for domain in DOMAINS:
            component = edge_component(domain)
            if self.report.has_samples(component):
                values.append(np.array([sample.cpu_pct for sample in self.report.samples[component]]))
        if not values:
            return 0.0
        return float(np.sum([series.mean() for series in values]))

    def run(self):
        began = time.perf_counter()
        self.run_collection()
        end_ms = self.clock.now_ms()
        outcome = self.compose_outcome(end_ms)
        edge_cpu_pct = self.edge_cpu_pct()
        drain_cycles = self.drain()
        catalog, archive = self.tier_and_archive()
        counters = self.counters(catalog)
        events = [event for run in self.runs for event in (run.agent.store.eviction_log or ())]
        for run in self.runs:
            run.agent.stop()
        self.node.close()
        return ScenarioResult(
            name=self.name, spec=self.spec, schedule=self.schedule, weights=self.weights,
            reduction=self.runs[0].agent.policy.to_dict(), counters=counters, fog_stats=to_plain(self.node.stats()),
            acks_dropped=sum(run.connection.acks_dropped for run in self.runs),
            frames=sum(run.connection.frames for run in self.runs), drain_cycles=drain_cycles,
            evictions=len(events), eviction_violations=audit_evictions(events, self.weights), archive=archive,
            payload=self.payload_share(counters), region_aggregates=self.region_aggregates(catalog),
            outcome=outcome, edge_cpu_pct=edge_cpu_pct, cpu_ceiling_pct=float(self.cfg.meter.cpu_ceiling_pct),
            virtual_s=end_ms / 1000.0, wall_s=time.perf_counter() - began)


def _check(cfg, spec, schedule):
    if float(cfg.replay.tick_s) <= 0:
        raise ScenarioConfigError(f'replay.tick_s must be positive, got {cfg.replay.tick_s}')
    if not (0 <= float(cfg.replay.ack_drop_probability) < 1):
        raise ScenarioConfigError(f'replay.ack_drop_probability must be in [0, 1), got '
                                  f'{cfg.replay.ack_drop_probability}')
    if float(cfg.replay.virtual_clock) < 0:
        raise ScenarioConfigError(f'replay.virtual_clock must be >= 0, got {cfg.replay.virtual_clock}')
    if spec.metric_interval_s < float(cfg.replay.tick_s):
        raise ScenarioConfigError(f'Metric interval {spec.metric_interval_s}s is shorter than the '
                                  f'{cfg.replay.tick_s}s tick')
    if schedule.duration_s < spec.duration_s:
        raise ScenarioConfigError(f'The link schedule covers {schedule.duration_s}s of a {spec.duration_s}s run')


def default_schedule(cfg, spec):
    """The configured schedule file, or a link that is always up at `link.budget_bytes` per cycle."""
    if cfg.replay.schedule:
        return load_schedule(path_resolver.resolve_schedule_path(cfg.replay.schedule))
    return LinkSchedule.always_up(spec.duration_s, float(cfg.link.budget_bytes) / float(cfg.link.cycle_s))


def run_scenario(spec, schedule, cfg, work_dir=None, name='scenario', progress=False):
    """Replays `spec` over `schedule` with every component configured from `cfg`.

    Without `work_dir` the edge, fog and archive files live in a temporary directory removed afterwards.
    """
    _check(cfg, spec, schedule)
    with contextlib.ExitStack() as stack:
        if work_dir is None:
            work_dir = stack.enter_context(tempfile.TemporaryDirectory(prefix='odlc-replay-'))
        try:
            runner = ScenarioRunner(spec, schedule, cfg, work_dir, name=name, progress=progress)
        except OmegaConfBaseException as err:
            raise ScenarioConfigError(f'Bad scenario configuration: {err}') from err
        result = runner.run()
    logger.info(f'Replay {name} done: {result.frames} frames, {result.evictions} evictions, '
                f'{result.wall_s:.1f}s wall clock')
    return result


def load_scenario(name_or_path, overrides=None, environ=None):
    """Configuration of a bundled scenario (by name) or of a scenario file."""
    path = path_resolver.resolve_scenario_path(name_or_path)
    if not path.is_file():
        raise ScenarioConfigError(f'Scenario {name_or_path} not found, expected one of '
                                  f'{", ".join(path_resolver.get_scenario_names())}', scenario=str(name_or_path))
    return load_config(path, overrides=overrides, environ=environ)


def scenario_from_cfg(cfg):
    """(WorkloadSpec, LinkSchedule) described by a loaded configuration."""
    try:
        spec = WorkloadSpec.from_cfg(cfg.workload)
    except OmegaConfBaseException as err:
        raise ScenarioConfigError(f'Bad workload section: {err}') from err
    return spec, default_schedule(cfg, spec)


def write_result(result, out_path):
    """Structured result at `out_path` and its columnar plot data next to it (`.tsv`)."""
    out_path = Path(out_path)
    write_json_atomic(out_path, to_plain(result.to_dict()))
    plot_path = out_path.with_suffix('.tsv')
    write_plot_data(plot_path, PLOT_COLUMNS, result.plot_rows())
    return out_path, plot_path


def summary_lines(result):
    """Human summary with a coloured verdict per check."""
    def verdict(ok):
        return colored('PASS', 'green') if ok else colored('FAIL', 'red')

    lines = [f'Scenario {result.name}: {len(result.counters)} device(s), {result.virtual_s:.0f}s virtual, '
             f'{result.wall_s:.1f}s wall clock']
    for domain in DOMAINS:
        tally = result.totals(domain)
        lines.append(f'  {domain.value:<6} generated {tally.generated} ({tally.generated_bytes} B), '
                     f'evicted {tally.evicted}, ingested {tally.ingested} ({tally.ingested_bytes} B), '
                     f'archived {tally.archived}')
    lines.append(f'  conservation          {verdict(result.conserved)}')
    lines.append(f'  eviction order        {verdict(not result.eviction_violations)}')
    ratio = result.payload['ratio']
    if ratio is not None:
        lines.append(f'  payload share {100 * ratio:.3f}% {verdict(ratio < 0.01)}')
    lines.append(f'  edge cpu {result.edge_cpu_pct:.2f}% (ceiling {result.cpu_ceiling_pct}%) '
                 f'{verdict(result.edge_cpu_pct <= result.cpu_ceiling_pct)}')
    return lines
