"""Adaptive transmission planning: weighted priorities under a per-cycle byte budget."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from fog_observability.core.model import DOMAINS, EPSILON_OVER, OverheadScore, batch_priority
from fog_observability.core.wire.protocol import FRAME_OVERHEAD

DEFAULT_MAX_BATCH_BYTES = 256 * 1024


@dataclass(eq=False)
class Batch:
    domain: object
    records: List[object]
    encoded_bytes: int
    batch_seq: Optional[int] = None
    attempts: int = 0

    @property
    def lines(self):
        return [record.line for record in self.records]

    def __len__(self):
        return len(self.records)


@dataclass
class LinkState:
    available: bool = True
    bandwidth_budget_bytes_per_cycle: int = 0
    last_ack_seq: Dict[object, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.bandwidth_budget_bytes_per_cycle < 0:
            raise ValueError('Bandwidth budget must be >= 0')
        if not self.available:
            self.bandwidth_budget_bytes_per_cycle = 0

    @classmethod
    def down(cls, last_ack_seq=None):
        return cls(available=False, bandwidth_budget_bytes_per_cycle=0, last_ack_seq=dict(last_ack_seq or {}))


class BatchPlanner(object):
    """Forms per-domain batches from staged records and keeps unacked batches for resend.

    A batch keeps its sequence number until it is acked; records evicted meanwhile are dropped
    from it and a batch left empty is forgotten.
    """

    def __init__(self, device_id, max_batch_bytes=DEFAULT_MAX_BATCH_BYTES, next_seq=None):
        if max_batch_bytes <= FRAME_OVERHEAD:
            raise ValueError(f'max_batch_bytes must exceed the frame overhead of {FRAME_OVERHEAD} bytes')
        self.device_id = device_id
        self.max_batch_bytes = int(max_batch_bytes)
        self.next_seq = {domain: int((next_seq or {}).get(domain.value, 1)) for domain in DOMAINS}
        self.pending = {domain: [] for domain in DOMAINS}

    @property
    def max_record_bytes(self):
        return self.max_batch_bytes - FRAME_OVERHEAD

    def _refresh_pending(self, store):
        for domain in DOMAINS:
            refreshed = []
            for batch in self.pending[domain]:
                records = [record for record in batch.records if store.contains(record)]
                if records:
                    batch.records = records
                    batch.encoded_bytes = FRAME_OVERHEAD + sum(record.encoded_size for record in records)
                    refreshed.append(batch)
            self.pending[domain] = refreshed

    def _form_batches(self, store, domain, budget):
        in_flight = {id(record) for batch in self.pending[domain] for record in batch.records}
        batches = []
        current, current_bytes = [], FRAME_OVERHEAD
        formed_bytes = 0
        for record in store.snapshot(domain):
            if id(record) in in_flight:
                continue
            if current and current_bytes + record.encoded_size > self.max_batch_bytes:
                batches.append(Batch(domain, current, current_bytes))
                formed_bytes += current_bytes
                current, current_bytes = [], FRAME_OVERHEAD
                if formed_bytes > budget:
                    return batches
            current.append(record)
            current_bytes += record.encoded_size
        if current:
            batches.append(Batch(domain, current, current_bytes))
        return batches

    def plan(self, store, link, weights, overheads):
        """Ordered batches to send this cycle; their total encoded bytes never exceed the link budget."""
        if not link.available or link.bandwidth_budget_bytes_per_cycle <= 0:
            return []
        budget = link.bandwidth_budget_bytes_per_cycle
        self._refresh_pending(store)
        candidates = []
        for domain in DOMAINS:
            if not weights.is_managed(domain):
                continue
            over = overheads.get(domain) or OverheadScore(EPSILON_OVER)
            priority = batch_priority(domain, weights, over)
            pending = self.pending[domain]
            fresh = self._form_batches(store, domain, budget)
            for position, batch in enumerate(pending + fresh):
                candidates.append((-priority, domain.order, position, batch))
        candidates.sort(key=lambda item: item[:3])

        selected = []
        spent = 0
        blocked = set()
        for _, _, _, batch in candidates:
            if batch.domain in blocked:
                continue
            if spent + batch.encoded_bytes > budget:
                # a domain's batches leave in order, so a deferred one holds back the rest
                blocked.add(batch.domain)
                continue
            spent += batch.encoded_bytes
            selected.append(batch)
        for batch in selected:
            if batch.batch_seq is None:
                batch.batch_seq = self.next_seq[batch.domain]
                self.next_seq[batch.domain] += 1
                self.pending[batch.domain].append(batch)
        return selected

    def mark_acked(self, batch):
        pending = self.pending[batch.domain]
        if batch in pending:
            pending.remove(batch)

    def find_pending(self, domain, batch_seq):
        for batch in self.pending[domain]:
            if batch.batch_seq == batch_seq:
                return batch
        return None

    def seq_state(self):
        return {domain.value: seq for domain, seq in self.next_seq.items()}


def plan_batches(store, link, w, over, planner=None, device_id='', max_batch_bytes=DEFAULT_MAX_BATCH_BYTES):
    planner = planner or BatchPlanner(device_id, max_batch_bytes=max_batch_bytes)
    return planner.plan(store, link, w, over)
