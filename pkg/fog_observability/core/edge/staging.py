"""On-device staging with a weight-aware removal policy."""
import enum
import threading
from collections import deque, namedtuple

from fog_observability.core.errors import RecordTooLarge
from fog_observability.core.model import DOMAINS
from fog_observability.utils.logger import get_logger

EvictionEvent = namedtuple('EvictionEvent', ['domain', 'dedup_key', 'timestamp_ms', 'size', 'weight',
                                             'staged_counts', 'oldest_retained_ms'])


class StageResult(enum.Enum):
    ACCEPTED = 'accepted'
    EVICTED_THEN_ACCEPTED = 'evicted_then_accepted'


class DomainCounters(object):
    __slots__ = ('staged', 'staged_bytes', 'evicted', 'evicted_bytes', 'acked', 'acked_bytes', 'rejected')

    def __init__(self):
        for name in self.__slots__:
            setattr(self, name, 0)

    def to_dict(self):
        return {name: getattr(self, name) for name in self.__slots__}


class StagingStore(object):
    """Per-domain queues ordered by source timestamp, bounded by `capacity_bytes`.

    Admission evicts once the total would pass `capacity_bytes * high_watermark`: the lowest
    weight non-empty domain loses its oldest record first, ties go to the domain holding most bytes.
    """

    def __init__(self, capacity_bytes, weights, high_watermark=0.9, max_record_bytes=None, keep_eviction_log=True):
        if capacity_bytes <= 0:
            raise ValueError(f'capacity_bytes must be positive, got {capacity_bytes}')
        if not (0 < high_watermark <= 1):
            raise ValueError(f'high_watermark must be in (0, 1], got {high_watermark}')
        self.capacity_bytes = int(capacity_bytes)
        self.high_watermark = float(high_watermark)
        self.max_record_bytes = min(int(max_record_bytes or capacity_bytes), self.capacity_bytes)
        self.weights = weights
        self._queues = {domain: deque() for domain in DOMAINS}
        self._bytes = {domain: 0 for domain in DOMAINS}
        self._ids = set()
        self._lock = threading.RLock()
        self.counters = {domain: DomainCounters() for domain in DOMAINS}
        self.eviction_log = [] if keep_eviction_log else None
        self._logger = get_logger().getChild('staging')

    @property
    def limit_bytes(self):
        return self.capacity_bytes * self.high_watermark

    @property
    def total_bytes(self):
        with self._lock:
            return sum(self._bytes.values())

    def staged_bytes(self, domain):
        with self._lock:
            return self._bytes[domain]

    def __len__(self):
        with self._lock:
            return sum(len(queue) for queue in self._queues.values())

    def is_empty(self):
        return len(self) == 0

    def snapshot(self, domain):
        """Staged records of `domain`, oldest first."""
        with self._lock:
            return list(self._queues[domain])

    def contains(self, record):
        with self._lock:
            return id(record) in self._ids

    def stage(self, record):
        size = record.encoded_size
        if size > self.max_record_bytes:
            with self._lock:
                self.counters[record.domain].rejected += 1
            raise RecordTooLarge(f'Record of {size} bytes exceeds the staging limit of {self.max_record_bytes}',
                                 size=size)
        evicted = False
        with self._lock:
            while self.total_bytes + size > self.limit_bytes and len(self):
                self._evict_one()
                evicted = True
            self._insert(record)
            counters = self.counters[record.domain]
            counters.staged += 1
            counters.staged_bytes += size
        return StageResult.EVICTED_THEN_ACCEPTED if evicted else StageResult.ACCEPTED

    def _insert(self, record):
        queue = self._queues[record.domain]
        timestamp = record.timestamp_ms
        if not queue or queue[-1].timestamp_ms <= timestamp:
            queue.append(record)
        else:
            # late record from a second source, walk back to its slot
            index = len(queue)
            while index > 0 and queue[index - 1].timestamp_ms > timestamp:
                index -= 1
            queue.insert(index, record)
        self._bytes[record.domain] += record.encoded_size
        self._ids.add(id(record))

    def _pick_victim_domain(self):
        candidates = [domain for domain in DOMAINS if self._queues[domain]]
        return min(candidates, key=lambda domain: (self.weights.weight(domain), -self._bytes[domain], domain.order))

    def _evict_one(self):
        domain = self._pick_victim_domain()
        staged_counts = {d.value: len(self._queues[d]) for d in DOMAINS}
        record = self._queues[domain].popleft()
        self._bytes[domain] -= record.encoded_size
        self._ids.discard(id(record))
        counters = self.counters[domain]
        counters.evicted += 1
        counters.evicted_bytes += record.encoded_size
        queue = self._queues[domain]
        event = EvictionEvent(domain=domain, dedup_key=record.dedup_key, timestamp_ms=record.timestamp_ms,
                              size=record.encoded_size, weight=self.weights.weight(domain),
                              staged_counts=staged_counts,
                              oldest_retained_ms=queue[0].timestamp_ms if queue else None)
        if self.eviction_log is not None:
            self.eviction_log.append(event)
        self._logger.debug(f'Evicted {domain.value} record {record.dedup_key} ({record.encoded_size} bytes)')
        return event

    def remove_acked(self, records):
        """Drops acknowledged records that are still staged. Returns (count, bytes) removed."""
        with self._lock:
            targets = {id(record) for record in records} & self._ids
            if not targets:
                return 0, 0
            removed = removed_bytes = 0
            for domain in DOMAINS:
                queue = self._queues[domain]
                if not any(id(record) in targets for record in queue):
                    continue
                kept = deque()
                for record in queue:
                    if id(record) in targets:
                        removed += 1
                        removed_bytes += record.encoded_size
                        self._bytes[domain] -= record.encoded_size
                        self._ids.discard(id(record))
                        self.counters[domain].acked += 1
                        self.counters[domain].acked_bytes += record.encoded_size
                    else:
                        kept.append(record)
                self._queues[domain] = kept
            return removed, removed_bytes

    def counters_dict(self):
        with self._lock:
            return {domain.value: self.counters[domain].to_dict() for domain in DOMAINS}
