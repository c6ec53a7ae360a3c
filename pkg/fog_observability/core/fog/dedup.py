import threading
from collections import OrderedDict

DEFAULT_CAPACITY = 1 << 16


class RecentKeys(object):
    """Bounded LRU of dedup keys for one (device, domain) stream, plus the batch seqs it completed.

    `horizon` is the largest batch seq one of whose keys was forgotten. A completed batch at or below it may
    no longer be recognised by its keys, so a resend of it is recognised by its seq.
    """

    def __init__(self, capacity=DEFAULT_CAPACITY):
        self.capacity = int(capacity)
        self._keys = OrderedDict()
        self.high_watermark = -1
        self.horizon = -1
        # every seq <= completed_floor is complete; completed out of order above it
        self.completed_floor = 0
        self._completed_above = set()

    def __len__(self):
        return len(self._keys)

    def __contains__(self, key):
        if key in self._keys:
            self._keys.move_to_end(key)
            return True
        return False

    def add(self, key, batch_seq=-1):
        self._keys[key] = batch_seq
        self._keys.move_to_end(key)
        while len(self._keys) > self.capacity:
            _, forgotten_seq = self._keys.popitem(last=False)
            self.horizon = max(self.horizon, forgotten_seq)

    def complete(self, batch_seq):
        self.high_watermark = max(self.high_watermark, batch_seq)
        if batch_seq <= self.completed_floor:
            return
        self._completed_above.add(batch_seq)
        while self.completed_floor + 1 in self._completed_above:
            self.completed_floor += 1
            self._completed_above.discard(self.completed_floor)
        while len(self._completed_above) > self.capacity:
            # forgetting a completion only risks storing a resend twice
            self._completed_above.discard(min(self._completed_above))

    def completed(self, batch_seq):
        return batch_seq <= self.completed_floor or batch_seq in self._completed_above

    def beyond_horizon(self, batch_seq):
        return batch_seq is not None and 0 < batch_seq <= self.horizon and self.completed(batch_seq)

    def marks(self, horizon=None):
        return {'high_watermark': self.high_watermark, 'horizon': self.horizon if horizon is None else horizon,
                'completed_floor': self.completed_floor, 'completed_above': sorted(self._completed_above)}

    def restore(self, marks):
        self.horizon = max(self.horizon, int(marks.get('horizon', -1)))
        self.completed_floor = max(self.completed_floor, int(marks.get('completed_floor', 0)))
        for batch_seq in marks.get('completed_above', ()):
            self.complete(int(batch_seq))
        self.high_watermark = max(self.high_watermark, int(marks.get('high_watermark', -1)))


class DedupTable(object):
    def __init__(self, capacity=DEFAULT_CAPACITY):
        self.capacity = capacity
        self._streams = {}
        self._lock = threading.Lock()

    def stream(self, device_id, domain):
        with self._lock:
            key = (device_id, domain)
            if key not in self._streams:
                self._streams[key] = RecentKeys(self.capacity)
            return self._streams[key]

    def items(self):
        with self._lock:
            return sorted(self._streams.items(), key=lambda item: (item[0][0], item[0][1].order))

    def high_watermarks(self):
        return {f'{device}/{domain.value}': stream.high_watermark for (device, domain), stream in self.items()}
