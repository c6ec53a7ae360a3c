"""Time sources. Every component reads time through one of these, never through `time` directly."""
import threading
import time


class SystemClock(object):
    def now_ms(self):
        return time.time_ns() // 1_000_000

    def now_us(self):
        return time.time_ns() // 1_000

    def sleep(self, seconds):
        if seconds > 0:
            time.sleep(seconds)

    def monotonic(self):
        return time.monotonic()


class VirtualClock(object):
    """Manually advanced clock used by the replay harness.

    `ratio` is real seconds per virtual second; 0 means advance as fast as possible.
    """

    def __init__(self, start_ms=0, ratio=0.0):
        self._now_us = int(start_ms) * 1000
        self._ratio = float(ratio)
        self._lock = threading.Lock()

    def now_ms(self):
        with self._lock:
            return self._now_us // 1000

    def now_us(self):
        with self._lock:
            return self._now_us

    def monotonic(self):
        return self.now_us() / 1e6

    def advance(self, seconds):
        if seconds < 0:
            raise ValueError(f'Cannot move a clock backwards ({seconds}s)')
        with self._lock:
            self._now_us += int(round(seconds * 1e6))
        if self._ratio > 0:
            time.sleep(seconds * self._ratio)

    def advance_us(self, micros):
        with self._lock:
            self._now_us += int(micros)

    def sleep(self, seconds):
        self.advance(seconds)
