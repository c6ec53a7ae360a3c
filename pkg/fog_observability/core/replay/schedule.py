"""Link availability over a replay: contiguous intervals, each up with a bandwidth or down."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fog_observability.core.edge.planner import LinkState
from fog_observability.core.errors import OutOfRange, ScenarioConfigError

_STATES = {'up': True, 'down': False}


@dataclass(frozen=True)
class LinkInterval:
    start_s: float
    end_s: float
    available: bool
    bandwidth_bytes_per_s: float = 0.0

    def __post_init__(self):
        if self.end_s <= self.start_s:
            raise ScenarioConfigError(f'Empty link interval [{self.start_s}, {self.end_s})')
        if self.bandwidth_bytes_per_s < 0:
            raise ScenarioConfigError(f'Negative bandwidth {self.bandwidth_bytes_per_s}')
        if not self.available:
            object.__setattr__(self, 'bandwidth_bytes_per_s', 0.0)

    @property
    def duration_s(self):
        return self.end_s - self.start_s

    def same_state(self, other):
        return self.available == other.available and self.bandwidth_bytes_per_s == other.bandwidth_bytes_per_s

    def to_dict(self):
        return {'start_s': self.start_s, 'end_s': self.end_s, 'available': self.available,
                'bandwidth_bytes_per_s': self.bandwidth_bytes_per_s}

    def to_line(self):
        state = 'up' if self.available else 'down'
        if self.available:
            return f'{self.start_s:.15g} {self.end_s:.15g} {state} {self.bandwidth_bytes_per_s:.15g}'
        return f'{self.start_s:.15g} {self.end_s:.15g} {state}'


def _coalesce(intervals):
    merged = []
    for interval in intervals:
        if merged and merged[-1].same_state(interval) and merged[-1].end_s == interval.start_s:
            last = merged.pop()
            interval = LinkInterval(last.start_s, interval.end_s, interval.available, interval.bandwidth_bytes_per_s)
        merged.append(interval)
    return tuple(merged)


class LinkSchedule(object):
    """Non-overlapping intervals covering [0, duration_s); neighbours with equal state are merged."""

    def __init__(self, intervals):
        intervals = sorted(intervals, key=lambda interval: interval.start_s)
        if not intervals:
            raise ScenarioConfigError('A link schedule needs at least one interval')
        if intervals[0].start_s != 0:
            raise ScenarioConfigError(f'Link schedule starts at {intervals[0].start_s}, not 0')
        for previous, current in zip(intervals, intervals[1:]):
            if current.start_s != previous.end_s:
                kind = 'overlap' if current.start_s < previous.end_s else 'gap'
                raise ScenarioConfigError(f'Link intervals {kind} at {previous.end_s}s', at=previous.end_s)
        self.intervals = _coalesce(intervals)
        self._starts = np.array([interval.start_s for interval in self.intervals], dtype=np.float64)

    @classmethod
    def always_up(cls, duration_s, bandwidth_bytes_per_s):
        return cls([LinkInterval(0.0, float(duration_s), True, float(bandwidth_bytes_per_s))])

    @property
    def duration_s(self):
        return self.intervals[-1].end_s

    def __len__(self):
        return len(self.intervals)

    def __eq__(self, other):
        return isinstance(other, LinkSchedule) and self.intervals == other.intervals

    def __repr__(self):
        return f'LinkSchedule({list(self.intervals)!r})'

    def state_at(self, t_s):
        """The interval holding `t_s`; instants past the end keep the last state."""
        if t_s < 0:
            raise OutOfRange(f'{t_s}s is before the schedule start')
        index = int(np.searchsorted(self._starts, t_s, side='right')) - 1
        return self.intervals[index]

    def link_state(self, t_s, cycle_s):
        interval = self.state_at(t_s)
        if not interval.available:
            return LinkState.down()
        return LinkState(available=True, bandwidth_budget_bytes_per_cycle=int(interval.bandwidth_bytes_per_s * cycle_s))

    def availability(self):
        """Share of the schedule during which the link is up."""
        up = sum(interval.duration_s for interval in self.intervals if interval.available)
        return up / self.duration_s

    def max_bandwidth(self):
        return max((interval.bandwidth_bytes_per_s for interval in self.intervals if interval.available), default=0.0)

    def inject_outage(self, at_s, duration_s):
        if duration_s < 0 or at_s < 0 or at_s + duration_s > self.duration_s:
            raise OutOfRange(f'Outage [{at_s}, {at_s + duration_s}) is outside [0, {self.duration_s})',
                             at=at_s, duration=duration_s)
        if duration_s == 0:
            return self
        end_s = at_s + duration_s
        pieces = []
        for interval in self.intervals:
            if interval.end_s <= at_s or interval.start_s >= end_s:
                pieces.append(interval)
                continue
            if interval.start_s < at_s:
                pieces.append(LinkInterval(interval.start_s, at_s, interval.available,
                                           interval.bandwidth_bytes_per_s))
            pieces.append(LinkInterval(max(interval.start_s, at_s), min(interval.end_s, end_s), False))
            if interval.end_s > end_s:
                pieces.append(LinkInterval(end_s, interval.end_s, interval.available,
                                           interval.bandwidth_bytes_per_s))
        return LinkSchedule(pieces)

    def to_dict(self):
        return {'intervals': [interval.to_dict() for interval in self.intervals], 'availability': self.availability()}

    def to_text(self):
        return ''.join(interval.to_line() + '\n' for interval in self.intervals)


def inject_outage(schedule, at, duration):
    return schedule.inject_outage(at, duration)


def parse_schedule(lines, source='<schedule>'):
    """Interval lines `<start_s> <end_s> up <bytes_per_s>` or `<start_s> <end_s> down`; `#` starts a comment."""
    intervals = []
    for line_no, line in enumerate(lines, start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            state = _STATES[parts[2].lower()]
            bandwidth = float(parts[3]) if state else 0.0
            if len(parts) > (4 if state else 3):
                raise ValueError('trailing fields')
            intervals.append(LinkInterval(float(parts[0]), float(parts[1]), state, bandwidth))
        except (IndexError, KeyError, ValueError) as err:
            raise ScenarioConfigError(f'{source}:{line_no}: bad link interval {line!r} ({err})',
                                      line=line_no) from err
    return LinkSchedule(intervals)


def load_schedule(path):
    path = Path(path)
    if not path.is_file():
        raise ScenarioConfigError(f'Schedule file is missing: {path}', path=str(path))
    with open(path, 'r', encoding='utf-8') as fin:
        return parse_schedule(fin, source=str(path))


def random_schedule(duration_s, bandwidth_bytes_per_s, availability=0.5, seed=0, mean_period_s=60.0):
    """Alternating up and down periods with exponential lengths; up periods get `availability` of the mean."""
    if not (0 <= availability <= 1):
        raise ScenarioConfigError(f'availability must be in [0, 1], got {availability}')
    if availability in (0, 1):
        return LinkSchedule([LinkInterval(0.0, float(duration_s), bool(availability), bandwidth_bytes_per_s)])
    rng = np.random.default_rng(seed)
    intervals = []
    t_s = 0.0
    up = bool(rng.random() < availability)
    while t_s < duration_s:
        share = availability if up else 1 - availability
        length = float(np.ceil(rng.exponential(max(share, 1e-3) * 2 * mean_period_s)))
        length = max(length, 1.0)
        end_s = min(t_s + length, float(duration_s))
        intervals.append(LinkInterval(t_s, end_s, up, bandwidth_bytes_per_s if up else 0.0))
        t_s = end_s
        up = not up
    return LinkSchedule(intervals)

