"""Threshold alert rules evaluated against the time-series store."""
import operator
import threading
from collections import deque, namedtuple
from dataclasses import dataclass

from fog_observability.core.errors import BadSelector
from fog_observability.core.fog.selector import MetricSelector
from fog_observability.utils.logger import get_logger
from fog_observability.utils.structured import append_lines

COMPARATORS = {
    '<': operator.lt,
    '<=': operator.le,
    '>': operator.gt,
    '>=': operator.ge,
}
_COMPARATOR_ALIASES = {'≤': '<=', '≥': '>=', 'lt': '<', 'le': '<=', 'gt': '>', 'ge': '>='}

FIRING = 'firing'
RESOLVED = 'resolved'
DEFAULT_MAX_EVENTS = 10000


@dataclass(frozen=True)
class AlertRule:
    id: str
    selector: str
    comparator: str
    threshold: float
    for_duration_s: float = 0.0

    def __post_init__(self):
        comparator = _COMPARATOR_ALIASES.get(self.comparator, self.comparator)
        if comparator not in COMPARATORS:
            raise ValueError(f'Rule {self.id}: unknown comparator {self.comparator!r}')
        object.__setattr__(self, 'comparator', comparator)
        object.__setattr__(self, 'threshold', float(self.threshold))
        if self.for_duration_s < 0:
            raise ValueError(f'Rule {self.id}: for_duration_s must not be negative')

    @classmethod
    def from_dict(cls, obj):
        return cls(id=str(obj['id']), selector=str(obj['selector']), comparator=str(obj['comparator']),
                   threshold=float(obj['threshold']), for_duration_s=float(obj.get('for_duration_s', 0.0)))

    def holds(self, value):
        return COMPARATORS[self.comparator](value, self.threshold)

    def to_dict(self):
        return {'id': self.id, 'selector': self.selector, 'comparator': self.comparator,
                'threshold': self.threshold, 'for_duration_s': self.for_duration_s}


class AlertEvent(namedtuple('AlertEvent', ['rule_id', 'state', 'value', 'timestamp_ms', 'series'])):
    def to_dict(self):
        return self._asdict()


class _RuleState(object):
    __slots__ = ('pending_since', 'firing')

    def __init__(self):
        self.pending_since = None
        self.firing = False


class AlertEngine(object):
    """Per (rule, series) state machine: pending -> firing -> resolved.

    A rule looks at the newest sample of each matching series within `lookback_s`; a series without
    a recent sample counts as not matching.
    """

    def __init__(self, store, log_path=None, lookback_s=300.0, max_events=DEFAULT_MAX_EVENTS):
        self.store = store
        self.log_path = log_path
        self.lookback_ms = int(lookback_s * 1000)
        # newest events only; the full history is in the alert log
        self.events = deque(maxlen=max_events)
        self.bad_rules = 0
        self._state = {}
        self._lock = threading.Lock()
        self._logger = get_logger().getChild('alerts')

    def _latest(self, sid, now_ms):
        timestamps, values = self.store.series_points(sid, now_ms - self.lookback_ms, now_ms + 1)
        if not len(timestamps):
            return None
        return float(values[-1])

    def _series_name(self, sid):
        meta = self.store.series_meta(sid)
        labels = ','.join(f'{key}="{value}"' for key, value in meta.labels)
        return f'{meta.name}{{{labels}}}@{meta.device_id}'

    def evaluate(self, rules, now_ms):
        emitted = []
        with self._lock:
            for rule in rules:
                try:
                    selector = MetricSelector.parse(rule.selector)
                except BadSelector as err:
                    self.bad_rules += 1
                    self._logger.warning(f'Skipping rule {rule.id}: {err.message}')
                    continue
                for sid in self.store.series_ids(selector):
                    value = self._latest(sid, now_ms)
                    event = self._step(rule, sid, value, now_ms)
                    if event is not None:
                        emitted.append(event)
            self.events.extend(emitted)
        if emitted and self.log_path is not None:
            append_lines(self.log_path, emitted)
        for event in emitted:
            self._logger.info(f'Alert {event.rule_id} {event.state} on {event.series} (value {event.value})')
        return emitted

    def _step(self, rule, sid, value, now_ms):
        state = self._state.setdefault((rule.id, sid), _RuleState())
        if value is not None and rule.holds(value):
            if state.pending_since is None:
                state.pending_since = now_ms
            if not state.firing and now_ms - state.pending_since >= rule.for_duration_s * 1000:
                state.firing = True
                return AlertEvent(rule.id, FIRING, value, now_ms, self._series_name(sid))
            return None
        state.pending_since = None
        if state.firing:
            state.firing = False
            return AlertEvent(rule.id, RESOLVED, value, now_ms, self._series_name(sid))
        return None

    def firing(self):
        return sorted(rule_id for (rule_id, _), state in self._state.items() if state.firing)

    def query(self, since_ms=None, rule_id=None):
        with self._lock:
            events = list(self.events)
        return [event for event in events
                if (since_ms is None or event.timestamp_ms >= since_ms)
                and (rule_id is None or event.rule_id == rule_id)]


def evaluate_alerts(engine, rules, now_ms):
    return engine.evaluate(rules, now_ms)
