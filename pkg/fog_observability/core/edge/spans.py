"""In-process span recording: explicit start/end calls, a context manager and a decorator."""
import contextlib
import functools
import random
import threading
import uuid
from dataclasses import dataclass, field
from typing import Dict, Optional

from fog_observability.core.errors import UnbalancedSpan
from fog_observability.core.records import TraceSpan
from fog_observability.utils.logger import get_logger


@dataclass
class OpenSpan:
    trace_id: str
    span_id: str
    parent_span_id: Optional[str]
    service: str
    operation: str
    start: int
    attributes: Dict[str, str] = field(default_factory=dict)

    def set_attribute(self, key, value):
        self.attributes[str(key)] = str(value)


class SpanRecorder(object):
    """Builds TraceSpans from start/end calls and hands finished spans to `sink`.

    A span without an explicit parent continues the innermost open span of the calling thread,
    or starts a new trace.
    """

    def __init__(self, service, clock, sink=None, device_id='', seed=None):
        self.service = service
        self.clock = clock
        self.sink = sink
        self.device_id = device_id
        self.unbalanced = 0
        self.finished = 0
        self._rng = random.Random(seed) if seed is not None else None
        self._open = {}
        self._lock = threading.Lock()
        self._local = threading.local()
        self._logger = get_logger().getChild('spans')

    def _new_id(self, bits):
        if self._rng is None:
            return uuid.uuid4().hex[:bits // 4]
        with self._lock:
            return f'{self._rng.getrandbits(bits):0{bits // 4}x}'

    def _stack(self):
        if not hasattr(self._local, 'stack'):
            self._local.stack = []
        return self._local.stack

    def start_span(self, operation, parent=None, service=None, attributes=None):
        stack = self._stack()
        if parent is None and stack:
            parent = stack[-1]
        trace_id = parent.trace_id if parent is not None else self._new_id(128)
        handle = OpenSpan(trace_id=trace_id, span_id=self._new_id(64),
                          parent_span_id=parent.span_id if parent is not None else None,
                          service=service or self.service, operation=operation, start=self.clock.now_us(),
                          attributes={str(key): str(value) for key, value in (attributes or {}).items()})
        with self._lock:
            self._open[handle.span_id] = handle
        stack.append(handle)
        return handle

    def end_span(self, handle, attributes=None):
        with self._lock:
            opened = self._open.pop(getattr(handle, 'span_id', None), None)
        if opened is None:
            self.unbalanced += 1
            raise UnbalancedSpan(f'end_span for a span that is not open: {handle!r}')
        stack = self._stack()
        if opened in stack:
            stack.remove(opened)
        for key, value in (attributes or {}).items():
            opened.set_attribute(key, value)
        end = self.clock.now_us()
        span = TraceSpan(trace_id=opened.trace_id, span_id=opened.span_id, parent_span_id=opened.parent_span_id,
                         service=opened.service, operation=opened.operation, start=opened.start,
                         duration=max(end - opened.start, 0), attributes=tuple(opened.attributes.items()),
                         device_id=self.device_id)
        self.finished += 1
        if self.sink is not None:
            self.sink(span)
        return span

    @contextlib.contextmanager
    def span(self, operation, parent=None, service=None, attributes=None):
        handle = self.start_span(operation, parent=parent, service=service, attributes=attributes)
        try:
            yield handle
        except Exception as err:
            handle.set_attribute('error', type(err).__name__)
            raise
        finally:
            self.end_span(handle)

    def traced(self, operation=None):
        """Decorator recording one span per call."""
        def decorator(func):
            @functools.wraps(func)
            def wrapper(*args, **kwargs):
                with self.span(operation or func.__name__):
                    return func(*args, **kwargs)
            return wrapper
        return decorator


def record_span(recorder, operation, parent=None, service=None):
    """Starts a span; pair it with `recorder.end_span`."""
    return recorder.start_span(operation, parent=parent, service=service)
