import re
from collections import namedtuple

from fog_observability.core.errors import BadSelector

_SELECTOR_RE = re.compile(r'^\s*([a-zA-Z_:][a-zA-Z0-9_:]*)?\s*(?:\{(.*)\})?\s*$', re.DOTALL)
_MATCHER_RE = re.compile(r'\s*([a-zA-Z_][a-zA-Z0-9_]*)\s*(=~|!~|!=|=)\s*"((?:[^"\\]|\\.)*)"\s*(?:,|$)')

Matcher = namedtuple('Matcher', ['label', 'op', 'value', 'pattern'])

# labels that select on the sample's own fields rather than its labels
DEVICE_LABEL = 'device_id'
NAME_LABEL = '__name__'


class MetricSelector(object):
    """`name{label="v",other!="x",re=~"a.*"}`; `device_id` matches the source device."""

    def __init__(self, name=None, matchers=()):
        self.name = name
        self.matchers = tuple(matchers)

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        match = _SELECTOR_RE.match(text or '')
        if not match or (match.group(1) is None and not match.group(2)):
            raise BadSelector(f'Malformed selector {text!r}', selector=text)
        name, body = match.group(1), match.group(2) or ''
        matchers = []
        position = 0
        body = body.strip()
        while position < len(body):
            found = _MATCHER_RE.match(body, position)
            if not found or found.end() == position:
                raise BadSelector(f'Malformed matcher in {text!r} at {body[position:]!r}', selector=text)
            label, op, raw_value = found.groups()
            value = raw_value.replace('\\"', '"').replace('\\\\', '\\')
            pattern = None
            if op in ('=~', '!~'):
                try:
                    pattern = re.compile(value)
                except re.error as err:
                    raise BadSelector(f'Bad regex {value!r} in {text!r}: {err}', selector=text)
            matchers.append(Matcher(label, op, value, pattern))
            position = found.end()
        return cls(name=name, matchers=matchers)

    @staticmethod
    def _check(matcher, actual):
        actual = '' if actual is None else actual
        if matcher.op == '=':
            return actual == matcher.value
        if matcher.op == '!=':
            return actual != matcher.value
        if matcher.op == '=~':
            return matcher.pattern.fullmatch(actual) is not None
        return matcher.pattern.fullmatch(actual) is None

    def matches(self, name, labels, device_id):
        if self.name is not None and name != self.name:
            return False
        label_map = dict(labels)
        for matcher in self.matchers:
            if matcher.label == DEVICE_LABEL:
                actual = device_id
            elif matcher.label == NAME_LABEL:
                actual = name
            else:
                actual = label_map.get(matcher.label)
            if not self._check(matcher, actual):
                return False
        return True

    def __str__(self):
        body = ','.join(f'{m.label}{m.op}"{m.value}"' for m in self.matchers)
        return f'{self.name or ""}{{{body}}}' if body else (self.name or '{}')
