"""Trace assembly, critical path and service dependency graph over stored spans."""
from collections import defaultdict, namedtuple
from dataclasses import dataclass, field
from typing import List, Optional

from fog_observability.core.errors import TraceNotFound
from fog_observability.core.records import TraceSpan

ORPHAN_OPERATION = 'orphan'


@dataclass
class TraceNode:
    span: Optional[TraceSpan]
    children: List['TraceNode'] = field(default_factory=list)
    orphan: bool = False

    @property
    def synthetic(self):
        return self.span is None

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def height(self):
        return 1 + max((child.height() for child in self.children), default=0)

    def to_dict(self):
        return {
            'span': self.span.to_wire() if self.span is not None else {'operation': ORPHAN_OPERATION},
            'orphan': self.orphan,
            'children': [child.to_dict() for child in self.children],
        }


@dataclass
class TraceTree:
    trace_id: str
    root: Optional[TraceNode]
    orphan_root: Optional[TraceNode]

    @property
    def depth(self):
        return self.root.height() if self.root is not None else 0

    @property
    def orphans(self):
        return list(self.orphan_root.children) if self.orphan_root is not None else []

    def spans(self):
        nodes = []
        for top in (self.root, self.orphan_root):
            if top is not None:
                nodes.extend(node.span for node in top.walk() if node.span is not None)
        return nodes

    def to_dict(self):
        return {
            'trace_id': self.trace_id,
            'depth': self.depth,
            'root': self.root.to_dict() if self.root is not None else None,
            'orphans': [node.to_dict() for node in self.orphans],
        }


def _start_key(span):
    return span.start, span.span_id


def assemble_trace(trace_id, spans):
    """Links the spans of one trace parent -> children.

    The earliest span without a parent is the root. Spans whose parent is absent, other parentless
    spans and spans caught in parent cycles hang under a synthetic orphan root, flagged.
    """
    spans = sorted({span.span_id: span for span in spans if span.trace_id == trace_id}.values(), key=_start_key)
    if not spans:
        raise TraceNotFound(f'Trace {trace_id} not found', trace_id=trace_id)
    by_id = {span.span_id: span for span in spans}
    children = defaultdict(list)
    for span in spans:
        if span.parent_span_id is not None and span.parent_span_id != span.span_id and span.parent_span_id in by_id:
            children[span.parent_span_id].append(span)

    placed = set()

    def build(span, orphan=False):
        node = TraceNode(span, orphan=orphan)
        placed.add(span.span_id)
        stack = [node]
        while stack:
            current = stack.pop()
            for child in children.get(current.span.span_id, ()):
                if child.span_id in placed:
                    continue
                placed.add(child.span_id)
                child_node = TraceNode(child)
                current.children.append(child_node)
                stack.append(child_node)
        return node

    root = None
    parentless = [span for span in spans if span.parent_span_id is None]
    if parentless:
        root = build(parentless[0])
    orphan_nodes = []
    for span in spans:
        if span.span_id not in placed:
            orphan_nodes.append(build(span, orphan=True))
    orphan_root = TraceNode(None, children=orphan_nodes, orphan=True) if orphan_nodes else None
    return TraceTree(trace_id=trace_id, root=root, orphan_root=orphan_root)


def self_time(node):
    """Duration minus the union of child intervals clipped to the span; never negative."""
    span = node.span
    intervals = sorted((max(child.span.start, span.start), min(child.span.end, span.end))
                       for child in node.children)
    covered = 0
    current_start = current_end = None
    for start, end in intervals:
        if end <= start:
            continue
        if current_end is None or start > current_end:
            if current_end is not None:
                covered += current_end - current_start
            current_start, current_end = start, end
        else:
            current_end = max(current_end, end)
    if current_end is not None:
        covered += current_end - current_start
    return max(span.duration - covered, 0)


def _best_path(node):
    """(total self-time, path) maximised over root-to-leaf paths below `node`."""
    best_total, best_path = None, []
    for child in sorted(node.children, key=lambda child: _start_key(child.span)):
        total, path = _best_path(child)
        if best_total is None or total > best_total:
            best_total, best_path = total, path
    return self_time(node) + (best_total or 0), [node.span] + best_path


def critical_path(tree):
    """Spans of the root-to-leaf path with the largest sum of self-times.

    Ties go to the child that started first. A trace without a root uses its best orphan subtree.
    """
    tops = [tree.root] if tree.root is not None else sorted(tree.orphans, key=lambda node: _start_key(node.span))
    best_total, best_path = None, []
    for top in tops:
        total, path = _best_path(top)
        if best_total is None or total > best_total:
            best_total, best_path = total, path
    return best_path


DependencyEdge = namedtuple('DependencyEdge', ['source', 'target', 'count', 'mean_duration_us'])


class DependencyGraph(namedtuple('DependencyGraph', ['nodes', 'edges'])):
    def edge(self, source, target):
        for item in self.edges:
            if item.source == source and item.target == target:
                return item
        return None

    def to_dict(self):
        return {'nodes': list(self.nodes), 'edges': [item._asdict() for item in self.edges]}


def dependency_graph(children, lookup_parent):
    """One edge per parent.service -> child.service over `children`; weight is the call count.

    `lookup_parent(span)` returns the parent span or None.
    """
    durations = defaultdict(list)
    for span in children:
        if span.parent_span_id is None:
            continue
        parent = lookup_parent(span)
        if parent is None:
            continue
        durations[(parent.service, span.service)].append(span.duration)
    edges = [DependencyEdge(source, target, len(values), sum(values) / len(values))
             for (source, target), values in sorted(durations.items())]
    nodes = sorted({name for edge in edges for name in (edge.source, edge.target)})
    return DependencyGraph(tuple(nodes), tuple(edges))
