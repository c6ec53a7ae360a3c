"""Overhead vectors from resource samples and their composition into an OutcomeReport."""
from collections import defaultdict, namedtuple

import numpy as np
import psutil

from fog_observability.core.errors import NoSamples
from fog_observability.core.meter.sampling import ResourceSample
from fog_observability.core.model import (EPSILON_OVER, CorrelationScore, InstrumentationDomain, OverheadScore,
                                          OverheadVector, outcome, overhead_score)
from fog_observability.utils.structured import read_lines

EDGE = 'edge'
FOG = 'fog'
ARCHIVE = 'archive'
ANALYSIS_COMPONENTS = (FOG, ARCHIVE)


class MeterBasis(namedtuple('MeterBasis', ['mem_budget_bytes', 'link_capacity_bytes_per_s'])):
    """Denominators shared by every vector of a report; CPU is already a share of the machine."""

    @classmethod
    def from_cfg(cls, meter_cfg):
        """Without a configured memory budget the physical memory of the host is used."""
        mem_budget = meter_cfg.mem_budget_bytes or psutil.virtual_memory().total
        return cls(int(mem_budget), float(meter_cfg.link_capacity_bytes_per_s))


def edge_component(domain):
    return f'{EDGE}.{InstrumentationDomain.parse(domain).value}'


class MeterReport(object):
    def __init__(self, basis, samples=()):
        self.basis = basis
        self.samples = defaultdict(list)
        self.gaps = defaultdict(list)
        for sample in samples:
            self.add(sample)

    def add(self, sample):
        self.samples[sample.component].append(sample)

    def record_gap(self, component, timestamp_ms):
        self.gaps[component].append(timestamp_ms)

    def components(self):
        return sorted(self.samples)

    def has_samples(self, component, start=None, end=None):
        return bool(self._select(component, start, end))

    def _select(self, component, start, end):
        return [sample for sample in self.samples.get(component, ())
                if (start is None or sample.timestamp_ms >= start) and (end is None or sample.timestamp_ms < end)]

    def to_vector(self, sample):
        mem_pct = 100.0 * sample.mem_bytes / self.basis.mem_budget_bytes
        net_pct = 100.0 * sample.net_bytes_delta / (self.basis.link_capacity_bytes_per_s * sample.window_s)
        return OverheadVector.clamped(sample.cpu_pct, mem_pct, net_pct)

    def overhead_of(self, component, start=None, end=None):
        """Mean of each field over the samples in [start, end), as a share of its budget."""
        selected = self._select(component, start, end)
        if not selected:
            raise NoSamples(f'No samples for {component} in [{start}, {end})', component=component)
        vectors = np.array([[v.cpu_pct, v.mem_pct, v.net_pct] for v in map(self.to_vector, selected)])
        return OverheadVector.clamped(*vectors.mean(axis=0))

    def to_dict(self):
        return {
            'basis': self.basis._asdict(),
            'samples': {component: [sample.to_dict() for sample in samples]
                        for component, samples in sorted(self.samples.items())},
            'gaps': {component: list(stamps) for component, stamps in sorted(self.gaps.items())},
        }


def load_report(path, basis):
    return MeterReport(basis, [ResourceSample.from_dict(obj) for obj in read_lines(path)])


def overhead_of(report, component, start=None, end=None):
    return report.overhead_of(component, start, end)


def _collection_overhead(report, weights, domain, window):
    """Edge overhead of one domain; a zero-weight domain without samples gets the floor score."""
    for component in (edge_component(domain), EDGE):
        if report.has_samples(component, window.start, window.end):
            return overhead_score(report.overhead_of(component, window.start, window.end))
    if weights.weight(domain) == 0:
        return OverheadScore(EPSILON_OVER)
    raise NoSamples(f'No edge samples for {domain.value} in the window', domain=domain.value)


def analysis_overhead(report, start=None, end=None):
    """Fog and archive vectors summed field by field, clamped to 100."""
    vectors = [report.overhead_of(component, start, end) for component in ANALYSIS_COMPONENTS
               if report.has_samples(component, start, end)]
    if not vectors:
        raise NoSamples('No fog or archive samples in the window')
    return OverheadVector.clamped(sum(v.cpu_pct for v in vectors), sum(v.mem_pct for v in vectors),
                                  sum(v.net_pct for v in vectors))


def compose_outcome(report, weights, window, fog_handle):
    """`fog_handle.correlate(window)` may return a CorrelationScore or anything carrying one as `.score`."""
    over = {domain: _collection_overhead(report, weights, domain, window) for domain in InstrumentationDomain}
    over_x = overhead_score(analysis_overhead(report, window.start, window.end))
    correlation = fog_handle.correlate(window)
    if not isinstance(correlation, CorrelationScore):
        correlation = correlation.score
    return outcome(weights, over[InstrumentationDomain.METRIC], over[InstrumentationDomain.LOG],
                   over[InstrumentationDomain.TRACE], correlation, over_x)
