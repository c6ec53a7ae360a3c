import os

import pytest

from conftest import T0_MS
from fog_observability.core.cfg_utils import load_weight_profile
from fog_observability.core.errors import AccountingUnavailable, NoSamples
from fog_observability.core.fog.node import FogNode
from fog_observability.core.meter.report import (MeterBasis, MeterReport, analysis_overhead, compose_outcome,
                                                 edge_component, load_report)
from fog_observability.core.meter.sampling import (InjectedAccounting, MeterSampler, PsutilAccounting, ResourceSample,
                                                   sample_component)
from fog_observability.core.model import CorrelationWindow, InstrumentationDomain, OverheadScore
from fog_observability.core.records import ObservabilityRecord
from fog_observability.utils.structured import read_lines

BASIS = MeterBasis(mem_budget_bytes=1000, link_capacity_bytes_per_s=1000.0)
WINDOW = CorrelationWindow(T0_MS, T0_MS + 10_000)


def _injected(cpu_pct, mem_bytes, net_bytes=0, cores=1):
    source = InjectedAccounting(cores=cores)
    source.inject(cpu_pct, mem_bytes, net_bytes)
    return source


def _sample(component, ts, cpu_pct=0.0, mem_bytes=0, net_bytes=0):
    return ResourceSample(component, ts, cpu_pct, mem_bytes, net_bytes, 5.0)


def test_cpu_is_normalised_by_cores():
    sample = sample_component('edge', _injected(100.0, 64, cores=4), T0_MS, 5.0)
    assert sample.cpu_pct == 25.0
    assert sample_component('edge', _injected(900.0, 64, cores=4), T0_MS, 5.0).cpu_pct == 100.0


def test_reading_before_injection_is_a_gap():
    with pytest.raises(AccountingUnavailable):
        InjectedAccounting().read(5.0)


def test_psutil_accounting_reads_this_process():
    counter = iter([100, 350])
    source = PsutilAccounting(os.getpid(), net_counter=lambda: next(counter))
    reading = source.read(1.0)
    assert reading.mem_bytes > 0
    assert reading.cpu_pct >= 0
    assert reading.net_bytes_delta == 250
    assert source.cores >= 1


def test_overhead_is_the_mean_share_of_each_budget():
    report = MeterReport(BASIS, [_sample('fog', T0_MS, 10.0, 500, 2500), _sample('fog', T0_MS + 5000, 30.0, 100, 0)])
    vector = report.overhead_of('fog', T0_MS, T0_MS + 10_000)
    assert vector.cpu_pct == pytest.approx(20.0)
    assert vector.mem_pct == pytest.approx(30.0)
    assert vector.net_pct == pytest.approx(25.0)
    assert report.overhead_of('fog', T0_MS + 5000).cpu_pct == pytest.approx(30.0)
    with pytest.raises(NoSamples):
        report.overhead_of('fog', T0_MS + 10_000)
    with pytest.raises(NoSamples):
        report.overhead_of('archive')


def test_oversized_usage_is_clamped():
    report = MeterReport(BASIS, [_sample('fog', T0_MS, 50.0, 5000, 10 ** 9)])
    vector = report.overhead_of('fog')
    assert (vector.mem_pct, vector.net_pct) == (100.0, 100.0)


def test_analysis_sums_fog_and_archive():
    report = MeterReport(BASIS, [_sample('fog', T0_MS, 60.0, 200), _sample('archive', T0_MS, 70.0, 100)])
    vector = analysis_overhead(report)
    assert (vector.cpu_pct, vector.mem_pct) == (100.0, pytest.approx(30.0))
    with pytest.raises(NoSamples):
        analysis_overhead(MeterReport(BASIS, [_sample('edge', T0_MS, 1.0)]))


@pytest.fixture
def fog(make_sample, make_log, make_span):
    node = FogNode()
    for payload in (make_sample(ts=T0_MS + 10), make_log(ts=T0_MS + 20), make_span(start=(T0_MS + 30) * 1000)):
        record = ObservabilityRecord.wrap(payload)
        node.ingest_records('truck-00', record.domain, [record])
    return node


def test_closed_loop_outcome(tmp_path, clock, balanced, fog):
    sources = {
        'edge': _injected(10.0, 100),
        'fog': _injected(5.0, 200),
        'archive': _injected(5.0, 100),
    }
    samples_path = tmp_path / 'meter.jsonl'
    sampler = MeterSampler(sources, clock, samples_path, interval_s=5.0)
    sampler.sample_once()
    clock.advance(5.0)
    sampler.sample_once()
    assert len(read_lines(samples_path)) == 6
    report = load_report(samples_path, BASIS)
    assert report.components() == ['archive', 'edge', 'fog']
    result = compose_outcome(report, balanced, WINDOW, fog)
    assert result.over_metric.value == pytest.approx(10.0)
    assert result.over_x.value == pytest.approx(30.0)
    assert result.x_score.score == 1.0
    assert result.collection_term == pytest.approx(0.5 / 10 + 0.3 / 10 + 0.2 / 10)
    assert result.analysis_term == pytest.approx(1 / 30)
    assert result.outcome == pytest.approx(0.1 + 1 / 30)


def test_domain_components_take_precedence(balanced, fog):
    report = MeterReport(BASIS, [
        _sample('edge', T0_MS, 10.0),
        _sample('edge.log', T0_MS, 40.0),
        _sample('fog', T0_MS, 5.0),
    ])
    result = compose_outcome(report, balanced, WINDOW, fog)
    assert result.over_log.value == pytest.approx(40.0)
    assert result.over_trace.value == pytest.approx(10.0)


def test_unmanaged_domains_get_the_floor(fog):
    report = MeterReport(BASIS, [_sample('edge.metric', T0_MS, 10.0), _sample('fog', T0_MS, 5.0)])
    result = compose_outcome(report, load_weight_profile('metrics_only'), WINDOW, fog)
    assert result.over_log == OverheadScore(0.01)
    assert result.collection_term == pytest.approx(0.1)


def test_managed_domain_without_samples(balanced, fog):
    report = MeterReport(BASIS, [_sample('edge.metric', T0_MS, 10.0), _sample('fog', T0_MS, 5.0)])
    with pytest.raises(NoSamples):
        compose_outcome(report, balanced, WINDOW, fog)


def test_sampler_counts_gaps(clock):
    report = MeterReport(BASIS)
    sampler = MeterSampler({'edge': _injected(1.0, 10), 'fog': InjectedAccounting()}, clock, None, report=report)
    samples = sampler.sample_once()
    assert [sample.component for sample in samples] == ['edge']
    assert sampler.gaps == 1
    assert report.gaps['fog'] == [T0_MS]
    assert report.components() == ['edge']


def test_basis_from_config(cfg):
    basis = MeterBasis.from_cfg(cfg.meter)
    assert basis.mem_budget_bytes > 0
    assert basis.link_capacity_bytes_per_s == 1250000.0
    cfg.meter.mem_budget_bytes = 2048
    assert MeterBasis.from_cfg(cfg.meter).mem_budget_bytes == 2048


def test_edge_components_are_named_per_domain():
    assert edge_component(InstrumentationDomain.TRACE) == 'edge.trace'
