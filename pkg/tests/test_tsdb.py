import numpy as np
import pytest

from conftest import T0_MS
from fog_observability.core.errors import BadSelector, InvalidRange
from fog_observability.core.fog.selector import MetricSelector
from fog_observability.core.fog.tsdb import TimeSeriesStore, reset_corrected_increase


def _points(store, selector='node_load1', start=T0_MS, end=T0_MS + 3_600_000):
    return [series.points for series in store.query_range(selector, start, end)]


def test_raw_points_in_time_order(make_sample):
    store = TimeSeriesStore()
    for offset, value in ((2000, 3.0), (0, 1.0), (1000, 2.0)):
        store.append(make_sample(value=value, ts=T0_MS + offset))
    assert _points(store) == [[(T0_MS, 1.0), (T0_MS + 1000, 2.0), (T0_MS + 2000, 3.0)]]
    assert _points(store, end=T0_MS + 2000) == [[(T0_MS, 1.0), (T0_MS + 1000, 2.0)]]


def test_last_write_wins_in_the_head(make_sample):
    store = TimeSeriesStore()
    store.append(make_sample(value=1.0))
    store.append(make_sample(value=7.0))
    assert len(store) == 1
    assert _points(store) == [[(T0_MS, 7.0)]]


def test_last_write_wins_across_a_seal(make_sample):
    store = TimeSeriesStore(head_max_samples=2)
    store.append(make_sample(value=1.0, ts=T0_MS))
    store.append(make_sample(value=2.0, ts=T0_MS + 1000))
    assert store.segment_count == 1
    store.append(make_sample(value=9.0, ts=T0_MS))
    assert len(store) == 2
    assert _points(store) == [[(T0_MS, 9.0), (T0_MS + 1000, 2.0)]]


def test_rewriting_a_sealed_point_with_its_value_is_a_no_op(make_sample):
    store = TimeSeriesStore(head_max_samples=2)
    store.append(make_sample(value=1.0, ts=T0_MS))
    store.append(make_sample(value=2.0, ts=T0_MS + 1000))
    store.append(make_sample(value=1.0, ts=T0_MS))
    assert len(store) == 2
    assert store.segment_count == 1


def test_sealed_segments_store_timestamp_deltas(make_sample):
    store = TimeSeriesStore(head_max_samples=3)
    for k in range(3):
        store.append(make_sample(value=float(k), ts=T0_MS + 5000 * k))
    segment = store.seal() or store._segments[0]
    assert segment.ts_deltas.tolist() == [T0_MS, 5000, 5000]


def test_sealed_segments_reload(tmp_path, make_sample):
    store = TimeSeriesStore(head_max_samples=2, data_dir=tmp_path)
    for k in range(4):
        store.append(make_sample(value=float(k), ts=T0_MS + 1000 * k, core=str(k % 2)))
    reloaded = TimeSeriesStore(head_max_samples=2, data_dir=tmp_path)
    assert len(reloaded) == 4
    assert reloaded.segment_count == store.segment_count
    assert [series.labels for series in reloaded.query_range('node_load1', T0_MS, T0_MS + 10_000)] == \
        [(('core', '0'),), (('core', '1'),)]


@pytest.fixture
def counters(make_sample):
    store = TimeSeriesStore()
    for k, value in enumerate([0.0, 10.0, 20.0, 5.0]):
        store.append(make_sample(name='node_cpu_seconds_total', value=value, ts=T0_MS + 1000 * k))
    return store


def test_rate_corrects_counter_resets(counters):
    [series] = counters.query_range('node_cpu_seconds_total', T0_MS, T0_MS + 10_000, 'rate', step_s=10)
    assert series.points == [(T0_MS, pytest.approx(2.5))]


def test_rate_uses_the_clipped_last_window(counters):
    [series] = counters.query_range('node_cpu_seconds_total', T0_MS, T0_MS + 4000, 'rate', step_s=10)
    assert series.points == [(T0_MS, pytest.approx(25 / 4))]


@pytest.mark.parametrize('aggregation, expected', [
    ('avg', [5.0, 12.5]),
    ('min', [0.0, 5.0]),
    ('max', [10.0, 20.0]),
])
def test_windowed_aggregations(counters, aggregation, expected):
    [series] = counters.query_range('node_cpu_seconds_total', T0_MS, T0_MS + 4000, aggregation, step_s=2)
    assert series.points == [(T0_MS, expected[0]), (T0_MS + 2000, expected[1])]


def test_reset_corrected_increase():
    assert reset_corrected_increase(np.array([0.0, 10.0, 20.0, 5.0])) == 25.0
    assert reset_corrected_increase(np.array([3.0])) == 0.0


def test_query_errors(counters):
    with pytest.raises(InvalidRange):
        counters.query_range('node_cpu_seconds_total', T0_MS, T0_MS)
    with pytest.raises(InvalidRange):
        counters.query_range('node_cpu_seconds_total', T0_MS, T0_MS + 10, 'avg')
    for aggregation in ('avg', 'rate'):
        with pytest.raises(InvalidRange):
            counters.query_range('node_cpu_seconds_total', T0_MS, T0_MS + 30_000, aggregation, step_s=0.0004)
    with pytest.raises(ValueError):
        counters.query_range('node_cpu_seconds_total', T0_MS, T0_MS + 10, 'p99', step_s=1)
    with pytest.raises(BadSelector):
        counters.query_range('node_cpu{mode=idle}', T0_MS, T0_MS + 10)


@pytest.fixture
def labelled(make_sample):
    store = TimeSeriesStore()
    for device in ('truck-00', 'truck-01'):
        for mode in ('idle', 'user', 'system'):
            store.append(make_sample(name='node_cpu_seconds_total', value=1.0, device=device, mode=mode))
    store.append(make_sample(name='node_load1', device='truck-00'))
    return store


@pytest.mark.parametrize('selector, count', [
    ('node_cpu_seconds_total', 6),
    ('node_cpu_seconds_total{mode="idle"}', 2),
    ('node_cpu_seconds_total{mode!="idle"}', 4),
    ('node_cpu_seconds_total{mode=~"u.*|sys.*"}', 4),
    ('node_cpu_seconds_total{mode!~".*e.*"}', 0),
    ('node_cpu_seconds_total{mode=~"us"}', 0),
    ('{device_id="truck-01"}', 3),
    ('{__name__=~"node_.*",device_id="truck-00"}', 4),
    ('node_cpu_seconds_total{cpu="0"}', 0),
    ('node_cpu_seconds_total{cpu!="0"}', 6),
])
def test_selectors(labelled, selector, count):
    assert len(labelled.series_ids(selector)) == count


@pytest.mark.parametrize('text', ['', '{}', 'node_cpu{mode="idle"', 'node_cpu{mode=idle}', 'node_cpu{mode=~"("}'])
def test_bad_selectors(text):
    with pytest.raises(BadSelector):
        MetricSelector.parse(text)


def test_results_are_ordered_by_series(labelled):
    results = labelled.query_range('node_cpu_seconds_total', T0_MS, T0_MS + 1)
    keys = [(series.name, series.labels, series.device_id) for series in results]
    assert keys == sorted(keys)


def test_delete_samples_from_head_and_segments(make_sample):
    store = TimeSeriesStore(head_max_samples=3)
    samples = [make_sample(value=float(k), ts=T0_MS + 1000 * k) for k in range(5)]
    for sample in samples:
        store.append(sample)
    assert store.delete_samples([samples[0], samples[4]]) == 2
    assert [ts for ts, _ in _points(store)[0]] == [T0_MS + 1000, T0_MS + 2000, T0_MS + 3000]
    assert store.delete_samples([samples[0]]) == 0


def test_samples_filter_by_device(labelled):
    assert {sample.device_id for sample in labelled.samples(device_filter={'truck-01'})} == {'truck-01'}
    assert len(labelled.samples(start=T0_MS + 1)) == 0


def test_raw_queries_match_a_scan(make_sample):
    rng = np.random.default_rng(3)
    store = TimeSeriesStore(head_max_samples=64)
    truth = {}
    for _ in range(600):
        device = f'truck-0{rng.integers(3)}'
        mode = ('idle', 'user')[rng.integers(2)]
        ts = T0_MS + int(rng.integers(0, 600)) * 1000
        value = float(rng.integers(0, 1000))
        store.append(make_sample(name='node_cpu_seconds_total', value=value, ts=ts, device=device, mode=mode))
        truth[(device, mode, ts)] = value
    for _ in range(1000):
        start = T0_MS + int(rng.integers(0, 600)) * 1000
        end = start + int(rng.integers(1, 300)) * 1000
        device = f'truck-0{rng.integers(3)}'
        results = store.query_range(f'node_cpu_seconds_total{{device_id="{device}"}}', start, end)
        got = {(series.device_id, dict(series.labels)['mode'], ts): value
               for series in results for ts, value in series.points}
        expected = {key: value for key, value in truth.items() if key[0] == device and start <= key[2] < end}
        assert got == expected
