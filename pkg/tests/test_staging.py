import pytest

from conftest import T0_MS
from fog_observability.core.edge.planner import BatchPlanner, LinkState, plan_batches
from fog_observability.core.edge.staging import StageResult, StagingStore
from fog_observability.core.errors import RecordTooLarge
from fog_observability.core.model import InstrumentationDomain, OverheadScore, validate_weights
from fog_observability.core.records import ObservabilityRecord
from fog_observability.core.wire.protocol import FRAME_OVERHEAD

METRIC, LOG, TRACE = InstrumentationDomain.METRIC, InstrumentationDomain.LOG, InstrumentationDomain.TRACE


@pytest.fixture
def wrap(make_sample, make_log, make_span):
    def _wrap(domain, ts_offset_ms=0, index=0):
        ts = T0_MS + ts_offset_ms
        if domain == METRIC:
            payload = make_sample(value=float(index), ts=ts, seq=str(index))
        elif domain == LOG:
            payload = make_log(message=f'clip uploaded seq={index}', ts=ts)
        else:
            payload = make_span(trace=index + 1, span=index + 1, start=ts * 1000)
        return ObservabilityRecord.wrap(payload)
    return _wrap


def _store_for(records, weights, extra=0):
    return StagingStore(sum(record.encoded_size for record in records) + extra, weights, high_watermark=1.0)


def test_lowest_weight_domain_is_evicted_first(wrap, balanced):
    records = [wrap(TRACE, 0, 0), wrap(TRACE, 10, 1), wrap(LOG, 0), wrap(METRIC, 0)]
    store = _store_for(records, balanced)
    for record in records:
        assert store.stage(record) == StageResult.ACCEPTED
    assert store.stage(wrap(METRIC, 20, 1)) == StageResult.EVICTED_THEN_ACCEPTED
    event = store.eviction_log[0]
    assert event.domain == TRACE
    assert event.dedup_key == records[0].dedup_key
    assert event.oldest_retained_ms == records[1].timestamp_ms
    assert store.counters[TRACE].evicted == 1
    assert store.counters[METRIC].evicted == 0


def test_next_domain_loses_once_the_lowest_is_empty(wrap, balanced):
    records = [wrap(TRACE, 0), wrap(LOG, 0, 0), wrap(LOG, 5, 1), wrap(METRIC, 0)]
    store = _store_for(records, balanced)
    for record in records:
        store.stage(record)
    big = [wrap(METRIC, 10 + k, k + 1) for k in range(3)]
    for record in big:
        store.stage(record)
    domains = [event.domain for event in store.eviction_log]
    assert domains[0] == TRACE
    assert set(domains[1:]) <= {LOG, METRIC}
    assert domains.index(LOG) < (domains.index(METRIC) if METRIC in domains else len(domains))


def test_zero_weight_domain_goes_before_any_managed_domain(wrap):
    weights = validate_weights(0.5, 0.5, 0.0)
    records = [wrap(TRACE, 0), wrap(LOG, 0), wrap(METRIC, 0)]
    store = _store_for(records, weights)
    for record in records:
        store.stage(record)
    store.stage(wrap(LOG, 10, 1))
    assert store.eviction_log[0].domain == TRACE
    assert store.eviction_log[0].weight == 0


def test_equal_weights_evict_from_the_largest_domain(wrap, symmetric):
    records = [wrap(LOG, 0, 0), wrap(LOG, 1, 1), wrap(LOG, 2, 2), wrap(METRIC, 0)]
    store = _store_for(records, symmetric)
    for record in records:
        store.stage(record)
    store.stage(wrap(METRIC, 10, 1))
    assert store.eviction_log[0].domain == LOG
    assert store.eviction_log[0].timestamp_ms == T0_MS


def test_records_are_kept_in_source_time_order(wrap, balanced):
    store = StagingStore(1 << 20, balanced)
    for offset in (30, 10, 20, 0):
        store.stage(wrap(LOG, offset, offset))
    assert [record.timestamp_ms - T0_MS for record in store.snapshot(LOG)] == [0, 10, 20, 30]


def test_oversized_record_is_rejected_and_counted(wrap, balanced):
    record = wrap(LOG, 0)
    store = StagingStore(1 << 20, balanced, max_record_bytes=record.encoded_size - 1)
    with pytest.raises(RecordTooLarge):
        store.stage(record)
    assert store.counters[LOG].rejected == 1
    assert store.is_empty()


def test_remove_acked_updates_counters(wrap, balanced):
    store = StagingStore(1 << 20, balanced)
    records = [wrap(LOG, k, k) for k in range(3)]
    for record in records:
        store.stage(record)
    count, size = store.remove_acked(records[:2])
    assert count == 2
    assert size == records[0].encoded_size + records[1].encoded_size
    assert store.counters[LOG].acked == 2
    assert store.snapshot(LOG) == [records[2]]
    assert store.remove_acked(records[:2]) == (0, 0)


def test_total_never_passes_the_watermark(wrap, balanced):
    store = StagingStore(4096, balanced, high_watermark=0.5)
    for k in range(50):
        store.stage(wrap([METRIC, LOG, TRACE][k % 3], k, k))
        assert store.total_bytes <= store.limit_bytes


def test_invalid_store_settings(balanced):
    with pytest.raises(ValueError):
        StagingStore(0, balanced)
    with pytest.raises(ValueError):
        StagingStore(1024, balanced, high_watermark=1.5)


def _filled(wrap, weights, per_domain=10):
    store = StagingStore(1 << 22, weights)
    for k in range(per_domain):
        for domain in (METRIC, LOG, TRACE):
            store.stage(wrap(domain, k, k))
    return store


def test_plan_respects_the_link_budget(wrap, balanced):
    store = _filled(wrap, balanced)
    budget = 2000
    plan = BatchPlanner('truck-00', max_batch_bytes=600).plan(store, LinkState(True, budget), balanced, {})
    assert plan
    assert sum(batch.encoded_bytes for batch in plan) <= budget
    assert all(batch.encoded_bytes <= 600 or len(batch) == 1 for batch in plan)


def test_plan_is_empty_when_the_link_is_down(wrap, balanced):
    assert plan_batches(_filled(wrap, balanced), LinkState.down(), balanced, {}) == []
    assert plan_batches(_filled(wrap, balanced), LinkState(True, 0), balanced, {}) == []


def test_higher_priority_domain_goes_first(wrap, balanced):
    plan = plan_batches(_filled(wrap, balanced), LinkState(True, 1 << 20), balanced, {})
    assert [batch.domain for batch in plan][:1] == [METRIC]
    assert {batch.domain for batch in plan} == {METRIC, LOG, TRACE}


def test_overhead_lowers_priority(wrap, balanced):
    over = {METRIC: OverheadScore(50.0), LOG: OverheadScore(1.0), TRACE: OverheadScore(1.0)}
    plan = plan_batches(_filled(wrap, balanced), LinkState(True, 1 << 20), balanced, over)
    assert plan[0].domain == LOG


def test_zero_weight_domain_is_never_planned(wrap):
    weights = validate_weights(1.0, 0.0, 0.0)
    plan = plan_batches(_filled(wrap, weights), LinkState(True, 1 << 20), weights, {})
    assert {batch.domain for batch in plan} == {METRIC}


def test_unacked_batch_is_resent_with_its_sequence_number(wrap, balanced):
    store = _filled(wrap, balanced, per_domain=2)
    planner = BatchPlanner('truck-00')
    link = LinkState(True, 1 << 20)
    first = planner.plan(store, link, balanced, {})
    seqs = {batch.domain: batch.batch_seq for batch in first}
    assert set(seqs.values()) == {1}
    again = planner.plan(store, link, balanced, {})
    assert {batch.domain: batch.batch_seq for batch in again} == seqs
    planner.mark_acked(first[0])
    store.remove_acked(first[0].records)
    store.stage(wrap(first[0].domain, 100, 100))
    third = planner.plan(store, link, balanced, {})
    assert [batch.batch_seq for batch in third if batch.domain == first[0].domain] == [2]


def test_evicted_records_leave_pending_batches(wrap, balanced):
    store = _filled(wrap, balanced, per_domain=2)
    planner = BatchPlanner('truck-00')
    link = LinkState(True, 1 << 20)
    planner.plan(store, link, balanced, {})
    store.remove_acked(store.snapshot(TRACE))
    again = planner.plan(store, link, balanced, {})
    assert TRACE not in {batch.domain for batch in again}
    assert planner.pending[TRACE] == []


def test_batches_need_room_for_the_frame_header():
    with pytest.raises(ValueError):
        BatchPlanner('truck-00', max_batch_bytes=FRAME_OVERHEAD)
