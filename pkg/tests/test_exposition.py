import io
import math

import pytest

from fog_observability.core.errors import InvalidInterval, ParseError
from fog_observability.core.exposition import (MetricKind, ReductionPolicy, encode_exposition, estimate_reduction,
                                               parse_exposition, resolve_allowlist)
from fog_observability.core.replay.workload import SyntheticExposition

COLLECTORS = {'cpu': 'node_cpu', 'memory': 'node_memory', 'disk': 'node_disk', 'network': 'node_network',
              'powersupply': 'node_power_supply'}

SMALL = b'''# HELP node_cpu_seconds_total Seconds the CPUs spent in each mode.
# TYPE node_cpu_seconds_total counter
node_cpu_seconds_total{cpu="0",mode="idle"} 1234.5
node_cpu_seconds_total{mode="user",cpu="0"} 99 1622534400000
# HELP node_load1 1m load average.
# TYPE node_load1 gauge
node_load1 0.42
# a free-form comment
http_request_duration_seconds_bucket{le="0.1"} 3
# HELP rpc_latency_seconds Latency.
# TYPE rpc_latency_seconds histogram
rpc_latency_seconds_bucket{le="+Inf"} 7
rpc_latency_seconds_sum 1.5
rpc_latency_seconds_count 7
'''


@pytest.fixture(scope='module')
def corpus():
    return parse_exposition(SyntheticExposition(66560, seed=7).render(0))


def test_parse_groups_samples_into_families():
    doc = parse_exposition(SMALL)
    assert [family.name for family in doc.families] == ['node_cpu_seconds_total', 'node_load1',
                                                        'http_request_duration_seconds_bucket',
                                                        'rpc_latency_seconds']
    cpu = doc.family('node_cpu_seconds_total')
    assert cpu.kind == MetricKind.COUNTER
    assert cpu.help == 'Seconds the CPUs spent in each mode.'
    assert len(cpu.samples) == 2
    assert len(doc.family('rpc_latency_seconds').samples) == 3
    assert not doc.family('http_request_duration_seconds_bucket').type_declared
    assert doc.raw_size_bytes == len(SMALL)


def test_labels_are_sorted_and_timestamps_kept():
    cpu = parse_exposition(SMALL).family('node_cpu_seconds_total')
    assert cpu.samples[1].labels == (('cpu', '0'), ('mode', 'user'))
    assert cpu.samples[1].timestamp == 1622534400000
    assert cpu.samples[0].timestamp is None


def test_to_samples_stamps_read_time_unless_explicit():
    samples = parse_exposition(SMALL).to_samples('truck-00', 1622534405000)
    assert samples[0].source_timestamp == 1622534405000
    assert samples[1].source_timestamp == 1622534400000
    assert all(sample.device_id == 'truck-00' for sample in samples)


def test_infinite_values_are_not_turned_into_samples():
    doc = parse_exposition(SMALL)
    names = [sample.name for sample in doc.to_samples('truck-00', 0)]
    assert 'rpc_latency_seconds_bucket' in names
    doc = parse_exposition(b'up +Inf\nnode_load1 NaN\n')
    samples = doc.to_samples('truck-00', 0)
    assert [sample.name for sample in samples] == ['node_load1']
    assert math.isnan(samples[0].value)


def test_quoted_label_values_may_hold_separators():
    doc = parse_exposition(b'app_info{path="a,b}c",msg="say \\"hi\\"\\n"} 1\n')
    assert doc.families[0].samples[0].labels == (('msg', 'say "hi"\n'), ('path', 'a,b}c'))


def test_parse_accepts_streams_and_text():
    assert parse_exposition(io.BytesIO(SMALL)).sample_count == 7
    assert parse_exposition(SMALL.decode()).sample_count == 7


@pytest.mark.parametrize('text, line', [
    (b'node_load1{cpu="0" 1\n', 1),
    (b'node_load1 0.1\nnode_load1}x 1\n', 2),
    (b'node_load1\n', 1),
    (b'node_load1 abc\n', 1),
    (b'node_load1 1 12.5\n', 1),
    (b'node_load1{cpu=0} 1\n', 1),
    (b'node_load1{cpu="0",cpu="1"} 1\n', 1),
    (b'9bad 1\n', 1),
    (b'# TYPE node_load1 gaugeish\n', 1),
])
def test_malformed_lines_carry_their_line_number(text, line):
    with pytest.raises(ParseError) as info:
        parse_exposition(text)
    assert info.value.line == line


def test_non_utf8_input_is_rejected():
    with pytest.raises(ParseError):
        parse_exposition(b'node_load1 \xff\n')


def test_canonical_encoding_of_generated_documents_is_byte_identical():
    raw = SyntheticExposition(8192, seed=3).render(5)
    assert encode_exposition(parse_exposition(raw)) == raw


def test_strip_help_and_type_drop_metadata_only():
    doc = parse_exposition(SMALL)
    out = encode_exposition(doc, ReductionPolicy(strip_help=True, strip_type=True)).decode()
    assert '#' not in out
    assert out.count('\n') == doc.sample_count


def test_allowlist_keeps_prefixes():
    doc = parse_exposition(SMALL)
    out = encode_exposition(doc, ReductionPolicy(family_allowlist=('node_',))).decode()
    assert 'node_load1 0.42' in out
    assert 'rpc_latency' not in out


def test_empty_allowlist_keeps_nothing():
    assert encode_exposition(parse_exposition(SMALL), ReductionPolicy(family_allowlist=())) == b''


def test_identity_policy():
    assert ReductionPolicy().is_identity
    assert not ReductionPolicy(interval_scale=2).is_identity


def test_interval_scale_below_one_is_rejected():
    with pytest.raises(InvalidInterval):
        ReductionPolicy(interval_scale=0.5)


def test_base_interval_must_be_positive(corpus):
    with pytest.raises(InvalidInterval):
        estimate_reduction(corpus, ReductionPolicy(), 0)


def test_resolve_allowlist_expands_collector_aliases():
    assert resolve_allowlist(['cpu', 'memory', 'roadbot_camera', 'cpu'], COLLECTORS) == \
        ('node_cpu', 'node_memory', 'roadbot_camera')


def test_identity_reduction_is_zero(corpus):
    report = estimate_reduction(corpus, ReductionPolicy(), 5.0)
    assert report.ratio == 0.0
    assert report.bytes_before == 66560
    assert report.bytes_before_per_hour == 66560 * 720


def test_help_stripping_saves_at_least_a_fifth(corpus):
    assert estimate_reduction(corpus, ReductionPolicy(strip_help=True), 5.0).ratio >= 0.20


def test_combined_reduction_reaches_eighty_percent(corpus):
    policy = ReductionPolicy(strip_help=True, family_allowlist=resolve_allowlist(list(COLLECTORS), COLLECTORS),
                             interval_scale=2.0)
    assert estimate_reduction(corpus, policy, 5.0).ratio >= 0.80


def test_doubling_the_interval_halves_the_volume(corpus):
    policy = ReductionPolicy(strip_help=True)
    once = estimate_reduction(corpus, policy, 5.0)
    twice = estimate_reduction(corpus, ReductionPolicy(strip_help=True, interval_scale=2.0), 5.0)
    assert twice.bytes_after == once.bytes_after / 2
    assert estimate_reduction(corpus, ReductionPolicy(interval_scale=2.0), 5.0).ratio == pytest.approx(0.5)


def test_policy_from_cfg_resolves_aliases(cfg):
    cfg.reduction.family_allowlist = ['cpu', 'network']
    policy = ReductionPolicy.from_cfg(cfg.reduction, cfg.exposition.collectors)
    assert policy.family_allowlist == ('node_cpu', 'node_network')
