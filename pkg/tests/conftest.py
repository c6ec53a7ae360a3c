import pytest
from omegaconf import OmegaConf

from fog_observability.core.cfg_utils import load_config, load_weight_profile
from fog_observability.core.model import validate_weights
from fog_observability.utils.clock import VirtualClock

# 2021-06-01T08:00:00Z, a morning route
T0_MS = 1622534400000


@pytest.fixture
def cfg(tmp_path):
    """Defaults with every directory under tmp_path and no environment leaking in."""
    cfg = load_config(environ={})
    OmegaConf.update(cfg, 'device.data_dir', str(tmp_path / 'edge'))
    OmegaConf.update(cfg, 'fog.data_dir', str(tmp_path / 'fog'))
    OmegaConf.update(cfg, 'archive.catalog_dir', str(tmp_path / 'archive'))
    OmegaConf.update(cfg, 'logs.state_file', str(tmp_path / 'edge' / 'state.json'))
    return cfg


@pytest.fixture
def balanced():
    return load_weight_profile('balanced')


@pytest.fixture
def symmetric():
    return validate_weights(1 / 3, 1 / 3, 1 / 3, name='symmetric')


@pytest.fixture
def clock():
    return VirtualClock(start_ms=T0_MS)


@pytest.fixture(autouse=True)
def odlc_data(tmp_path, monkeypatch):
    monkeypatch.setenv('ODLC_DATA', str(tmp_path / 'odlc-data'))


def trace_id(n):
    return f'{n:032x}'


def span_id(n):
    return f'{n:016x}'


@pytest.fixture
def make_sample():
    from fog_observability.core.records import MetricSample

    def _make(name='node_load1', value=1.0, ts=T0_MS, device='truck-00', **labels):
        return MetricSample(name=name, labels=labels, value=value, source_timestamp=ts, device_id=device)
    return _make


@pytest.fixture
def make_log():
    from fog_observability.core.records import LogEntry

    def _make(message='clip uploaded latency_ms=42', ts=T0_MS, device='truck-00', level='INFO',
              source_file='/var/log/roadbot/app.log', fields=None):
        return LogEntry(source_timestamp=ts, device_id=device, source_file=source_file, level=level,
                        message=message, fields=fields)
    return _make


@pytest.fixture
def make_span():
    from fog_observability.core.records import TraceSpan

    def _make(trace=1, span=1, parent=None, service='region-aggregator', operation='aggregate_by_region',
              start=T0_MS * 1000, duration=1000, device='truck-00', **attributes):
        return TraceSpan(trace_id=trace_id(trace), span_id=span_id(span),
                         parent_span_id=span_id(parent) if parent is not None else None, service=service,
                         operation=operation, start=start, duration=duration, attributes=attributes,
                         device_id=device)
    return _make
