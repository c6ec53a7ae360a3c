import dataclasses
import socket
import threading

import pytest
from omegaconf import OmegaConf

from conftest import T0_MS
from fog_observability.core.errors import AddressInUse, ChecksumMismatch, FogUnreachable
from fog_observability.core.fog.client import QueryClient
from fog_observability.core.fog.server import FogServer
from fog_observability.core.fog.tiering import TieringPolicy
from fog_observability.core.model import CorrelationWindow, InstrumentationDomain
from fog_observability.core.records import ObservabilityRecord
from fog_observability.core.wire.connection import SocketConnection
from fog_observability.core.wire.protocol import AckFrame, encode_data_frame

LOG = InstrumentationDomain.LOG


@pytest.fixture
def server(cfg):
    OmegaConf.update(cfg, 'fog.address', '127.0.0.1:0')
    OmegaConf.update(cfg, 'fog.query_address', '127.0.0.1:0')
    server = FogServer(cfg).start()
    yield server
    server.stop()


def _address(server, index):
    host, port = server.addresses[index]
    return f'{host}:{port}'


def test_ingest_over_tcp_is_acked(server, make_log):
    lines = [ObservabilityRecord.wrap(make_log(message=f'clip uploaded seq={k}', ts=T0_MS + k)).line for k in range(3)]
    connection = SocketConnection(_address(server, 0)).connect()
    try:
        for _ in range(2):
            connection.send_frame(encode_data_frame('truck-00', LOG, 1, lines))
            assert connection.recv_frame(timeout=5.0) == AckFrame('truck-00', LOG, 1, 3)
    finally:
        connection.close()
    assert server.node.record_count(LOG) == 3
    assert server.node.duplicates[LOG] == 3


def test_query_listener_answers_json_lines(server, make_log):
    server.node.ingest_records('truck-00', LOG, [ObservabilityRecord.wrap(make_log())])
    client = QueryClient(_address(server, 1), timeout=5.0)
    assert client.request({'kind': 'stats'})['records']['log'] == 1
    score = client.correlate(CorrelationWindow(T0_MS, T0_MS + 1000))
    assert (score.occupied_domains, score.score) == (1, 0.0)
    assert client.request({'kind': 'nope'})['error'] == 'OdlcError'


def test_garbage_query_gets_a_parse_error(server):
    host, port = server.addresses[1]
    with socket.create_connection((host, port), timeout=5.0) as sock:
        with sock.makefile('rwb') as stream:
            stream.write(b'not json\n')
            stream.flush()
            assert b'ParseError' in stream.readline()


def test_tiering_skips_an_unusable_sink(server):
    assert server.run_tiering_once() == []
    server.policy = TieringPolicy(sink='/nonexistent/sink')
    assert server.run_tiering_once() == []
    assert server.node.tiering_skipped == 1


def test_failed_tiering_cycle_keeps_the_loop_running(server, make_log, monkeypatch):
    server.node.ingest_records('truck-00', LOG, [ObservabilityRecord.wrap(make_log())])
    real_cycle = server.node.tiering_cycle
    calls = []
    done = threading.Event()

    def flaky_cycle(policy, now_ms, **kwargs):
        calls.append(now_ms)
        if len(calls) == 1:
            raise ChecksumMismatch('segment footer does not match')
        segments = real_cycle(policy, now_ms, **kwargs)
        done.set()
        return segments

    monkeypatch.setattr(server.node, 'tiering_cycle', flaky_cycle)
    server.policy = dataclasses.replace(server.policy, cycle_interval_s=0.01)
    server._spawn(server._tiering_loop, 'tiering-fast')
    assert done.wait(timeout=5.0)
    assert server.node.tiering_failures == 1
    assert server.node.stats()['tiering_failures'] == 1
    assert server.node.record_count(LOG) == 0


def test_second_server_on_the_same_port(server, cfg, tmp_path):
    OmegaConf.update(cfg, 'fog.address', _address(server, 0))
    OmegaConf.update(cfg, 'fog.data_dir', str(tmp_path / 'other'))
    with pytest.raises(AddressInUse):
        FogServer(cfg).start()


def test_unreachable_query_listener(cfg):
    OmegaConf.update(cfg, 'fog.address', '127.0.0.1:0')
    OmegaConf.update(cfg, 'fog.query_address', '127.0.0.1:0')
    server = FogServer(cfg).start()
    address = _address(server, 1)
    server.stop()
    with pytest.raises(FogUnreachable):
        QueryClient(address, timeout=1.0).request({'kind': 'stats'})
