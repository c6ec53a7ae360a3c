import socket
import struct

import numpy as np
import pytest

from fog_observability.core.edge.planner import BatchPlanner, LinkState
from fog_observability.core.edge.staging import StagingStore
from fog_observability.core.edge.transmit import AckStatus, Transmitter
from fog_observability.core.errors import ConnectionLost, MalformedFrame, TransmitTimeout
from fog_observability.core.fog.node import FogNode
from fog_observability.core.model import InstrumentationDomain
from fog_observability.core.records import ObservabilityRecord
from fog_observability.core.replay.harness import LoopbackConnection
from fog_observability.core.wire.connection import parse_address
from fog_observability.core.wire.protocol import (FRAME_OVERHEAD, AckFrame, DataFrame, FramedSocket, decode_frame,
                                                  encode_ack_frame, encode_data_frame)

LOG = InstrumentationDomain.LOG


def test_data_frame_layout():
    frame = encode_data_frame('truck-00', LOG, 7, [b'{"a":1}\n', b'{"b":2}\n'])
    assert struct.unpack('>I', frame[:4])[0] == len(frame) - 4
    assert frame[4:6] == b'\x01\x01'
    assert frame[6:22] == b'truck-00' + b'\x00' * 8
    assert frame[22] == 0x02
    assert struct.unpack('>Q', frame[23:31])[0] == 7
    assert struct.unpack('>I', frame[31:35])[0] == 2
    assert frame[35:] == b'{"a":1}\n{"b":2}\n'
    assert FRAME_OVERHEAD == 35


def test_frames_decode_to_their_kind():
    data = decode_frame(encode_data_frame('truck-00', LOG, 7, [b'{}\n']))
    assert data == DataFrame('truck-00', LOG, 7, [b'{}\n'])
    ack = decode_frame(encode_ack_frame('truck-00', InstrumentationDomain.TRACE, 9, 3))
    assert ack == AckFrame('truck-00', InstrumentationDomain.TRACE, 9, 3)
    assert len(encode_ack_frame('truck-00', LOG, 9, 3)) == FRAME_OVERHEAD


def _patched(frame, offset, value):
    return frame[:offset] + bytes([value]) + frame[offset + 1:]


@pytest.mark.parametrize('frame', [
    b'\x00\x00',
    _patched(encode_data_frame('d', LOG, 1, [b'{}\n']), 4, 0x02),
    _patched(encode_data_frame('d', LOG, 1, [b'{}\n']), 5, 0x07),
    _patched(encode_data_frame('d', LOG, 1, [b'{}\n']), 22, 0x09),
    _patched(encode_data_frame('d', LOG, 1, [b'{}\n', b'{}\n']), 34, 0x03),
    encode_data_frame('d', LOG, 1, [b'{}\n'])[:-1],
    encode_ack_frame('d', LOG, 1, 1) + b'x',
])
def test_malformed_frames(frame):
    with pytest.raises(MalformedFrame):
        decode_frame(frame)


def test_record_lines_must_be_single_lines():
    with pytest.raises(MalformedFrame):
        encode_data_frame('d', LOG, 1, [b'{}'])
    with pytest.raises(MalformedFrame):
        encode_data_frame('d', LOG, 1, [b'{}\n{}\n'])


def test_device_id_is_limited_to_sixteen_bytes():
    with pytest.raises(MalformedFrame):
        encode_data_frame('truck-with-a-long-name', LOG, 1, [])


def test_framed_socket_pair():
    left, right = socket.socketpair()
    sender, receiver = FramedSocket(left), FramedSocket(right)
    try:
        sender.send_frame(encode_ack_frame('truck-00', LOG, 4, 10))
        assert receiver.recv_frame(timeout=1.0) == AckFrame('truck-00', LOG, 4, 10)
        with pytest.raises(TransmitTimeout):
            receiver.recv_frame(timeout=0.05)
        sender.close()
        assert receiver.recv_frame(timeout=1.0) is None
    finally:
        receiver.close()


def test_parse_address():
    assert parse_address('fog.local:9410') == ('fog.local', 9410)
    assert parse_address(':9410') == ('127.0.0.1', 9410)
    with pytest.raises(ValueError):
        parse_address('fog.local')


@pytest.fixture
def edge(balanced, make_log):
    store = StagingStore(1 << 20, balanced)
    for k in range(5):
        store.stage(ObservabilityRecord.wrap(make_log(message=f'clip uploaded seq={k}', ts=1622534400000 + k)))
    planner = BatchPlanner('truck-00')
    return store, planner, Transmitter('truck-00', store, planner, timeout_s=0.1)


def test_acked_batch_leaves_staging(edge, balanced):
    store, planner, transmitter = edge
    node = FogNode()
    plan = planner.plan(store, LinkState(True, 1 << 20), balanced, {})
    statuses = transmitter.transmit(plan, LoopbackConnection(node))
    assert [status.status for status in statuses] == [AckStatus.ACKED]
    assert statuses[0].accepted == 5
    assert store.is_empty()
    assert node.record_count(LOG) == 5
    assert transmitter.frames_sent == 1
    assert transmitter.bytes_sent == plan[0].encoded_bytes


def test_lost_ack_resends_and_is_stored_once(edge, balanced):
    store, planner, transmitter = edge
    node = FogNode()
    link = LinkState(True, 1 << 20)
    dropping = LoopbackConnection(node, ack_drop_probability=0.999, rng=np.random.default_rng(0))
    statuses = transmitter.transmit(planner.plan(store, link, balanced, {}), dropping)
    assert statuses[0].status == AckStatus.TIMEOUT
    assert len(store) == 5
    statuses = transmitter.transmit(planner.plan(store, link, balanced, {}), LoopbackConnection(node), link)
    assert statuses[0].status == AckStatus.ACKED
    assert statuses[0].batch_seq == 1
    assert store.is_empty()
    assert node.record_count(LOG) == 5
    assert node.duplicates[LOG] == 5
    assert link.last_ack_seq[LOG] == 1


class _BrokenConnection(object):
    def send_frame(self, frame):
        raise ConnectionLost('cable cut')

    def recv_frame(self, timeout):
        raise AssertionError('nothing was sent')


def test_connection_loss_stops_the_cycle(edge, balanced, make_sample):
    store, planner, transmitter = edge
    store.stage(ObservabilityRecord.wrap(make_sample()))
    plan = planner.plan(store, LinkState(True, 1 << 20), balanced, {})
    statuses = transmitter.transmit(plan, _BrokenConnection())
    assert [status.status for status in statuses] == [AckStatus.LOST, AckStatus.NOT_SENT]
    assert len(store) == 6
