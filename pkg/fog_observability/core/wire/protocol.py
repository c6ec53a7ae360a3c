"""Edge to fog framing.

A frame is a 4-byte big-endian payload length followed by the payload:
version (1) | kind (1) | device id (16, zero padded) | domain tag (1) | batch seq (8) | count (4)
and, for data frames, `count` newline-terminated record lines.
"""
import socket
import struct
from collections import namedtuple

from fog_observability.core.errors import ConnectionLost, MalformedFrame, TransmitTimeout
from fog_observability.core.model import InstrumentationDomain

VERSION = 0x01
KIND_DATA = 0x01
KIND_ACK = 0x02
DEVICE_ID_SIZE = 16

_LEN_FMT = '>I'
_LEN_SIZE = 4
_HEADER = struct.Struct('>BB16sBQI')
HEADER_SIZE = _HEADER.size
FRAME_OVERHEAD = _LEN_SIZE + HEADER_SIZE

_MAX_FRAME_SIZE = 16 * 1024 * 1024

DataFrame = namedtuple('DataFrame', ['device_id', 'domain', 'batch_seq', 'lines'])
AckFrame = namedtuple('AckFrame', ['device_id', 'domain', 'batch_seq', 'accepted'])


def _pack_device_id(device_id):
    raw = device_id.encode('utf-8')
    if len(raw) > DEVICE_ID_SIZE:
        raise MalformedFrame(f'Device id {device_id!r} is longer than {DEVICE_ID_SIZE} bytes')
    return raw.ljust(DEVICE_ID_SIZE, b'\x00')


def _frame(payload):
    return struct.pack(_LEN_FMT, len(payload)) + payload


def data_frame_size(record_bytes):
    return FRAME_OVERHEAD + record_bytes


def encode_data_frame(device_id, domain, batch_seq, lines):
    lines = list(lines)
    for line in lines:
        if not line.endswith(b'\n') or b'\n' in line[:-1]:
            raise MalformedFrame('Record lines must be single newline-terminated lines')
    header = _HEADER.pack(VERSION, KIND_DATA, _pack_device_id(device_id), domain.tag, batch_seq, len(lines))
    return _frame(header + b''.join(lines))


def encode_ack_frame(device_id, domain, batch_seq, accepted):
    return _frame(_HEADER.pack(VERSION, KIND_ACK, _pack_device_id(device_id), domain.tag, batch_seq, accepted))


def decode_payload(payload):
    """Decodes a frame payload (without the length prefix) into a DataFrame or an AckFrame."""
    if len(payload) < HEADER_SIZE:
        raise MalformedFrame(f'Frame payload of {len(payload)} bytes is shorter than the header')
    version, kind, raw_device, tag, batch_seq, count = _HEADER.unpack_from(payload)
    if version != VERSION:
        raise MalformedFrame(f'Unsupported frame version {version:#04x}')
    try:
        domain = InstrumentationDomain.from_tag(tag)
        device_id = raw_device.rstrip(b'\x00').decode('utf-8')
    except (ValueError, UnicodeDecodeError) as err:
        raise MalformedFrame(str(err)) from err
    body = payload[HEADER_SIZE:]
    if kind == KIND_ACK:
        if body:
            raise MalformedFrame('Ack frame carries a body')
        return AckFrame(device_id, domain, batch_seq, count)
    if kind != KIND_DATA:
        raise MalformedFrame(f'Unknown frame kind {kind:#04x}')
    parts = body.split(b'\n')
    if parts[-1]:
        raise MalformedFrame('Last record line is not newline-terminated', batch_seq=batch_seq)
    lines = [part + b'\n' for part in parts[:-1]]
    if len(lines) != count:
        raise MalformedFrame(f'Frame announces {count} records but carries {len(lines)}', batch_seq=batch_seq)
    return DataFrame(device_id, domain, batch_seq, lines)


def decode_frame(frame):
    if len(frame) < _LEN_SIZE:
        raise MalformedFrame('Frame is shorter than its length prefix')
    size = struct.unpack_from(_LEN_FMT, frame)[0]
    if size != len(frame) - _LEN_SIZE:
        raise MalformedFrame(f'Length prefix {size} does not match payload of {len(frame) - _LEN_SIZE} bytes')
    return decode_payload(frame[_LEN_SIZE:])


class FramedSocket(object):
    """Length-prefixed frames over a stream socket."""

    def __init__(self, sock):
        self.sock = sock

    def send_frame(self, frame):
        try:
            self.sock.sendall(frame)
        except OSError as err:
            raise ConnectionLost(f'Send failed: {err}') from err

    def recv_payload(self, timeout=None):
        """Returns the next frame payload, or None on a clean end of stream."""
        self.sock.settimeout(timeout)
        raw_len = self._recv_exact(_LEN_SIZE)
        if raw_len is None:
            return None
        msg_len = struct.unpack(_LEN_FMT, raw_len)[0]
        if msg_len < HEADER_SIZE or msg_len > _MAX_FRAME_SIZE:
            raise MalformedFrame(f'Invalid frame size: {msg_len}')
        payload = self._recv_exact(msg_len)
        if payload is None:
            raise ConnectionLost('Stream closed in the middle of a frame')
        return payload

    def recv_frame(self, timeout=None):
        payload = self.recv_payload(timeout)
        return None if payload is None else decode_payload(payload)

    def _recv_exact(self, n):
        buf = b''
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except socket.timeout as err:
                raise TransmitTimeout('Timed out waiting for a frame') from err
            except OSError as err:
                raise ConnectionLost(f'Receive failed: {err}') from err
            if not chunk:
                return None
            buf += chunk
        return buf

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass
