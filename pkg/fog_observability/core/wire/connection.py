import socket

from fog_observability.core.errors import ConnectionLost, FogUnreachable, TransmitTimeout
from fog_observability.core.wire.protocol import FramedSocket


def parse_address(address):
    """`host:port` -> (host, port)."""
    host, sep, port = str(address).rpartition(':')
    if not sep or not port.isdigit():
        raise ValueError(f'Address must look like host:port, got {address!r}')
    return host or '127.0.0.1', int(port)


class SocketConnection(object):
    """Edge side of the wire: one TCP stream to the fog node, reopened after a failure."""

    def __init__(self, address, connect_timeout=5.0):
        self._address = parse_address(address)
        self._connect_timeout = connect_timeout
        self._framed = None
        self.bytes_sent = 0

    @property
    def connected(self):
        return self._framed is not None

    def connect(self):
        if self._framed is None:
            try:
                sock = socket.create_connection(self._address, timeout=self._connect_timeout)
            except OSError as err:
                raise FogUnreachable(f'Cannot reach fog node at {self._address[0]}:{self._address[1]}: {err}')
            self._framed = FramedSocket(sock)
        return self

    def send_frame(self, frame):
        if self._framed is None:
            raise ConnectionLost('Not connected')
        try:
            self._framed.send_frame(frame)
        except ConnectionLost:
            self.close()
            raise
        self.bytes_sent += len(frame)

    def recv_frame(self, timeout):
        if self._framed is None:
            raise ConnectionLost('Not connected')
        try:
            frame = self._framed.recv_frame(timeout)
        except (ConnectionLost, TransmitTimeout):
            # a late ack would desynchronise the stream, start over on a fresh one
            self.close()
            raise
        if frame is None:
            self.close()
            raise ConnectionLost('Fog node closed the connection')
        return frame

    def close(self):
        if self._framed is not None:
            self._framed.close()
            self._framed = None
