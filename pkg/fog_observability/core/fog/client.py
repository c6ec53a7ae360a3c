import socket

from fog_observability.core.errors import FogUnreachable
from fog_observability.core.model import CorrelationScore
from fog_observability.core.wire.connection import parse_address
from fog_observability.utils.structured import dumps_line, loads_line


class QueryClient(object):
    """Line-delimited JSON requests against the fog query listener."""

    def __init__(self, address, timeout=30.0):
        self.address = address
        self.timeout = timeout

    def request(self, request):
        host, port = parse_address(self.address)
        try:
            with socket.create_connection((host, port), timeout=self.timeout) as sock:
                with sock.makefile('rwb') as stream:
                    stream.write((dumps_line(request) + '\n').encode('utf-8'))
                    stream.flush()
                    line = stream.readline()
        except OSError as err:
            raise FogUnreachable(f'Cannot query fog node at {self.address}: {err}', address=self.address)
        if not line:
            raise FogUnreachable(f'Fog node at {self.address} closed the connection without answering',
                                 address=self.address)
        return loads_line(line)

    def correlate(self, window):
        """CorrelationScore of a window, as the outcome composer needs it."""
        response = self.request({'kind': 'correlate', 'start': window.start, 'end': window.end, 'records': False,
                                 'devices': sorted(window.device_filter) if window.device_filter else None})
        if 'error' in response:
            raise FogUnreachable(f'Correlation query failed: {response.get("message")}', address=self.address)
        return CorrelationScore(**response['score'])
