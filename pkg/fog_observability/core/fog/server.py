"""Network front of the fog node: the edge ingest listener, the query listener and the periodic loops."""
import errno
import socketserver
import threading

from fog_observability.core.errors import (AddressInUse, ConnectionLost, MalformedFrame, OdlcError, SinkUnavailable,
                                            StorageFull, TransmitTimeout)
from fog_observability.core.fog.node import FogNode, tiering_policy_from_cfg
from fog_observability.core.wire.connection import parse_address
from fog_observability.core.wire.protocol import DataFrame, FramedSocket, encode_ack_frame
from fog_observability.utils import path_resolver
from fog_observability.utils.clock import SystemClock
from fog_observability.utils.logger import get_logger
from fog_observability.utils.structured import dumps_line, loads_line


class _IngestHandler(socketserver.BaseRequestHandler):
    def handle(self):
        node = self.server.node
        logger = self.server.logger
        framed = FramedSocket(self.request)
        while True:
            try:
                frame = framed.recv_frame(timeout=None)
            except MalformedFrame as err:
                node.malformed_frames += 1
                logger.warning(f'Closing {self.client_address}: {err.message}')
                return
            except (ConnectionLost, TransmitTimeout) as err:
                logger.debug(f'Ingest session {self.client_address} ended: {err}')
                return
            if frame is None:
                return
            if not isinstance(frame, DataFrame):
                logger.warning(f'Closing {self.client_address}: unexpected ack frame')
                return
            try:
                ack = node.ingest_frame(frame)
            except StorageFull as err:
                logger.warning(f'{err.message}; ack for batch {frame.batch_seq} withheld')
                continue
            except MalformedFrame as err:
                logger.warning(f'Closing {self.client_address}: {err.message}')
                return
            framed.send_frame(encode_ack_frame(ack.device_id, ack.domain, ack.batch_seq, ack.accepted))


class _QueryHandler(socketserver.StreamRequestHandler):
    def handle(self):
        for line in self.rfile:
            if not line.strip():
                continue
            try:
                request = loads_line(line)
            except ValueError as err:
                response = {'error': 'ParseError', 'message': f'Request is not valid JSON: {err}'}
            else:
                response = self.server.node.handle_query(request)
            self.wfile.write((dumps_line(response) + '\n').encode('utf-8'))
            self.wfile.flush()


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def _bind(address, handler, node, logger):
    host, port = parse_address(address)
    try:
        server = _Server((host, port), handler)
    except OSError as err:
        if err.errno == errno.EADDRINUSE:
            raise AddressInUse(f'{address} is already in use', address=address)
        raise
    server.node = node
    server.logger = logger
    return server


class FogServer(object):
    def __init__(self, cfg, node=None, clock=None):
        self.cfg = cfg
        self.clock = clock or SystemClock()
        self.logger = get_logger().getChild('fog')
        self.data_dir = cfg.fog.data_dir or path_resolver.resolve_data_path('fog')
        self.node = node or FogNode.from_cfg(cfg, data_dir=self.data_dir)
        self.policy = tiering_policy_from_cfg(cfg, self.data_dir)
        self._stop = threading.Event()
        self._servers = []
        self._threads = []

    def _spawn(self, target, name):
        thread = threading.Thread(target=target, name=f'odlc-{name}', daemon=True)
        thread.start()
        self._threads.append(thread)

    def run_tiering_once(self):
        try:
            return self.node.tiering_cycle(self.policy, self.clock.now_ms())
        except SinkUnavailable as err:
            self.node.tiering_skipped += 1
            self.logger.warning(f'Tiering skipped, retrying next cycle: {err.message}')
            return []
        except (OdlcError, OSError) as err:
            self.node.tiering_failures += 1
            self.logger.error(f'Tiering cycle failed, retrying next cycle: {getattr(err, "message", err)}')
            return []

    def _tiering_loop(self):
        while not self._stop.wait(self.policy.cycle_interval_s):
            self.run_tiering_once()

    def _alert_loop(self):
        interval = float(self.cfg.alerts.eval_interval_s)
        while not self._stop.wait(interval):
            self.node.evaluate_alerts(self.clock.now_ms())

    def start(self):
        ingest = _bind(self.cfg.fog.address, _IngestHandler, self.node, self.logger)
        try:
            query = _bind(self.cfg.fog.query_address, _QueryHandler, self.node, self.logger)
        except AddressInUse:
            ingest.server_close()
            raise
        self._servers = [ingest, query]
        for server, name in ((ingest, 'ingest'), (query, 'query')):
            self._spawn(server.serve_forever, name)
        self._spawn(self._tiering_loop, 'tiering')
        if self.node.alert_rules:
            self._spawn(self._alert_loop, 'alerts')
        self.logger.info(f'Fog node listening on {self.cfg.fog.address} (ingest) and {self.cfg.fog.query_address} '
                         f'(query), data in {self.data_dir}')
        return self

    @property
    def addresses(self):
        return [server.server_address for server in self._servers]

    def stop(self):
        self._stop.set()
        for server in self._servers:
            server.shutdown()
            server.server_close()
        for thread in self._threads:
            thread.join(timeout=5)
        self.node.close()

    def wait(self, duration_s=None):
        self._stop.wait(duration_s)
