from collections import namedtuple
import enum

from fog_observability.core.errors import ConnectionLost, FogUnreachable, TransmitTimeout
from fog_observability.core.wire.protocol import AckFrame, encode_data_frame
from fog_observability.utils.logger import get_logger

DEFAULT_TIMEOUT_S = 10.0

BatchStatus = namedtuple('BatchStatus', ['domain', 'batch_seq', 'status', 'records', 'encoded_bytes', 'accepted'])


class AckStatus(enum.Enum):
    ACKED = 'acked'
    TIMEOUT = 'timeout'
    LOST = 'lost'
    NOT_SENT = 'not_sent'


class Transmitter(object):
    """Sends planned batches one frame at a time and waits for each ack.

    Only acks remove records from staging; anything else leaves the batch pending for the next cycle.
    """

    def __init__(self, device_id, store, planner, timeout_s=DEFAULT_TIMEOUT_S, on_ack=None):
        self.device_id = device_id
        self.store = store
        self.planner = planner
        self.timeout_s = timeout_s
        self.on_ack = on_ack
        self.bytes_sent = 0
        self.frames_sent = 0
        self._logger = get_logger().getChild('transmit')

    def _apply_ack(self, ack, link):
        batch = self.planner.find_pending(ack.domain, ack.batch_seq)
        if batch is None:
            return None
        self.store.remove_acked(batch.records)
        self.planner.mark_acked(batch)
        if link is not None:
            link.last_ack_seq[ack.domain] = max(link.last_ack_seq.get(ack.domain, 0), ack.batch_seq)
        if self.on_ack is not None:
            self.on_ack(batch, ack)
        return batch

    def _await_ack(self, connection, batch, link):
        # late acks of earlier batches may still be queued in front of ours
        while True:
            frame = connection.recv_frame(self.timeout_s)
            if not isinstance(frame, AckFrame) or frame.device_id != self.device_id:
                self._logger.warning(f'Ignoring unexpected frame {frame!r}')
                continue
            self._apply_ack(frame, link)
            if frame.domain == batch.domain and frame.batch_seq == batch.batch_seq:
                return frame

    def transmit(self, plan, connection, link=None):
        statuses = []
        for index, batch in enumerate(plan):
            frame = encode_data_frame(self.device_id, batch.domain, batch.batch_seq, batch.lines)
            batch.attempts += 1
            try:
                if hasattr(connection, 'connect'):
                    connection.connect()
                connection.send_frame(frame)
                self.bytes_sent += len(frame)
                self.frames_sent += 1
                ack = self._await_ack(connection, batch, link)
            except TransmitTimeout:
                self._logger.warning(f'No ack for {batch.domain.value} batch {batch.batch_seq} '
                                     f'within {self.timeout_s}s, will resend')
                statuses.append(BatchStatus(batch.domain, batch.batch_seq, AckStatus.TIMEOUT, len(batch),
                                            batch.encoded_bytes, 0))
                continue
            except (ConnectionLost, FogUnreachable) as err:
                self._logger.warning(f'Connection lost while sending {batch.domain.value} batch '
                                     f'{batch.batch_seq}: {err.message}')
                statuses.append(BatchStatus(batch.domain, batch.batch_seq, AckStatus.LOST, len(batch),
                                            batch.encoded_bytes, 0))
                statuses.extend(BatchStatus(rest.domain, rest.batch_seq, AckStatus.NOT_SENT, len(rest),
                                            rest.encoded_bytes, 0) for rest in plan[index + 1:])
                break
            statuses.append(BatchStatus(batch.domain, batch.batch_seq, AckStatus.ACKED, len(batch),
                                        batch.encoded_bytes, ack.accepted))
        return statuses


def transmit(plan, connection, transmitter, link=None):
    return transmitter.transmit(plan, connection, link)
