from fog_observability.core.wire.protocol import (FRAME_OVERHEAD, AckFrame, DataFrame, FramedSocket,  # noqa: F401
                                                  decode_frame, decode_payload, encode_ack_frame, encode_data_frame)
