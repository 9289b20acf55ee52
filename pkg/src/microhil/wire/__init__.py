"""Wire-level codecs: synchrophasor data frames and Modbus TCP registers."""

from .c37118 import (
    PhasorSample,
    FramingError,
    ChecksumError,
    encode_data_frame,
    decode_data_frame,
    encode_command_frame,
    decode_command_frame,
    DATA_FRAME_SIZE,
    CMD_START,
    CMD_STOP,
)
from .crc import crc16_ccitt
from . import modbus

__all__ = [
    "PhasorSample", "FramingError", "ChecksumError",
    "encode_data_frame", "decode_data_frame",
    "encode_command_frame", "decode_command_frame",
    "DATA_FRAME_SIZE", "CMD_START", "CMD_STOP",
    "crc16_ccitt", "modbus",
]
