"""Simplified synchrophasor frame codec.

One fixed configuration per PMU: two rectangular float32 phasors (voltage
then current), float32 frequency deviation and ROCOF, and two float32
analogs carrying active and reactive power in kW/kvar. No negotiated
config frames; a two-byte command frame starts/stops streaming.

Data frame layout, all fields big-endian:

    offset  size  field
    0       2     sync 0xAA 0x01
    2       2     framesize (total bytes including chk)
    4       2     idcode (PMU id 1..6)
    6       4     soc (epoch seconds)
    10      4     fracsec (microseconds in low 24 bits, quality in high 8)
    14      2     stat
    16      16    phasors: V.re V.im I.re I.im (float32 each)
    32      4     freq (float32, deviation from 60 Hz)
    36      4     dfreq (float32, Hz/s)
    40      8     analogs: P (kW), Q (kvar)
    48      2     chk, CRC-CCITT over bytes 0..47
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from .crc import crc16_ccitt

SYNC_DATA = b"\xaa\x01"
SYNC_CMD = b"\xaa\x41"
DATA_FRAME_SIZE = 50
CMD_FRAME_SIZE = 18

CMD_STOP = 1
CMD_START = 2

_HEADER = struct.Struct(">2sHHII")
_DATA_BODY = struct.Struct(">H8f")
_CMD_TAIL = struct.Struct(">H")


class FramingError(ValueError):
    """Frame shape is wrong: bad sync, bad size, truncated buffer."""


class ChecksumError(ValueError):
    """Frame shape is fine but the CRC does not validate."""


@dataclass
class PhasorSample:
    """One PMU measurement: rectangular V and I phasors, frequency
    deviation from nominal, and the P/Q analogs the controller uses."""

    v_re: float
    v_im: float
    i_re: float
    i_im: float
    freq_dev: float
    rocof: float
    p_kw: float
    q_kvar: float

    def fields(self) -> tuple[float, ...]:
        return (self.v_re, self.v_im, self.i_re, self.i_im,
                self.freq_dev, self.rocof, self.p_kw, self.q_kvar)


def _split_timestamp(timestamp: float) -> tuple[int, int]:
    soc = int(timestamp)
    frac = round((timestamp - soc) * 1e6)
    if frac >= 1_000_000:
        soc += 1
        frac = 0
    return soc, frac


def encode_data_frame(sample: PhasorSample, idcode: int, timestamp: float,
                      stat: int = 0, quality: int = 0) -> bytes:
    """Serialize one measurement; deterministic for identical inputs."""
    if not 1 <= idcode <= 6:
        raise ValueError(f"idcode {idcode} outside 1..6")
    values = sample.fields()
    if not all(math.isfinite(v) for v in values):
        raise ValueError("non-finite field in phasor sample")
    soc, frac = _split_timestamp(timestamp)
    fracsec = ((quality & 0xFF) << 24) | (frac & 0xFFFFFF)
    body = _HEADER.pack(SYNC_DATA, DATA_FRAME_SIZE, idcode, soc, fracsec)
    body += _DATA_BODY.pack(stat & 0xFFFF, *values)
    return body + _CMD_TAIL.pack(crc16_ccitt(body))


def decode_data_frame(frame: bytes) -> tuple[PhasorSample, int, float]:
    """Parse and validate one data frame.

    Returns (sample, idcode, timestamp). Raises FramingError on bad
    sync/size and ChecksumError on CRC mismatch; never anything else,
    whatever the input bytes.
    """
    if len(frame) < 4:
        raise FramingError("frame shorter than minimum header")
    if frame[0:2] != SYNC_DATA:
        raise FramingError(f"bad sync {frame[0:2]!r}")
    (declared,) = struct.unpack(">H", frame[2:4])
    if declared != DATA_FRAME_SIZE or len(frame) != DATA_FRAME_SIZE:
        raise FramingError(
            f"size mismatch: declared {declared}, buffer {len(frame)}")
    (chk,) = _CMD_TAIL.unpack(frame[-2:])
    if chk != crc16_ccitt(frame[:-2]):
        raise ChecksumError("crc mismatch")
    _, _, idcode, soc, fracsec = _HEADER.unpack(frame[:14])
    body = _DATA_BODY.unpack(frame[14:48])
    sample = PhasorSample(*body[1:])
    timestamp = soc + (fracsec & 0xFFFFFF) / 1e6
    return sample, idcode, timestamp


def encode_command_frame(command: int, idcode: int,
                         timestamp: float = 0.0) -> bytes:
    """Serialize a stream-control command (CMD_START / CMD_STOP)."""
    soc, frac = _split_timestamp(timestamp)
    body = _HEADER.pack(SYNC_CMD, CMD_FRAME_SIZE, idcode, soc, frac)
    body += _CMD_TAIL.pack(command & 0xFFFF)
    return body + _CMD_TAIL.pack(crc16_ccitt(body))


def decode_command_frame(frame: bytes) -> tuple[int, int]:
    """Parse a command frame; returns (command, idcode)."""
    if len(frame) < 4:
        raise FramingError("frame shorter than minimum header")
    if frame[0:2] != SYNC_CMD:
        raise FramingError(f"bad sync {frame[0:2]!r}")
    (declared,) = struct.unpack(">H", frame[2:4])
    if declared != CMD_FRAME_SIZE or len(frame) != CMD_FRAME_SIZE:
        raise FramingError(
            f"size mismatch: declared {declared}, buffer {len(frame)}")
    (chk,) = _CMD_TAIL.unpack(frame[-2:])
    if chk != crc16_ccitt(frame[:-2]):
        raise ChecksumError("crc mismatch")
    _, _, idcode, _, _ = _HEADER.unpack(frame[:14])
    (command,) = _CMD_TAIL.unpack(frame[14:16])
    return command, idcode
