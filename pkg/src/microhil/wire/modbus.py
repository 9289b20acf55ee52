"""Modbus TCP codec and the six-register inverter map.

Register image (all big-endian u16 on the wire):

    0   battery SoC, percent x100          read-only
    1   PV generation, kW x10              read-only
    2   P_inv reference, kW x10, signed    writable
    3   Q_inv reference, kvar x10, signed  writable
    4   heartbeat counter                  read-only
    5   fault flags                        read-only

Only function codes 0x03 (read holding registers) and 0x10 (write
multiple registers) are spoken. References are the sole writable
registers; out-of-map access answers exception 0x02, out-of-range
reference values exception 0x03.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

REGISTER_COUNT = 6
REG_SOC = 0
REG_PV = 1
REG_P_REF = 2
REG_Q_REF = 3
REG_HEARTBEAT = 4
REG_FAULTS = 5
WRITABLE = (REG_P_REF, REG_Q_REF)

FC_READ_HOLDING = 0x03
FC_WRITE_MULTIPLE = 0x10
EXC_ILLEGAL_FUNCTION = 0x01
EXC_ILLEGAL_ADDRESS = 0x02
EXC_ILLEGAL_VALUE = 0x03

FAULT_PLANT = 0x0001
FAULT_BATTERY_SAT = 0x0002
FAULT_TICK_OVERRUN = 0x0004

_MBAP = struct.Struct(">HHHB")


class ModbusError(ValueError):
    """Malformed Modbus TCP bytes."""


class ModbusException(Exception):
    """Protocol-level exception response from the server."""

    def __init__(self, function: int, code: int):
        super().__init__(f"modbus exception 0x{code:02x} on fc 0x{function:02x}")
        self.function = function
        self.code = code


def to_i16(raw: int) -> int:
    return raw - 0x10000 if raw >= 0x8000 else raw


def to_u16(value: int) -> int:
    return value & 0xFFFF


def soc_to_reg(soc: float) -> int:
    return min(10000, max(0, round(soc * 100.0)))


def reg_to_soc(raw: int) -> float:
    return raw / 100.0


def pv_to_reg(pv: float) -> int:
    return min(0xFFFF, max(0, round(pv * 10.0)))


def reg_to_pv(raw: int) -> float:
    return raw / 10.0


def ref_to_reg(kw: float) -> int:
    return to_u16(round(kw * 10.0))


def reg_to_ref(raw: int) -> float:
    return to_i16(raw) / 10.0


@dataclass
class Request:
    txn_id: int
    unit: int
    function: int
    address: int
    count: int
    values: tuple[int, ...] = ()


def _mbap(txn_id: int, unit: int, pdu: bytes) -> bytes:
    return _MBAP.pack(txn_id & 0xFFFF, 0, len(pdu) + 1, unit & 0xFF) + pdu


def build_read_request(txn_id: int, unit: int, address: int, count: int) -> bytes:
    pdu = struct.pack(">BHH", FC_READ_HOLDING, address, count)
    return _mbap(txn_id, unit, pdu)


def build_write_request(txn_id: int, unit: int, address: int,
                        values: tuple[int, ...]) -> bytes:
    pdu = struct.pack(">BHHB", FC_WRITE_MULTIPLE, address, len(values),
                      2 * len(values))
    pdu += struct.pack(f">{len(values)}H", *[to_u16(v) for v in values])
    return _mbap(txn_id, unit, pdu)


def build_read_response(txn_id: int, unit: int, values: tuple[int, ...]) -> bytes:
    pdu = struct.pack(">BB", FC_READ_HOLDING, 2 * len(values))
    pdu += struct.pack(f">{len(values)}H", *[to_u16(v) for v in values])
    return _mbap(txn_id, unit, pdu)


def build_write_response(txn_id: int, unit: int, address: int, count: int) -> bytes:
    return _mbap(txn_id, unit,
                 struct.pack(">BHH", FC_WRITE_MULTIPLE, address, count))


def build_exception(txn_id: int, unit: int, function: int, code: int) -> bytes:
    return _mbap(txn_id, unit, struct.pack(">BB", function | 0x80, code))


def split_adu(data: bytes) -> tuple[int, int, bytes]:
    """Split one TCP ADU into (txn_id, unit, pdu); validates the MBAP header."""
    if len(data) < 8:
        raise ModbusError("adu shorter than MBAP header + function code")
    txn_id, proto, length, unit = _MBAP.unpack(data[:7])
    if proto != 0:
        raise ModbusError(f"protocol id {proto}, expected 0")
    if length != len(data) - 6:
        raise ModbusError(f"length field {length} does not match adu size")
    return txn_id, unit, data[7:]


def parse_request(data: bytes) -> Request:
    """Server-side parse of a request ADU."""
    txn_id, unit, pdu = split_adu(data)
    fc = pdu[0]
    if fc == FC_READ_HOLDING:
        if len(pdu) != 5:
            raise ModbusError("read request pdu must be 5 bytes")
        address, count = struct.unpack(">HH", pdu[1:5])
        return Request(txn_id, unit, fc, address, count)
    if fc == FC_WRITE_MULTIPLE:
        if len(pdu) < 6:
            raise ModbusError("write request pdu truncated")
        address, count, byte_count = struct.unpack(">HHB", pdu[1:6])
        if byte_count != 2 * count or len(pdu) != 6 + byte_count:
            raise ModbusError("write request byte count mismatch")
        values = struct.unpack(f">{count}H", pdu[6:]) if count else ()
        return Request(txn_id, unit, fc, address, count, values)
    return Request(txn_id, unit, fc, 0, 0)


def parse_response(data: bytes) -> tuple[int, ...]:
    """Client-side parse; returns register values for reads, (address,
    count) echo for writes. Raises ModbusException on exception frames."""
    txn_id, unit, pdu = split_adu(data)
    del txn_id, unit
    fc = pdu[0]
    if fc & 0x80:
        if len(pdu) != 2:
            raise ModbusError("exception pdu must be 2 bytes")
        raise ModbusException(fc & 0x7F, pdu[1])
    if fc == FC_READ_HOLDING:
        byte_count = pdu[1]
        if len(pdu) != 2 + byte_count or byte_count % 2:
            raise ModbusError("read response byte count mismatch")
        return struct.unpack(f">{byte_count // 2}H", pdu[2:])
    if fc == FC_WRITE_MULTIPLE:
        if len(pdu) != 5:
            raise ModbusError("write response pdu must be 5 bytes")
        return struct.unpack(">HH", pdu[1:5])
    raise ModbusError(f"unexpected function code 0x{fc:02x}")


def serve_request(request: Request, registers: list[int],
                  ref_limit_kw: float = 250.0) -> tuple[bytes, dict[int, int]]:
    """Evaluate one request against a register image.

    Pure: returns (response bytes, {address: raw value} writes accepted).
    The caller owns applying the writes and any locking.
    """
    txn, unit, fc = request.txn_id, request.unit, request.function
    if fc not in (FC_READ_HOLDING, FC_WRITE_MULTIPLE):
        return build_exception(txn, unit, fc, EXC_ILLEGAL_FUNCTION), {}
    if request.count < 1 or request.count > REGISTER_COUNT:
        return build_exception(txn, unit, fc, EXC_ILLEGAL_VALUE), {}
    if request.address + request.count > REGISTER_COUNT:
        return build_exception(txn, unit, fc, EXC_ILLEGAL_ADDRESS), {}

    if fc == FC_READ_HOLDING:
        values = tuple(registers[request.address:request.address + request.count])
        return build_read_response(txn, unit, values), {}

    span = range(request.address, request.address + request.count)
    if any(addr not in WRITABLE for addr in span):
        return build_exception(txn, unit, fc, EXC_ILLEGAL_ADDRESS), {}
    limit = round(ref_limit_kw * 10.0)
    if any(abs(to_i16(v)) > limit for v in request.values):
        return build_exception(txn, unit, fc, EXC_ILLEGAL_VALUE), {}
    writes = {addr: to_u16(v) for addr, v in zip(span, request.values)}
    return build_write_response(txn, unit, request.address, request.count), writes
