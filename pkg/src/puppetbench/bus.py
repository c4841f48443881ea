"""Byte-exact simulated daisy-chain servo bus.

Frame layout (normative):

    [0xA5][id][length][opcode][payload ...][crc_hi][crc_lo]

length = payload length + 1 (it counts the opcode).  The CRC is
CRC-16/CCITT-FALSE over id..payload, transmitted big-endian.  Angles travel
as signed 16-bit millirad little-endian, currents as unsigned 16-bit mA.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .robot import JointSpec, RobotModel, ServoState, step_servo

SYNC_BYTE = 0xA5
BROADCAST_ID = 0xFE
MAX_PAYLOAD = 250

OP_PING = 0x01
OP_READ_POS = 0x02
OP_WRITE_GOAL = 0x03
OP_TORQUE = 0x04
OP_READ_CURRENT = 0x05
OP_SYNC_WRITE = 0x06
OP_REPLY = 0x81
OP_ERROR = 0xFF


class BusDecodeError(ValueError):
    pass


class BadSyncError(BusDecodeError):
    pass


class FrameTruncatedError(BusDecodeError):
    pass


class CrcMismatchError(BusDecodeError):
    pass


def crc16_ccitt(data: bytes) -> int:
    """CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ 0x1021) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


@dataclass(frozen=True)
class BusFrame:
    id: int
    opcode: int
    payload: bytes = b""

    @property
    def is_broadcast(self) -> bool:
        return self.id == BROADCAST_ID


def rad_to_wire(angle: float) -> int:
    """Signed 16-bit millirad; saturates at the int16 range."""
    return max(-32768, min(32767, round(angle * 1000.0)))


def wire_to_rad(value: int) -> float:
    return value / 1000.0


def encode_frame(frame: BusFrame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(frame.payload)} bytes exceeds {MAX_PAYLOAD}")
    body = bytes([frame.id, len(frame.payload) + 1, frame.opcode]) + frame.payload
    crc = crc16_ccitt(body)
    return bytes([SYNC_BYTE]) + body + bytes([crc >> 8, crc & 0xFF])


def decode_frame(data: bytes) -> tuple[BusFrame, bytes]:
    """Parse one frame; returns (frame, remaining bytes).

    Raises BadSyncError, FrameTruncatedError or CrcMismatchError; never
    returns a partial frame.
    """
    if len(data) < 6:
        raise FrameTruncatedError("frame shorter than minimal 6 bytes")
    if data[0] != SYNC_BYTE:
        raise BadSyncError(f"expected sync 0x{SYNC_BYTE:02X}, got 0x{data[0]:02X}")
    length = data[2]
    if length < 1:
        raise FrameTruncatedError("length byte must be >= 1")
    end = 3 + length + 2  # sync+id+length, then opcode+payload, then crc
    if len(data) < end:
        raise FrameTruncatedError(f"need {end} bytes, have {len(data)}")
    body = data[1:3 + length]
    crc = (data[end - 2] << 8) | data[end - 1]
    if crc != crc16_ccitt(body):
        raise CrcMismatchError("crc mismatch")
    frame = BusFrame(id=data[1], opcode=data[3], payload=bytes(data[4:3 + length]))
    return frame, bytes(data[end:])


@dataclass
class SimBus:
    """Single-owner simulated bus holding the servos and a frame log."""

    servos: dict[int, tuple[JointSpec, ServoState]] = field(default_factory=dict)
    log: list[tuple[float, str, bytes]] = field(default_factory=list)
    time: float = 0.0

    @classmethod
    def from_model(cls, model: RobotModel) -> "SimBus":
        return cls(servos={j.id: (j, ServoState()) for j in model.joints})

    def impose_position(self, jid: int, angle: float) -> None:
        """Puppet interface: externally move a torque-off servo (clipped to limits)."""
        spec, state = self.servos[jid]
        if state.torque_enabled:
            return
        state.position = min(max(angle, spec.min_angle), spec.max_angle)

    def advance(self, dt: float) -> None:
        if dt <= 0:
            return
        self.time += dt
        for jid, (spec, state) in self.servos.items():
            self.servos[jid] = (spec, step_servo(spec, state, dt))

    def dump_log(self) -> str:
        """Frame log as `<t> <dir> <hex>` lines."""
        return "\n".join(f"{t:.6f} {d} {raw.hex()}" for t, d, raw in self.log)


def _reply(servo_id: int, payload: bytes = b"") -> BusFrame:
    return BusFrame(servo_id, OP_REPLY, payload)


def _apply(bus: SimBus, frame: BusFrame, jid: int) -> BusFrame | None:
    spec, state = bus.servos[jid]
    if frame.opcode == OP_PING:
        return _reply(jid)
    if frame.opcode == OP_READ_POS:
        wire = rad_to_wire(state.position)
        return _reply(jid, wire.to_bytes(2, "little", signed=True))
    if frame.opcode == OP_WRITE_GOAL:
        state.goal = wire_to_rad(int.from_bytes(frame.payload[:2], "little", signed=True))
        return None
    if frame.opcode == OP_TORQUE:
        state.torque_enabled = bool(frame.payload[0])
        return None
    if frame.opcode == OP_READ_CURRENT:
        milliamps = max(0, min(65535, round(state.current_estimate * 1000.0)))
        return _reply(jid, milliamps.to_bytes(2, "little"))
    return BusFrame(jid, OP_ERROR, bytes([frame.opcode]))


def transact(bus: SimBus, frame: BusFrame, dt: float = 0.0) -> BusFrame | None:
    """Run one bus transaction, then advance the simulation by dt (0 = no time).

    Unicast to an absent id returns None (timeout); broadcast never replies.
    SYNC_WRITE applies all (id, goal) pairs before the tick.
    """
    bus.log.append((bus.time, "tx", encode_frame(frame)))
    reply: BusFrame | None = None
    if frame.opcode == OP_SYNC_WRITE:
        for i in range(0, len(frame.payload) - 2, 3):
            jid = frame.payload[i]
            if jid not in bus.servos:
                continue
            goal = int.from_bytes(frame.payload[i + 1:i + 3], "little", signed=True)
            bus.servos[jid][1].goal = wire_to_rad(goal)
    elif frame.is_broadcast:
        for jid in bus.servos:
            if frame.opcode in (OP_WRITE_GOAL, OP_TORQUE):
                _apply(bus, frame, jid)
    elif frame.id in bus.servos:
        reply = _apply(bus, frame, frame.id)
    bus.advance(dt)
    if reply is not None:
        bus.log.append((bus.time, "rx", encode_frame(reply)))
    return reply


# Client-side helpers: build frames, transact, parse replies.

class BusTimeout(RuntimeError):
    pass


def ping(bus: SimBus, jid: int) -> bool:
    return transact(bus, BusFrame(jid, OP_PING)) is not None


def read_position(bus: SimBus, jid: int, dt: float = 0.0) -> float:
    reply = transact(bus, BusFrame(jid, OP_READ_POS), dt)
    if reply is None:
        raise BusTimeout(f"no reply from servo {jid}")
    return wire_to_rad(int.from_bytes(reply.payload[:2], "little", signed=True))


def read_current(bus: SimBus, jid: int, dt: float = 0.0) -> float:
    reply = transact(bus, BusFrame(jid, OP_READ_CURRENT), dt)
    if reply is None:
        raise BusTimeout(f"no reply from servo {jid}")
    return int.from_bytes(reply.payload[:2], "little") / 1000.0


def write_goal(bus: SimBus, jid: int, angle: float, dt: float = 0.0) -> None:
    payload = rad_to_wire(angle).to_bytes(2, "little", signed=True)
    transact(bus, BusFrame(jid, OP_WRITE_GOAL, payload), dt)


def set_torque(bus: SimBus, enabled: bool, jid: int = BROADCAST_ID, dt: float = 0.0) -> None:
    transact(bus, BusFrame(jid, OP_TORQUE, bytes([1 if enabled else 0])), dt)


def sync_write(bus: SimBus, goals: dict[int, float], dt: float = 0.0) -> None:
    payload = b"".join(
        bytes([jid]) + rad_to_wire(angle).to_bytes(2, "little", signed=True)
        for jid, angle in goals.items()
    )
    transact(bus, BusFrame(BROADCAST_ID, OP_SYNC_WRITE, payload), dt)
