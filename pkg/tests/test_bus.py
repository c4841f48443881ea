import math
import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from puppetbench import bus as busmod
from puppetbench.bus import (
    BadSyncError,
    BusFrame,
    BusTimeout,
    CrcMismatchError,
    FrameTruncatedError,
    OP_ERROR,
    OP_PING,
    OP_READ_POS,
    OP_REPLY,
    OP_TORQUE,
    OP_WRITE_GOAL,
    SimBus,
    crc16_ccitt,
    decode_frame,
    encode_frame,
    rad_to_wire,
    transact,
    wire_to_rad,
)
from puppetbench.robot import default_model


def crc_oracle(data: bytes) -> int:
    """Independent CRC-16/CCITT-FALSE via the byte-at-a-time table method."""
    table = []
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table.append(crc)
    crc = 0xFFFF
    for byte in data:
        crc = ((crc << 8) & 0xFFFF) ^ table[((crc >> 8) ^ byte) & 0xFF]
    return crc


class TestCrc:
    def test_known_check_value(self):
        # CRC-16/CCITT-FALSE check value for "123456789"
        assert crc16_ccitt(b"123456789") == 0x29B1

    @given(st.binary(max_size=64))
    def test_matches_table_oracle(self, data):
        assert crc16_ccitt(data) == crc_oracle(data)


class TestFraming:
    def test_ping_layout(self):
        raw = encode_frame(BusFrame(id=3, opcode=OP_PING))
        body = bytes([0x03, 0x01, 0x01])
        crc = crc_oracle(body)
        assert raw == bytes([0xA5]) + body + bytes([crc >> 8, crc & 0xFF])

    def test_write_goal_layout_by_hand(self):
        angle = 1.234  # 1234 millirad
        payload = (1234).to_bytes(2, "little", signed=True)
        raw = encode_frame(BusFrame(id=5, opcode=OP_WRITE_GOAL, payload=payload))
        body = bytes([0x05, 0x03, 0x03, 0xD2, 0x04])
        crc = crc_oracle(body)
        assert raw == bytes([0xA5]) + body + bytes([crc >> 8, crc & 0xFF])
        assert rad_to_wire(angle) == 1234

    def test_payload_too_long(self):
        with pytest.raises(ValueError, match="exceeds"):
            encode_frame(BusFrame(id=1, opcode=OP_PING, payload=bytes(251)))

    @given(
        jid=st.integers(1, 0xFE),
        opcode=st.sampled_from([OP_PING, OP_READ_POS, OP_WRITE_GOAL, OP_TORQUE, OP_REPLY, OP_ERROR]),
        payload=st.binary(max_size=250),
        trailing=st.binary(max_size=8),
    )
    def test_roundtrip(self, jid, opcode, payload, trailing):
        frame = BusFrame(id=jid, opcode=opcode, payload=payload)
        decoded, rest = decode_frame(encode_frame(frame) + trailing)
        assert decoded == frame
        assert rest == trailing

    def test_bad_sync(self):
        raw = bytearray(encode_frame(BusFrame(id=3, opcode=OP_PING)))
        raw[0] = 0x55
        with pytest.raises(BadSyncError):
            decode_frame(bytes(raw))

    def test_truncated_stream(self):
        raw = encode_frame(BusFrame(id=3, opcode=OP_WRITE_GOAL, payload=b"\x01\x02"))
        for cut in range(1, len(raw)):
            with pytest.raises(FrameTruncatedError):
                decode_frame(raw[:cut])

    def test_single_bit_flips_all_detected(self):
        raw = encode_frame(BusFrame(id=7, opcode=OP_WRITE_GOAL, payload=b"\x10\xfe"))
        # flip every bit of id..payload; a corrupted length byte may surface
        # as truncation before the crc check, every other flip as crc mismatch
        for byte_index in range(1, len(raw) - 2):
            for bit in range(8):
                corrupted = bytearray(raw)
                corrupted[byte_index] ^= 1 << bit
                if byte_index == 2:
                    with pytest.raises((CrcMismatchError, FrameTruncatedError)):
                        decode_frame(bytes(corrupted))
                else:
                    with pytest.raises(CrcMismatchError):
                        decode_frame(bytes(corrupted))

    def test_wire_quantization_bound(self):
        for angle in (0.0, 0.1234567, -1.999999, 2.5):
            assert abs(wire_to_rad(rad_to_wire(angle)) - angle) <= 0.5e-3


class TestTransact:
    def make_bus(self):
        return SimBus.from_model(default_model())

    def test_torque_off_then_puppet_move_reads_back(self):
        bus = self.make_bus()
        busmod.set_torque(bus, False)
        assert not any(s.torque_enabled for _, s in bus.servos.values())
        bus.impose_position(1, 0.5)
        assert busmod.read_position(bus, 1) == pytest.approx(0.5, abs=0.5e-3)

    def test_puppet_cannot_move_torqued_servo(self):
        bus = self.make_bus()
        bus.impose_position(1, 0.5)
        assert busmod.read_position(bus, 1) == 0.0

    def test_write_goal_converges(self):
        bus = self.make_bus()
        busmod.write_goal(bus, 1, 0.8)
        for _ in range(300):
            transact(bus, BusFrame(id=1, opcode=OP_PING), dt=0.02)
        assert busmod.read_position(bus, 1) == pytest.approx(0.8, abs=1e-3)

    def test_unknown_id_times_out(self):
        bus = self.make_bus()
        assert transact(bus, BusFrame(id=0x77, opcode=OP_READ_POS)) is None
        with pytest.raises(BusTimeout):
            busmod.read_position(bus, 0x77)

    def test_unknown_opcode_error_reply(self):
        bus = self.make_bus()
        reply = transact(bus, BusFrame(id=1, opcode=0x55))
        assert reply is not None and reply.opcode == OP_ERROR
        assert reply.payload == bytes([0x55])

    def test_broadcast_never_replies(self):
        bus = self.make_bus()
        assert transact(bus, BusFrame(id=0xFE, opcode=OP_TORQUE, payload=b"\x00")) is None
        assert transact(bus, BusFrame(id=0xFE, opcode=0x55)) is None

    def test_sync_write_equals_individual_writes(self):
        goals = {1: 0.3, 4: -0.7, 9: 1.1}
        bus_a = self.make_bus()
        busmod.sync_write(bus_a, goals)
        bus_a.advance(0.02)
        bus_b = self.make_bus()
        for jid, g in goals.items():
            busmod.write_goal(bus_b, jid, g)
        bus_b.advance(0.02)
        for jid in goals:
            assert bus_a.servos[jid][1].position == bus_b.servos[jid][1].position

    def test_read_current_tracks_error(self):
        bus = self.make_bus()
        busmod.write_goal(bus, 1, 1.0)
        bus.advance(0.001)
        current = busmod.read_current(bus, 1)
        spec, state = bus.servos[1]
        assert current == pytest.approx(0.5 * abs(1.0 - state.position), abs=1e-3)

    def test_frame_log_hex_lines(self):
        bus = self.make_bus()
        busmod.read_position(bus, 1, dt=0.02)
        dump = bus.dump_log()
        for line in dump.splitlines():
            assert re.match(r"^\d+\.\d{6} (tx|rx) [0-9a-f]+$", line)
        assert " tx " in dump and " rx " in dump
