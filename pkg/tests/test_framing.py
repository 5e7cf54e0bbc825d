import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import crc32_bitwise
from qframes.framing import (
    FCS_LEN,
    HEADER_LEN,
    MAX_PAYLOAD,
    PREAMBLE_LEN,
    SYNC,
    BadCrc,
    BadLength,
    CFrame,
    EncodingError,
    NoPreamble,
    QFramePlan,
    SchedulingError,
    TruncatedFrame,
    bytes_to_symbols,
    crc32,
    decode_cframe,
    encode_cframe,
    frame_symbol_count,
    iter_cframes,
    schedule_qframe,
)

# CRC-32 of 00 01 00 02 01 02 00 00 00 00, frozen from the bitwise reference
GOLDEN_EMPTY_FCS = 0xD2F2EDD9
BODY_START = PREAMBLE_LEN + 8

frames = st.builds(
    CFrame,
    dst_addr=st.integers(0, 0xFFFF),
    src_addr=st.integers(0, 0xFFFF),
    encoding_id=st.integers(0, 0xFF),
    protocol_id=st.integers(0, 0xFF),
    seq=st.integers(0, 0xFFFF),
    payload=st.binary(max_size=64),
)


def flip(stream: str, i: int) -> str:
    return stream[:i] + ("V" if stream[i] == "H" else "H") + stream[i + 1 :]


def test_golden_crc():
    f = CFrame(0x0001, 0x0002, 0x01, 0x02, 0, b"")
    assert f.header_bytes() == bytes.fromhex("00010002010200000000")
    assert crc32_bitwise(f.header_bytes()) == GOLDEN_EMPTY_FCS
    assert f.fcs == GOLDEN_EMPTY_FCS
    assert crc32(b"123456789") == crc32_bitwise(b"123456789") == 0xCBF43926


def test_layout():
    s = encode_cframe(CFrame(1, 2, payload=b"abc"))
    assert s[:PREAMBLE_LEN] == "HV" * 8
    assert s[PREAMBLE_LEN:BODY_START] == "VVHVHVHV"  # 0xD5 MSB first
    assert len(s) == frame_symbol_count(3) == 16 + 8 + 8 * (HEADER_LEN + 3 + FCS_LEN)


@given(frames)
def test_round_trip(f):
    s = encode_cframe(f)
    g, end = decode_cframe(s)
    assert g == f and end == len(s)


@given(st.binary(max_size=64))
def test_crc_matches_reference(data):
    assert crc32(data) == crc32_bitwise(data)


def test_exhaustive_single_flips_bad_crc():
    f = CFrame(0x0001, 0x0002, 0x01, 0x02, 7, bytes(range(16)))
    s = encode_cframe(f)
    for i in range(BODY_START, len(s)):
        with pytest.raises(BadCrc):
            decode_cframe(flip(s, i))


def test_sync_flip_loses_preamble():
    s = encode_cframe(CFrame(1, 2))
    for i in range(BODY_START):
        with pytest.raises(NoPreamble):
            decode_cframe(flip(s, i))


def test_degenerate_streams():
    with pytest.raises(NoPreamble):
        decode_cframe("")
    with pytest.raises(NoPreamble):
        decode_cframe("Q" * 100)
    with pytest.raises(TruncatedFrame):
        decode_cframe(SYNC + "HV" * 10)
    s = encode_cframe(CFrame(1, 2, payload=b"xyz"))
    with pytest.raises(TruncatedFrame):
        decode_cframe(s[:-3] + "QQQ")


def test_bad_length_with_valid_crc():
    # a frame whose declared length disagrees with an intact FCS-covered body
    header = struct.pack(">HHBBHH", 1, 2, 1, 2, 0, 40)
    data = header + b"abcd"
    s = SYNC + bytes_to_symbols(data + struct.pack(">I", crc32(data))) + "I" * 8
    with pytest.raises(BadLength):
        decode_cframe(s)


def test_oversized_payload():
    with pytest.raises(EncodingError):
        encode_cframe(CFrame(1, 2, payload=bytes(MAX_PAYLOAD + 1)))
    with pytest.raises(ValueError):
        CFrame(1 << 16, 2)


def test_schedule_lengths():
    plan = QFramePlan(CFrame(1, 2), guard_slots=8, quantum_slot_count=1024)
    s = schedule_qframe(plan, 1024)
    assert len(s) == len(plan) == plan.classical_len + 8 + 1024
    assert s[plan.quantum_offset - 1] == "I" and s[plan.quantum_offset] == "Q"
    empty = QFramePlan(CFrame(1, 2), guard_slots=8)
    assert schedule_qframe(empty, []) == encode_cframe(empty.cframe) + "I" * 8
    with pytest.raises(SchedulingError):
        schedule_qframe(plan, 3)


def test_two_qframes_consecutive_seq():
    plans = [QFramePlan(CFrame(1, 2, seq=k, payload=b"\x00\x00\x00\x10"), 8, 16) for k in (41, 42)]
    stream = "".join(schedule_qframe(p, 16) for p in plans)
    got = list(iter_cframes(stream))
    assert [f.seq for f, _ in got] == [41, 42]
    # anchor = frame end + guard
    assert got[0][1] + 8 == plans[0].quantum_offset
    assert got[1][1] + 8 == len(plans[0]) + plans[1].quantum_offset
