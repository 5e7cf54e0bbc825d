"""C-frame wire format and Q-frame scheduling.

A symbol stream is a ``str`` with one character per clock slot:

* ``H`` / ``V`` -- strong classical symbol carrying bit 0 / 1
* ``Q``         -- faint quantum pulse slot
* ``I``         -- idle (guard) slot

Frame layout, every byte MSB first::

    preamble  16 symbols H V H V ...
    SFD       0xD5
    dst(16) src(16) encoding_id(8) protocol_id(8) seq(16) payload_len(16)
    payload   0..1024 bytes
    fcs(32)   CRC-32 (IEEE, reflected, init/xorout 0xFFFFFFFF) of header + payload
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from typing import Sequence

SYM_0 = "H"
SYM_1 = "V"
QUANTUM = "Q"
IDLE = "I"
CLASSICAL = frozenset((SYM_0, SYM_1))

PREAMBLE_LEN = 16
SFD = 0xD5
HEADER_LEN = 10
FCS_LEN = 4
MAX_PAYLOAD = 1024
DEFAULT_GUARD_SLOTS = 8

ENCODING_POLARIZATION = 0x01
ENCODING_TIME_BIN = 0x02
PROTOCOL_BB84 = 0x01
PROTOCOL_DECOY_BB84 = 0x02
PROTOCOL_B92 = 0x03

_HEADER = struct.Struct(">HHBBHH")
_BITS = {b: "".join(SYM_1 if (b >> (7 - k)) & 1 else SYM_0 for k in range(8)) for b in range(256)}
_BYTES = {v: k for k, v in _BITS.items()}

PREAMBLE = (SYM_0 + SYM_1) * (PREAMBLE_LEN // 2)
SYNC = PREAMBLE + _BITS[SFD]


class FramingError(Exception):
    """Base class for every error the codec raises."""


class EncodingError(FramingError):
    pass


class SchedulingError(FramingError):
    pass


class DecodeError(FramingError):
    kind = "decode"


class NoPreamble(DecodeError):
    kind = "no-preamble"


class TruncatedFrame(DecodeError):
    kind = "truncated-frame"


class BadCrc(DecodeError):
    kind = "bad-crc"


class BadLength(DecodeError):
    kind = "bad-length"


def crc32(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


@dataclass(frozen=True)
class CFrame:
    dst_addr: int
    src_addr: int
    encoding_id: int = ENCODING_POLARIZATION
    protocol_id: int = PROTOCOL_DECOY_BB84
    seq: int = 0
    payload: bytes = b""
    fcs: int = field(default=None)  # computed when omitted

    def __post_init__(self):
        for name, bits in (("dst_addr", 16), ("src_addr", 16), ("encoding_id", 8), ("protocol_id", 8), ("seq", 16)):
            v = getattr(self, name)
            if not 0 <= v < (1 << bits):
                raise ValueError(f"{name}={v} does not fit in {bits} bits")
        object.__setattr__(self, "payload", bytes(self.payload))
        if self.fcs is None:
            object.__setattr__(self, "fcs", crc32(self.header_bytes() + self.payload))

    def header_bytes(self, payload_len: int | None = None) -> bytes:
        n = len(self.payload) if payload_len is None else payload_len
        return _HEADER.pack(self.dst_addr, self.src_addr, self.encoding_id, self.protocol_id, self.seq, n)

    def body(self) -> bytes:
        """Header + payload + freshly computed FCS, as transmitted."""
        if len(self.payload) > MAX_PAYLOAD:
            raise EncodingError(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD}")
        data = self.header_bytes() + self.payload
        return data + struct.pack(">I", crc32(data))


def bytes_to_symbols(data: bytes) -> str:
    return "".join(_BITS[b] for b in data)


def symbols_to_bytes(symbols: str) -> bytes:
    return bytes(_BYTES[symbols[i : i + 8]] for i in range(0, len(symbols), 8))


def frame_symbol_count(payload_len: int) -> int:
    return PREAMBLE_LEN + 8 + 8 * (HEADER_LEN + payload_len + FCS_LEN)


def encode_cframe(frame: CFrame) -> str:
    return SYNC + bytes_to_symbols(frame.body())


def _classical_run(stream: str, start: int) -> int:
    """Index of the first non-classical symbol at or after ``start``."""
    i = start
    n = len(stream)
    while i < n and stream[i] in CLASSICAL:
        i += 1
    return i


def decode_cframe(stream: str, start: int = 0) -> tuple[CFrame, int]:
    """Find and parse the next C-frame in ``stream``.

    Returns ``(frame, end)`` where ``end`` is the offset just past the FCS.
    The declared length is tried first. If it does not fit, the frame is
    delimited by the end of the strong-pulse run instead, so a corrupted
    length field still surfaces as :class:`BadCrc`.
    """
    if not isinstance(stream, str):
        try:
            stream = "".join(stream)
        except TypeError as exc:
            raise NoPreamble(f"not a symbol stream: {exc}") from None
    pos = stream.find(SYNC, start)
    if pos < 0:
        raise NoPreamble("no preamble/SFD found")
    body = pos + len(SYNC)
    run_end = _classical_run(stream, body)
    run = run_end - body
    if run < 8 * HEADER_LEN:
        raise TruncatedFrame(f"header needs {8 * HEADER_LEN} symbols, got {run}")

    header = symbols_to_bytes(stream[body : body + 8 * HEADER_LEN])
    dst, src, enc, proto, seq, length = _HEADER.unpack(header)
    need = 8 * (HEADER_LEN + length + FCS_LEN)

    if length <= MAX_PAYLOAD and need <= run:
        data = symbols_to_bytes(stream[body : body + need])
        payload = data[HEADER_LEN:-FCS_LEN]
        (fcs,) = struct.unpack(">I", data[-FCS_LEN:])
        if crc32(data[:-FCS_LEN]) != fcs:
            raise BadCrc(f"fcs {fcs:#010x} != computed {crc32(data[:-FCS_LEN]):#010x}")
        return CFrame(dst, src, enc, proto, seq, payload, fcs), body + need

    # declared length does not fit the strong-pulse run: classify by the run itself
    if run % 8 or run < 8 * (HEADER_LEN + FCS_LEN):
        raise TruncatedFrame(f"frame ends after {run} symbols, declared length {length}")
    data = symbols_to_bytes(stream[body:run_end])
    (fcs,) = struct.unpack(">I", data[-FCS_LEN:])
    if crc32(data[:-FCS_LEN]) != fcs:
        raise BadCrc(f"fcs mismatch over {len(data)}-byte frame")
    raise BadLength(f"declared payload length {length} disagrees with frame of {len(data)} bytes")


def iter_cframes(stream: str):
    """Yield ``(frame, end)`` for each consecutive decodable frame."""
    pos = 0
    while True:
        try:
            frame, pos = decode_cframe(stream, pos)
        except NoPreamble:
            return
        yield frame, pos


@dataclass(frozen=True)
class QFramePlan:
    cframe: CFrame
    guard_slots: int = DEFAULT_GUARD_SLOTS
    quantum_slot_count: int = 0

    def __post_init__(self):
        if self.guard_slots < 0 or self.quantum_slot_count < 0:
            raise ValueError("guard_slots and quantum_slot_count must be >= 0")

    @property
    def classical_len(self) -> int:
        return frame_symbol_count(len(self.cframe.payload))

    @property
    def quantum_offset(self) -> int:
        """Offset of the first quantum slot from the start of the Q-frame."""
        return self.classical_len + self.guard_slots

    def __len__(self) -> int:
        return self.quantum_offset + self.quantum_slot_count


def schedule_qframe(plan: QFramePlan, payload_spec: Sequence | int) -> str:
    """C-frame, then guard idles, then one ``Q`` per quantum slot.

    ``payload_spec`` describes the quantum pulses (only its length matters to
    the symbol stream); an int is accepted as a bare count.
    """
    n = payload_spec if isinstance(payload_spec, int) else len(payload_spec)
    if n != plan.quantum_slot_count:
        raise SchedulingError(f"{n} quantum descriptors for {plan.quantum_slot_count} slots")
    return encode_cframe(plan.cframe) + IDLE * plan.guard_slots + QUANTUM * n
