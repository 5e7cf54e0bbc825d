"""Protocol engine: Q-frame exchange, sifting, QBER statistics, decoy analysis."""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import bob as bob_mod
from .alice import AliceParams, Intensity, PulseBatch, PulseSlot, SlotClass, emit_classical_symbol, prepare_batch
from .bob import BobParams, DetectionBatch, DetectionEvent, LockFailed, StabilizerState
from .channel import ChannelParams, ChannelState, advance, propagate, quantum_arm_factor, tap_split, transmittance
from .decoy import DecoyEstimate, decoy_bounds
from .framing import (
    DEFAULT_GUARD_SLOTS,
    ENCODING_POLARIZATION,
    PROTOCOL_DECOY_BB84,
    CFrame,
    FramingError,
    QFramePlan,
    encode_cframe,
)
from .polmath import PolUnitary, StateLabel, jones_of

# per-component stream tags mixed into the session seed
_ALICE, _BOB, _CHANNEL = 1, 2, 3
RELOCK_FACTOR = 2.0


class SessionAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class SessionConfig:
    alice: AliceParams = field(default_factory=AliceParams)
    bob: BobParams = field(default_factory=BobParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    frames: int = 1
    quantum_slots_per_frame: int = 1024
    dst_addr: int = 0x0001
    src_addr: int = 0x0002
    guard_slots: int = DEFAULT_GUARD_SLOTS
    seed: int = 0
    max_frame_errors: int = 3

    def __post_init__(self):
        if self.frames < 1 or self.quantum_slots_per_frame < 1:
            raise ValueError("frames and quantum_slots_per_frame must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.guard_slots < 0:
            raise ValueError("guard_slots must be >= 0")

    def rng(self, tag: int, component_seed: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, component_seed, tag])

    def to_dict(self) -> dict:
        return asdict(self)


# --- sifting -------------------------------------------------------------

@dataclass
class SiftedKey:
    slot: np.ndarray
    state: np.ndarray
    intensity: np.ndarray
    alice_bit: np.ndarray
    bob_bit: np.ndarray

    def __len__(self) -> int:
        return len(self.slot)

    @property
    def errors(self) -> np.ndarray:
        return self.alice_bit != self.bob_bit

    @classmethod
    def concat(cls, parts: Sequence["SiftedKey"]) -> "SiftedKey":
        if not parts:
            z8 = np.zeros(0, dtype=np.int8)
            return cls(np.zeros(0, dtype=np.int64), z8, z8, z8, z8)
        return cls(*(np.concatenate([getattr(p, k) for p in parts]) for k in ("slot", "state", "intensity", "alice_bit", "bob_bit")))

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.slot, self.state, self.intensity, self.alice_bit, self.bob_bit):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def _as_batches(truths, events) -> tuple[PulseBatch, DetectionBatch]:
    if isinstance(truths, PulseBatch) and isinstance(events, DetectionBatch):
        return truths, events
    truths = list(truths)
    events = list(events)
    by_slot = {e.slot: e for e in events}
    n = len(truths)
    slot = np.array([p.slot for p in truths], dtype=np.int64)
    state = np.array([int(p.truth.state) for p in truths], dtype=np.int8)
    intensity = np.array([int(p.truth.intensity) for p in truths], dtype=np.int8)
    bit = np.full(n, -1, dtype=np.int8)
    basis = np.full(n, -1, dtype=np.int8)
    clicks = np.zeros(n, dtype=np.uint8)
    squashed = np.zeros(n, dtype=np.uint8)
    for i, p in enumerate(truths):
        e: DetectionEvent | None = by_slot.get(p.slot)
        if e is None:
            continue
        clicks[i] = sum(1 << k for k, d in enumerate(bob_mod.DETECTORS) if d in e.clicks)
        squashed[i] = e.squashed
        if e.resolved is not None:
            bit[i], basis[i] = e.resolved[0], int(e.resolved[1])
    pb = PulseBatch(slot, state, intensity, np.zeros(n, dtype=np.uint8), np.zeros(n))
    return pb, DetectionBatch(slot, clicks, bit, basis, squashed)


def sift(truths: PulseBatch | Sequence[PulseSlot], events: DetectionBatch | Sequence[DetectionEvent]) -> SiftedKey:
    """Keep resolved signal/decoy slots whose measurement basis matches Alice's.

    Accepts slot-aligned batches, or lists of pulses and events matched by slot.
    """
    pb, det = _as_batches(truths, events)
    keep = (det.basis == pb.basis) & (pb.intensity != Intensity.VACUUM)
    return SiftedKey(pb.slot[keep], pb.state[keep], pb.intensity[keep], pb.bit[keep], det.bit[keep])


@dataclass
class SlotTally:
    """Per-slot counters not visible in the sifted key."""

    slots: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    detected: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=np.int64))
    vacuum_arm_gates: int = 0
    vacuum_arm_clicks: int = 0
    mismatched: int = 0
    mismatched_ones: int = 0
    squashed: int = 0

    def add(self, pb: PulseBatch, det: DetectionBatch) -> None:
        self.slots += np.bincount(pb.intensity, minlength=3)
        resolved = det.basis >= 0
        self.detected += np.bincount(pb.intensity[resolved], minlength=3)
        vac = pb.intensity == Intensity.VACUUM
        c = det.clicks[vac]
        self.vacuum_arm_gates += 2 * int(vac.sum())
        self.vacuum_arm_clicks += int(np.count_nonzero(c & 3) + np.count_nonzero(c & 12))
        mis = resolved & (det.basis != pb.basis)
        self.mismatched += int(mis.sum())
        self.mismatched_ones += int(det.bit[mis].sum())
        self.squashed += int(det.squashed.sum())

    def merge(self, other: "SlotTally") -> "SlotTally":
        return SlotTally(
            self.slots + other.slots,
            self.detected + other.detected,
            self.vacuum_arm_gates + other.vacuum_arm_gates,
            self.vacuum_arm_clicks + other.vacuum_arm_clicks,
            self.mismatched + other.mismatched,
            self.mismatched_ones + other.mismatched_ones,
            self.squashed + other.squashed,
        )

    def gain(self, intensity: Intensity) -> float:
        n = self.slots[intensity]
        return float(self.detected[intensity] / n) if n else float("nan")

    def to_dict(self) -> dict:
        return {
            "slots": {i.name.lower(): int(self.slots[i]) for i in Intensity},
            "detected": {i.name.lower(): int(self.detected[i]) for i in Intensity},
            "vacuum_arm_gates": self.vacuum_arm_gates,
            "vacuum_arm_clicks": self.vacuum_arm_clicks,
            "mismatched": self.mismatched,
            "mismatched_ones": self.mismatched_ones,
            "squashed": self.squashed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SlotTally":
        return cls(
            np.array([d["slots"][i.name.lower()] for i in Intensity], dtype=np.int64),
            np.array([d["detected"][i.name.lower()] for i in Intensity], dtype=np.int64),
            d["vacuum_arm_gates"],
            d["vacuum_arm_clicks"],
            d["mismatched"],
            d["mismatched_ones"],
            d["squashed"],
        )


# --- statistics ----------------------------------------------------------

@dataclass(frozen=True)
class QberRecord:
    state: str | None  # None for the pooled row of one intensity
    intensity: str
    n_sifted: int
    n_errors: int
    qber: float | None  # None when nothing was sifted
    stat_error: float | None

    @classmethod
    def from_counts(cls, state, intensity, n_sifted: int, n_errors: int) -> "QberRecord":
        if n_sifted == 0:
            return cls(state, intensity, 0, 0, None, None)
        e = n_errors / n_sifted
        return cls(state, intensity, int(n_sifted), int(n_errors), e, math.sqrt(e * (1 - e) / n_sifted))


@dataclass(frozen=True)
class ClickFractionRecord:
    """Vacuum row: fraction of gated detector pairs with at least one click."""

    intensity: str
    n_gates: int
    n_clicks: int
    click_fraction: float | None
    stat_error: float | None

    @classmethod
    def from_counts(cls, n_gates: int, n_clicks: int) -> "ClickFractionRecord":
        if n_gates == 0:
            return cls("vacuum", 0, 0, None, None)
        f = n_clicks / n_gates
        return cls("vacuum", int(n_gates), int(n_clicks), f, math.sqrt(f * (1 - f) / n_gates))


_QBER_INTENSITIES = (Intensity.SIGNAL, Intensity.DECOY)


def qber_counts(sifted: SiftedKey) -> np.ndarray:
    """``counts[intensity, state] = (n_sifted, n_errors)`` as a (3, 4, 2) array."""
    idx = 4 * sifted.intensity.astype(np.int64) + sifted.state
    n = np.bincount(idx, minlength=12).reshape(3, 4)
    e = np.bincount(idx, weights=sifted.errors, minlength=12).reshape(3, 4).astype(np.int64)
    return np.stack([n, e], axis=-1)


def qber_table(sifted: SiftedKey | np.ndarray) -> list[QberRecord]:
    """One record per (state, intensity) cell for signal and decoy, state-major."""
    counts = sifted if isinstance(sifted, np.ndarray) else qber_counts(sifted)
    return [
        QberRecord.from_counts(s.name, i.name.lower(), *counts[i, s])
        for s in StateLabel
        for i in _QBER_INTENSITIES
    ]


def pooled_qber(sifted: SiftedKey | np.ndarray, intensity: Intensity) -> QberRecord:
    counts = sifted if isinstance(sifted, np.ndarray) else qber_counts(sifted)
    n, e = counts[intensity].sum(axis=0)
    return QberRecord.from_counts(None, intensity.name.lower(), n, e)


def estimate_decoy(counts: np.ndarray, tally: SlotTally, alice: AliceParams) -> DecoyEstimate | None:
    """Decoy bounds from observed gains and error rates; None if an input is missing."""
    sig = pooled_qber(counts, Intensity.SIGNAL)
    dec = pooled_qber(counts, Intensity.DECOY)
    if sig.qber is None or dec.qber is None or tally.slots[Intensity.VACUUM] == 0 or alice.mu_decoy <= 0:
        return None
    Q_mu = tally.gain(Intensity.SIGNAL)
    Q_nu = tally.gain(Intensity.DECOY)
    if Q_mu <= 0 or Q_nu <= 0:
        return None
    return decoy_bounds(Q_mu, sig.qber, Q_nu, dec.qber, tally.gain(Intensity.VACUUM), alice.mu_signal, alice.mu_decoy)


# --- session -------------------------------------------------------------

@dataclass
class SessionResult:
    config: SessionConfig
    sifted: SiftedKey
    counts: np.ndarray
    tally: SlotTally
    counters: dict
    stabilization_log: list[dict]

    @property
    def qber_records(self) -> list[QberRecord]:
        return qber_table(self.counts)

    @property
    def vacuum(self) -> ClickFractionRecord:
        return ClickFractionRecord.from_counts(self.tally.vacuum_arm_gates, self.tally.vacuum_arm_clicks)

    @property
    def decoy(self) -> DecoyEstimate | None:
        return estimate_decoy(self.counts, self.tally, self.config.alice)

    def pooled(self, intensity: Intensity) -> QberRecord:
        return pooled_qber(self.counts, intensity)

    def record(self, state: StateLabel, intensity: Intensity) -> QberRecord:
        return QberRecord.from_counts(state.name, intensity.name.lower(), *self.counts[intensity, state])

    def to_dict(self) -> dict:
        decoy = self.decoy
        return {
            "config": self.config.to_dict(),
            "counters": self.counters,
            "qber": [asdict(r) for r in self.qber_records],
            "pooled": [asdict(self.pooled(i)) for i in _QBER_INTENSITIES],
            "vacuum": asdict(self.vacuum),
            "decoy": None if decoy is None else decoy.to_dict(),
            "tally": self.tally.to_dict(),
            "counts": self.counts.tolist(),
            "sifted_bits": len(self.sifted),
            "sifted_digest": self.sifted.digest(),
            "stabilization": {
                "relocks": sum(1 for r in self.stabilization_log if r["relocked"]),
                "iterations": sum(r["iterations"] for r in self.stabilization_log),
                "max_residual": max((r["residual"] for r in self.stabilization_log), default=None),
            },
        }


def _lock(u, params: BobParams, slot: int) -> StabilizerState:
    if params.stabilizer_mode == "oracle":
        # exact inversion, then settle at the configured residual misalignment
        return bob_mod.detune(bob_mod.stabilize(u, params, "oracle", slot=slot), params.residual_error)
    return bob_mod.stabilize(u, params, "feedback", slot=slot)


def run_session(config: SessionConfig) -> SessionResult:
    """Run ``config.frames`` Q-frames end to end.

    Per frame: drift the channel over the previous frame, re-lock when the
    reference-light wrong-port fraction exceeds twice the residual target,
    send and decode the C-frame, then send, detect and sift the quantum
    slots. Birefringence is held fixed within a frame.
    """
    a, b, ch = config.alice, config.bob, config.channel
    rng_alice = config.rng(_ALICE, a.seed)
    rng_bob = config.rng(_BOB, b.seed)
    chan = ChannelState.initial(ch, config.rng(_CHANNEL, ch.seed))

    mu_at_bob = a.mu_table() * transmittance(ch) * quantum_arm_factor(b.tap_enabled)
    n_q = config.quantum_slots_per_frame
    idle = PulseSlot(0, SlotClass.IDLE, 0.0, jones_of(StateLabel.H))

    stab: StabilizerState | None = None
    parts: list[SiftedKey] = []
    tally = SlotTally()
    log: list[dict] = []
    counters = {
        "frames_sent": 0,
        "frames_decoded": 0,
        "decode_errors": {},
        "lock_failures": 0,
        "sync": "tap" if b.tap_enabled else "spd",
    }
    consecutive = 0
    slot = ch.delay_slots
    prev_len = 0

    for k in range(config.frames):
        advance(chan, prev_len, ch)
        frame = CFrame(
            config.dst_addr,
            config.src_addr,
            ENCODING_POLARIZATION,
            PROTOCOL_DECOY_BB84,
            k & 0xFFFF,
            struct.pack(">I", n_q),
        )
        plan = QFramePlan(frame, config.guard_slots, n_q)

        before = max(bob_mod.wrong_port_fraction(stab, chan.u)) if stab is not None else None
        relocked, iterations = False, 0
        if stab is None or before > RELOCK_FACTOR * b.residual_error + 1e-12:
            try:
                stab = _lock(chan.u, b, slot)
                relocked, iterations = True, stab.iterations_used
            except LockFailed:
                counters["lock_failures"] += 1
                if stab is None:
                    stab = StabilizerState(PolUnitary.identity(), PolUnitary.identity(), slot)  # uncompensated
        after = max(bob_mod.wrong_port_fraction(stab, chan.u))
        log.append({"frame": k, "slot": slot, "probe": before, "relocked": relocked, "iterations": iterations, "residual": after})

        # classical part: strong symbols share the quantum channel state
        sent = {}
        for bit in (0, 1):
            p = propagate(emit_classical_symbol(bit, a), chan, ch)
            tapped, through = tap_split(p, b.tap_enabled)
            sent[bit] = tapped if b.tap_enabled else through
        pulses = [sent[s == "V"] for s in encode_cframe(frame)] + [idle] * config.guard_slots
        counters["frames_sent"] += 1
        try:
            if b.tap_enabled:
                rx, anchor = bob_mod.read_cframe_tap(pulses, stab, b, config.guard_slots)
            else:
                rx, anchor = bob_mod.read_cframe_spd(pulses, stab, b, config.guard_slots)
            if rx.seq != frame.seq or anchor != plan.quantum_offset:
                raise FramingError(f"desync: seq {rx.seq} at anchor {anchor}, expected {frame.seq} at {plan.quantum_offset}")
            decoded = True
        except FramingError as exc:
            kind = getattr(exc, "kind", "desync")
            counters["decode_errors"][kind] = counters["decode_errors"].get(kind, 0) + 1
            decoded = False

        batch = prepare_batch(n_q, a, rng_alice, first_slot=slot + plan.quantum_offset)
        if decoded:
            consecutive = 0
            counters["frames_decoded"] += 1
            det = bob_mod.detect_batch(batch, mu_at_bob, chan.u, stab, b, rng_bob)
            parts.append(sift(batch, det))
            tally.add(batch, det)
        else:
            consecutive += 1
            if consecutive >= config.max_frame_errors:
                raise SessionAborted(
                    f"{consecutive} consecutive undecodable C-frames (last at frame {k}, slot {slot}); "
                    f"errors so far: {counters['decode_errors']}"
                )

        prev_len = len(plan)
        slot += prev_len

    sifted = SiftedKey.concat(parts)
    return SessionResult(config, sifted, qber_counts(sifted), tally, counters, log)
