"""Receiver model: two stabilized analyzer arms behind a 50/50 splitter.

Detector order everywhere is (D_H, D_V, D_R, D_L). The Z arm analyzes after
compensator ``s1``; the X arm after ``s2``, whose H/V ports are D_R/D_L.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .alice import PulseBatch, PulseSlot
from .framing import IDLE, SYM_0, SYM_1, CFrame, decode_cframe
from .polmath import (
    Basis,
    JonesVector,
    PolUnitary,
    StateLabel,
    apply,
    compensator_for,
    detection_prob,
    jones_of,
    rotation,
)

DETECTORS = ("D_H", "D_V", "D_R", "D_L")
_H = jones_of(StateLabel.H)
_V = jones_of(StateLabel.V)

# 1 - (1 - p)^2 = 0.0015: vacuum click fraction per gated detector pair
DEFAULT_P_DARK = 1.0 - math.sqrt(1.0 - 0.0015)


class LockFailed(RuntimeError):
    def __init__(self, best_fraction: float, iterations: int):
        super().__init__(f"stabilizer did not lock in {iterations} iterations (best wrong-port fraction {best_fraction:.3g})")
        self.best_fraction = best_fraction
        self.iterations = iterations


class TapDisabled(RuntimeError):
    pass


@dataclass(frozen=True)
class BobParams:
    eta: float = 0.10
    p_dark: float = DEFAULT_P_DARK
    residual_error: float = 0.002
    tap_enabled: bool = False
    stabilizer_mode: str = "oracle"  # or "feedback"
    feedback_max_iters: int = 1000
    probe_time_us: float = 10.0  # wall-clock cost of one feedback iteration
    classical_threshold: float = 1e3  # photons; below this a slot reads as idle
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ValueError(f"eta={self.eta} outside [0, 1]")
        if not 0 <= self.p_dark <= 1:
            raise ValueError(f"p_dark={self.p_dark} outside [0, 1]")
        if not 0 <= self.residual_error <= 0.5:
            raise ValueError(f"residual_error={self.residual_error} outside [0, 0.5]")
        if self.stabilizer_mode not in ("oracle", "feedback"):
            raise ValueError(f"stabilizer_mode must be 'oracle' or 'feedback', got {self.stabilizer_mode!r}")
        if self.feedback_max_iters < 1:
            raise ValueError("feedback_max_iters must be >= 1")


@dataclass(frozen=True)
class StabilizerState:
    s1: PolUnitary
    s2: PolUnitary
    last_locked_slot: int = 0
    iterations_used: int = 0


@dataclass(frozen=True)
class DetectionEvent:
    slot: int
    clicks: frozenset
    resolved: tuple[int, Basis] | None  # (bit, basis)
    squashed: bool = False


# --- stabilization -------------------------------------------------------

ProbeFn = Callable[[StateLabel, PolUnitary], float]


class StrongLightProbe:
    """Intensity-only access to the channel through strong reference light.

    Returns the wrong-port (V) power fraction of reference light prepared
    in ``anchor``, after the channel and a trial compensator.
    """

    def __init__(self, channel_u: PolUnitary):
        self._u = channel_u
        self.calls = 0

    def __call__(self, anchor: StateLabel, compensator: PolUnitary) -> float:
        self.calls += 1
        return detection_prob(apply(compensator @ self._u, jones_of(anchor)), _V)


def waveplates(angles: Sequence[float]) -> PolUnitary:
    """Three-element compensator: retarder about S3, then S2, then S3 (Poincare angles)."""
    a, b, c = angles
    m = rotation((0.0, 1.0, 0.0), c / 2) @ rotation((1.0, 0.0, 0.0), b / 2) @ rotation((0.0, 1.0, 0.0), a / 2)
    return PolUnitary._trusted(m)


_OFFSETS = (0.0, 2 * math.pi / 3, 4 * math.pi / 3)


def feedback_lock(probe: ProbeFn, anchor: StateLabel, target: float, max_iters: int) -> tuple[PolUnitary, float, int]:
    """Coordinate descent on the wrong-port power, one waveplate at a time.

    Along one waveplate angle the power is an exact sinusoid, so three
    probes locate its minimum. One iteration is one such coordinate update.
    Returns ``(compensator, wrong_port_fraction, iterations)``.
    """
    angles = [0.0, 0.0, 0.0]
    f = probe(anchor, waveplates(angles))
    best = (f, list(angles))
    it = 0
    while f > target and it < max_iters:
        k = it % 3
        samples = []
        for d in _OFFSETS:
            trial = list(angles)
            trial[k] += d
            samples.append(probe(anchor, waveplates(trial)))
        b = (2 / 3) * sum(s * math.cos(d) for s, d in zip(samples, _OFFSETS))
        c = (2 / 3) * sum(s * math.sin(d) for s, d in zip(samples, _OFFSETS))
        angles[k] = math.remainder(angles[k] + math.atan2(c, b) + math.pi, 2 * math.pi)
        f = probe(anchor, waveplates(angles))
        it += 1
        if f < best[0]:
            best = (f, list(angles))
    if f > target:
        raise LockFailed(best[0], it)
    return waveplates(angles), f, it


def stabilize(
    channel_u: PolUnitary | None,
    params: BobParams,
    mode: str | None = None,
    probe: ProbeFn | None = None,
    slot: int = 0,
) -> StabilizerState:
    """Lock PS1 on H reference light and PS2 on R reference light.

    ``oracle`` inverts the channel exactly; ``feedback`` only sees wrong-port
    power through ``probe`` (built from ``channel_u`` when not given).
    """
    mode = mode or params.stabilizer_mode
    if mode == "oracle":
        if channel_u is None:
            raise ValueError("oracle stabilization needs the channel unitary")
        return StabilizerState(
            s1=compensator_for(channel_u, StateLabel.H),
            s2=compensator_for(channel_u, StateLabel.R),
            last_locked_slot=slot,
        )
    if mode != "feedback":
        raise ValueError(f"unknown stabilizer mode {mode!r}")
    if probe is None:
        probe = StrongLightProbe(channel_u)
    s1, _, n1 = feedback_lock(probe, StateLabel.H, params.residual_error, params.feedback_max_iters)
    s2, _, n2 = feedback_lock(probe, StateLabel.R, params.residual_error, params.feedback_max_iters)
    return StabilizerState(s1=s1, s2=s2, last_locked_slot=slot, iterations_used=n1 + n2)


def detune(stab: StabilizerState, wrong_port: float) -> StabilizerState:
    """Misalign both compensators so each arm leaks exactly ``wrong_port`` to its wrong port."""
    theta = math.asin(math.sqrt(wrong_port))
    tilt = PolUnitary._trusted(np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]]))
    return StabilizerState(tilt @ stab.s1, tilt @ stab.s2, stab.last_locked_slot, stab.iterations_used)


def wrong_port_fraction(stab: StabilizerState, channel_u: PolUnitary) -> tuple[float, float]:
    """Wrong-port fraction of H reference light in the Z arm and R light in the X arm."""
    z = detection_prob(apply(stab.s1 @ channel_u, jones_of(StateLabel.H)), _V)
    x = detection_prob(apply(stab.s2 @ channel_u, jones_of(StateLabel.R)), _V)
    return z, x


# --- detection -----------------------------------------------------------

def arm_projections(pol: JonesVector, stab: StabilizerState) -> np.ndarray:
    """Projection probabilities q(d) of a state arriving at Bob onto each detector."""
    z = apply(stab.s1, pol)
    x = apply(stab.s2, pol)
    return np.array([detection_prob(z, _H), detection_prob(z, _V), detection_prob(x, _H), detection_prob(x, _V)])


def _flaw_swap(q: np.ndarray, basis: int) -> np.ndarray:
    q = q.copy()
    i = 2 * int(basis)
    q[i], q[i + 1] = q[i + 1], q[i]
    return q


def click_probabilities(mu: float, q: np.ndarray, eta: float, p_dark: float) -> np.ndarray:
    """Gated click probability per detector: ``1 - (1 - p_dark) exp(-mu/2 q eta)``."""
    return 1.0 - (1.0 - p_dark) * np.exp(-mu * 0.5 * np.asarray(q) * eta)


def detect_pulse(pulse: PulseSlot, stab: StabilizerState, params: BobParams, rng: np.random.Generator) -> DetectionEvent:
    """Sample all four detectors for one faint pulse (six uniforms)."""
    if pulse.truth is None:
        raise ValueError(f"{pulse.klass.value} slot is not a quantum pulse")
    q = arm_projections(pulse.pol, stab)
    if pulse.flawed:
        q = _flaw_swap(q, pulse.truth.basis)
    ptab = click_probabilities(pulse.mu, q, params.eta, params.p_dark).reshape(1, 4)
    clicks, bit, basis, squashed = _kernels.detect_slots(rng, np.zeros(1, dtype=np.int16), ptab)
    return _event(pulse.slot, clicks[0], bit[0], basis[0], squashed[0])


def _event(slot, clicks, bit, basis, squashed) -> DetectionEvent:
    names = frozenset(d for k, d in enumerate(DETECTORS) if (int(clicks) >> k) & 1)
    resolved = None if bit < 0 else (int(bit), Basis(int(basis)))
    return DetectionEvent(int(slot), names, resolved, bool(squashed))


@dataclass
class DetectionBatch:
    slot: np.ndarray
    clicks: np.ndarray  # bit k set when detector k clicked
    bit: np.ndarray  # -1 when nothing resolved
    basis: np.ndarray  # -1 when nothing resolved
    squashed: np.ndarray

    def __len__(self) -> int:
        return len(self.slot)

    def event(self, i: int) -> DetectionEvent:
        return _event(self.slot[i], self.clicks[i], self.bit[i], self.basis[i], self.squashed[i])


def click_table(
    mu_values: Sequence[float],
    channel_u: PolUnitary,
    stab: StabilizerState,
    params: BobParams,
) -> np.ndarray:
    """Click probabilities for every (intensity, flawed, state) row.

    Row index is ``8 * intensity + 4 * flawed + state``.
    """
    rows = []
    for mu in mu_values:
        for flawed in (False, True):
            for label in StateLabel:
                q = arm_projections(apply(channel_u, jones_of(label)), stab)
                if flawed:
                    q = _flaw_swap(q, label.basis)
                rows.append(click_probabilities(mu, q, params.eta, params.p_dark))
    return np.ascontiguousarray(rows, dtype=np.float64)


def detect_batch(
    batch: PulseBatch,
    mu_values: Sequence[float],
    channel_u: PolUnitary,
    stab: StabilizerState,
    params: BobParams,
    rng: np.random.Generator,
) -> DetectionBatch:
    """Vectorized ``detect_pulse`` for slots sharing one channel unitary.

    ``mu_values`` are the per-intensity mean photon numbers as they reach the
    analyzers (after loss and tap).
    """
    ptab = click_table(mu_values, channel_u, stab, params)
    rows = (8 * batch.intensity.astype(np.int16) + 4 * batch.flawed + batch.state).astype(np.int16)
    clicks, bit, basis, squashed = _kernels.detect_slots(rng, rows, ptab)
    return DetectionBatch(batch.slot, clicks, bit, basis, squashed)


# --- classical readout ---------------------------------------------------

def threshold_symbols(pulses: Sequence[PulseSlot], stab: StabilizerState, params: BobParams) -> str:
    """Strong pulses become H/V by which Z-arm port takes more power; faint slots read as idle."""
    out = []
    for p in pulses:
        if p.mu < params.classical_threshold:
            out.append(IDLE)
        else:
            out.append(SYM_0 if detection_prob(apply(stab.s1, p.pol), _H) >= 0.5 else SYM_1)
    return "".join(out)


def read_cframe_spd(
    pulses: Sequence[PulseSlot], stab: StabilizerState, params: BobParams, guard_slots: int
) -> tuple[CFrame, int]:
    """Decode a C-frame from strong light on the SPD arms; returns (frame, quantum-slot anchor)."""
    frame, end = decode_cframe(threshold_symbols(pulses, stab, params))
    return frame, end + guard_slots


def read_cframe_tap(
    pulses: Sequence[PulseSlot], stab: StabilizerState, params: BobParams, guard_slots: int
) -> tuple[CFrame, int]:
    """Decode a C-frame from the 10% tap (DET + LOG)."""
    if not params.tap_enabled:
        raise TapDisabled("classical tap is not installed")
    return read_cframe_spd(pulses, stab, params, guard_slots)
