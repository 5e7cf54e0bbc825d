"""Sender model: random choices, faint-pulse preparation, strong classical symbols."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import _kernels
from .polmath import Basis, JonesVector, StateLabel, jones_of


class Intensity(enum.IntEnum):
    SIGNAL = 0
    DECOY = 1
    VACUUM = 2


class SlotClass(enum.Enum):
    CLASSICAL = "classical"
    SIGNAL = "signal"
    DECOY = "decoy"
    VACUUM = "vacuum"
    IDLE = "idle"


_CLASS_OF = {
    Intensity.SIGNAL: SlotClass.SIGNAL,
    Intensity.DECOY: SlotClass.DECOY,
    Intensity.VACUUM: SlotClass.VACUUM,
}


@dataclass(frozen=True)
class AliceParams:
    mu_signal: float = 0.5
    mu_decoy: float = 0.1
    mu_vacuum: float = 0.0
    p_signal: float = 0.8
    p_decoy: float = 0.15
    p_vacuum: float = 0.05
    e_prep: float = 0.03
    per_state_e_prep: Mapping[str, float] | None = None
    mu_classical: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if self.mu_vacuum != 0.0:
            raise ValueError("mu_vacuum must be 0")
        if not 0 <= self.mu_decoy < self.mu_signal:
            raise ValueError(f"need 0 <= mu_decoy < mu_signal, got {self.mu_decoy}, {self.mu_signal}")
        probs = (self.p_signal, self.p_decoy, self.p_vacuum)
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError(f"intensity probabilities must be >= 0 and sum to 1, got {probs}")
        if self.mu_classical <= 0:
            raise ValueError("mu_classical must be > 0")
        for p in self.e_prep_table():
            if not 0 <= p <= 1:
                raise ValueError(f"preparation error {p} outside [0, 1]")
        if self.per_state_e_prep is not None:
            unknown = set(self.per_state_e_prep) - {s.name for s in StateLabel}
            if unknown:
                raise ValueError(f"unknown states in per_state_e_prep: {sorted(unknown)}")
            object.__setattr__(self, "per_state_e_prep", dict(self.per_state_e_prep))

    def e_prep_for(self, label: StateLabel) -> float:
        if self.per_state_e_prep and label.name in self.per_state_e_prep:
            return float(self.per_state_e_prep[label.name])
        return float(self.e_prep)

    def e_prep_table(self) -> np.ndarray:
        return np.array([self.e_prep_for(s) for s in StateLabel], dtype=np.float64)

    def mu_of(self, intensity: Intensity) -> float:
        return (self.mu_signal, self.mu_decoy, self.mu_vacuum)[intensity]

    def mu_table(self) -> np.ndarray:
        return np.array([self.mu_signal, self.mu_decoy, self.mu_vacuum], dtype=np.float64)

    @property
    def intensity_cdf(self) -> tuple[float, float]:
        return self.p_signal, self.p_signal + self.p_decoy


@dataclass(frozen=True)
class Truth:
    """Alice's private record for one quantum slot."""

    bit: int
    basis: Basis
    intensity: Intensity

    @property
    def state(self) -> StateLabel:
        return StateLabel.from_basis_bit(self.basis, self.bit)


@dataclass(frozen=True)
class PulseSlot:
    slot: int
    klass: SlotClass
    mu: float
    pol: JonesVector
    truth: Truth | None = None
    flawed: bool = False  # preparation imperfection, consumed at detection

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")
        quantum = self.klass in (SlotClass.SIGNAL, SlotClass.DECOY, SlotClass.VACUUM)
        if quantum != (self.truth is not None):
            raise ValueError("truth is recorded exactly for signal/decoy/vacuum slots")
        if self.klass is SlotClass.VACUUM and self.mu != 0:
            raise ValueError("vacuum slots carry no light")


def choose_randoms(params: AliceParams, rng: np.random.Generator) -> tuple[int, Basis, Intensity]:
    """Uniform bit and basis, intensity by the configured split (three uniforms)."""
    u_bit, u_basis, u_int = rng.random(3)
    c_signal, c_decoy = params.intensity_cdf
    return int(u_bit >= 0.5), Basis(int(u_basis >= 0.5)), Intensity(int(u_int >= c_signal) + int(u_int >= c_decoy))


def prepare_pulse(
    bit: int,
    basis: Basis,
    intensity: Intensity,
    params: AliceParams,
    rng: np.random.Generator,
    slot: int = 0,
) -> PulseSlot:
    """Faint pulse in the BB84 state for (basis, bit); draws one uniform for the flaw flag."""
    label = StateLabel.from_basis_bit(basis, bit)
    intensity = Intensity(intensity)
    flawed = bool(rng.random() < params.e_prep_for(label))
    return PulseSlot(
        slot=slot,
        klass=_CLASS_OF[intensity],
        mu=params.mu_of(intensity),
        pol=jones_of(label),
        truth=Truth(int(bit), Basis(basis), intensity),
        flawed=flawed,
    )


def emit_classical_symbol(bit: int, params: AliceParams, slot: int = 0) -> PulseSlot:
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    return PulseSlot(slot=slot, klass=SlotClass.CLASSICAL, mu=params.mu_classical, pol=jones_of(StateLabel(bit)))


@dataclass
class PulseBatch:
    """Struct-of-arrays form of consecutive quantum slots.

    ``state`` holds ``StateLabel`` values, so ``basis = state >> 1`` and
    ``bit = state & 1``.
    """

    slot: np.ndarray
    state: np.ndarray
    intensity: np.ndarray
    flawed: np.ndarray
    mu: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.state)

    @property
    def basis(self) -> np.ndarray:
        return self.state >> 1

    @property
    def bit(self) -> np.ndarray:
        return self.state & 1

    def pulse(self, i: int) -> PulseSlot:
        label = StateLabel(int(self.state[i]))
        intensity = Intensity(int(self.intensity[i]))
        return PulseSlot(
            slot=int(self.slot[i]),
            klass=_CLASS_OF[intensity],
            mu=float(self.mu[i]),
            pol=jones_of(label),
            truth=Truth(label.bit, label.basis, intensity),
            flawed=bool(self.flawed[i]),
        )


def prepare_batch(n: int, params: AliceParams, rng: np.random.Generator, first_slot: int = 0) -> PulseBatch:
    """Vectorized ``choose_randoms`` + ``prepare_pulse`` over ``n`` slots.

    Consumes the stream exactly like ``n`` sequential scalar calls.
    """
    c_signal, c_decoy = params.intensity_cdf
    state, intensity, flawed = _kernels.prepare_slots(rng, n, c_signal, c_decoy, params.e_prep_table())
    return PulseBatch(
        slot=np.arange(first_slot, first_slot + n, dtype=np.int64),
        state=state,
        intensity=intensity,
        flawed=flawed,
        mu=params.mu_table()[intensity],
    )
