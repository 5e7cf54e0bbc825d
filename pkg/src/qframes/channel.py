"""Fibre quantum channel: loss, drifting birefringence and Bob's classical tap."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .alice import PulseSlot
from .polmath import PolUnitary, apply, random_unitary

TAP_FRACTION = 0.1


@dataclass(frozen=True)
class ChannelParams:
    length_km: float = 0.005
    loss_db_per_km: float = 0.2
    excess_loss_db: float = 0.0
    drift_sigma_per_slot: float = 0.0
    delay_slots: int = 0
    initial: str = "haar"  # or "identity"
    seed: int = 0

    def __post_init__(self):
        if self.length_km < 0 or self.loss_db_per_km < 0 or self.excess_loss_db < 0:
            raise ValueError("length and losses must be >= 0")
        if self.drift_sigma_per_slot < 0:
            raise ValueError("drift_sigma_per_slot must be >= 0")
        if self.delay_slots < 0:
            raise ValueError("delay_slots must be >= 0")
        if self.initial not in ("haar", "identity"):
            raise ValueError(f"initial must be 'haar' or 'identity', got {self.initial!r}")


@dataclass
class ChannelState:
    """Current birefringence of one channel. Owned and mutated by one session."""

    u: PolUnitary
    slot_clock: int = 0
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)

    @classmethod
    def initial(cls, params: ChannelParams, rng: np.random.Generator | None = None) -> "ChannelState":
        rng = np.random.default_rng(params.seed) if rng is None else rng
        u = random_unitary(rng) if params.initial == "haar" else PolUnitary.identity()
        return cls(u=u, slot_clock=0, rng=rng)


def transmittance(params: ChannelParams) -> float:
    db = params.length_km * params.loss_db_per_km + params.excess_loss_db
    return 10.0 ** (-db / 10.0)


def propagate(pulse: PulseSlot, state: ChannelState, params: ChannelParams) -> PulseSlot:
    """Attenuate the pulse and rotate its polarization by the current birefringence."""
    if pulse.mu < 0:
        raise ValueError("mean photon number must be >= 0")
    return dataclasses.replace(
        pulse,
        mu=pulse.mu * transmittance(params),
        pol=apply(state.u, pulse.pol),
    )


def advance(state: ChannelState, slots: int, params: ChannelParams) -> ChannelState:
    """Apply ``slots`` drift steps in place; the channel stream is untouched when sigma is 0."""
    if slots < 0:
        raise ValueError("slots must be >= 0")
    sigma = params.drift_sigma_per_slot
    if slots and sigma > 0:
        normals = state.rng.standard_normal((slots, 4))
        m = _kernels.drift_walk(state.u.m, normals, sigma, state.slot_clock)
        state.u = PolUnitary._trusted(m)
    state.slot_clock += slots
    return state


def tap_split(pulse: PulseSlot, tap_enabled: bool) -> tuple[PulseSlot, PulseSlot]:
    """Split into (classical arm, quantum arm); with the tap off everything goes to the quantum arm."""
    frac = TAP_FRACTION if tap_enabled else 0.0
    classical = dataclasses.replace(pulse, mu=pulse.mu * frac)
    quantum = dataclasses.replace(pulse, mu=pulse.mu - classical.mu)
    return classical, quantum


def quantum_arm_factor(tap_enabled: bool) -> float:
    return 1.0 - TAP_FRACTION if tap_enabled else 1.0
