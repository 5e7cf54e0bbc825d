"""Pooling of repeated runs and rendering of the QBER grid."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import __version__, _kernels
from ..alice import AliceParams, Intensity
from ..decoy import DecoyEstimate
from ..polmath import StateLabel
from ..session import (
    ClickFractionRecord,
    QberRecord,
    SessionResult,
    SlotTally,
    estimate_decoy,
    pooled_qber,
    qber_table,
)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config_dict: dict) -> str:
    return hashlib.sha256(canonical_json(config_dict).encode()).hexdigest()


@dataclass
class Pooled:
    """Counts summed over repetitions; rates are recomputed from the sums."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((3, 4, 2), dtype=np.int64))
    tally: SlotTally = field(default_factory=SlotTally)

    def add(self, result: SessionResult) -> None:
        self.counts = self.counts + result.counts
        self.tally = self.tally.merge(result.tally)

    @property
    def records(self) -> list[QberRecord]:
        return qber_table(self.counts)

    def record(self, state: StateLabel, intensity: Intensity) -> QberRecord:
        return QberRecord.from_counts(state.name, intensity.name.lower(), *self.counts[intensity, state])

    def average(self, intensity: Intensity) -> QberRecord:
        return pooled_qber(self.counts, intensity)

    @property
    def vacuum(self) -> ClickFractionRecord:
        return ClickFractionRecord.from_counts(self.tally.vacuum_arm_gates, self.tally.vacuum_arm_clicks)

    def decoy(self, alice: AliceParams) -> DecoyEstimate | None:
        return estimate_decoy(self.counts, self.tally, alice)


def _pct(x: float | None, width: int = 7, digits: int = 2) -> str:
    return " " * (width - 1) + "-" if x is None else f"{100 * x:{width}.{digits}f}"


def render_table(pooled: Pooled, alice: AliceParams) -> str:
    """QBER grid: states across, signal and decoy intensity under each."""
    states = list(StateLabel)
    intensities = (Intensity.SIGNAL, Intensity.DECOY)
    mus = (alice.mu_signal, alice.mu_decoy)
    lines = ["QBER (%) by qubit state and mean photon number", ""]
    lines.append(f"{'qubit':<14}" + "".join(f"{s.name:^16}" for s in states))
    lines.append(f"{'photon number':<14}" + "".join(f"{mu:>8g}" for _ in states for mu in mus))
    rows = {"QBER": [], "+/-": [], "sifted": []}
    for s in states:
        for i in intensities:
            r = pooled.record(s, i)
            rows["QBER"].append(_pct(r.qber, 8))
            rows["+/-"].append(_pct(r.stat_error, 8, 3))
            rows["sifted"].append(f"{r.n_sifted:>8d}")
    for name, cells in rows.items():
        lines.append(f"{name:<14}" + "".join(cells))
    lines.append("")
    for i, mu in zip(intensities, mus):
        r = pooled.average(i)
        lines.append(f"average QBER, mu={mu:g}: {_pct(r.qber, 0)} +/- {_pct(r.stat_error, 0, 3)} %  ({r.n_sifted} sifted bits)")
    v = pooled.vacuum
    lines.append(f"vacuum (mu=0) click fraction per detector pair: {_pct(v.click_fraction, 0, 3)} +/- {_pct(v.stat_error, 0, 4)} %")
    d = pooled.decoy(alice)
    if d is not None:
        e1 = "undefined" if d.e1_upper is None else f"{d.e1_upper:.4f}"
        lines.append(
            f"decoy analysis: Y0={d.Y0:.3e}  Y1>={d.Y1_lower:.4f}  e1<={e1}  "
            f"Q1>={d.Q1_lower:.3e}  key rate>={d.rate_lower:.3e} per pulse"
            + ("  [degenerate]" if d.degenerate else "")
        )
    return "\n".join(lines) + "\n"


def report_bundle(pooled: Pooled, config_dict: dict, alice: AliceParams, runs: list[SessionResult], seed: int, timestamp: str) -> dict:
    d = pooled.decoy(alice)
    return {
        "qber_table": {
            "states": [s.name for s in StateLabel],
            "mu": {"signal": alice.mu_signal, "decoy": alice.mu_decoy},
            "cells": [asdict(r) for r in pooled.records],
            "averages": [asdict(pooled.average(i)) for i in (Intensity.SIGNAL, Intensity.DECOY)],
            "vacuum": asdict(pooled.vacuum),
        },
        "decoy_summary": None if d is None else d.to_dict(),
        "stabilization_log": [r.stabilization_log for r in runs],
        "config": config_dict,
        "provenance": {
            "config_hash": config_hash(config_dict),
            "seed": seed,
            "code_version": __version__,
            "kernel_backend": _kernels.BACKEND,
            "timestamp": timestamp,
        },
    }
