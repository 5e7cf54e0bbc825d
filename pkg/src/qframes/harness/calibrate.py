"""Fit dark-click probability and per-state preparation error to QBER targets."""
from __future__ import annotations

import dataclasses

from scipy.optimize import bisect

from ..alice import Intensity
from ..channel import quantum_arm_factor, transmittance
from ..decoy import analytic_qber_oracle, dark_pair_click, effective_optical_error
from ..polmath import StateLabel
from ..session import SessionConfig

XTOL = 1e-15
E_MAX = 0.5


class CalibrationError(ValueError):
    def __init__(self, message: str, bound: float | None = None):
        super().__init__(message)
        self.bound = bound


def oracle_qber(cfg: SessionConfig, mu: float, e_prep: float, p_dark: float | None = None) -> float:
    b = cfg.bob
    T = transmittance(cfg.channel) * quantum_arm_factor(b.tap_enabled)
    p_dark = b.p_dark if p_dark is None else p_dark
    return analytic_qber_oracle(mu, T, b.eta, p_dark, effective_optical_error(e_prep, b.residual_error)).qber


def fit_p_dark(vacuum_click_fraction: float) -> float:
    """Per-detector dark probability whose detector pair clicks with the given fraction."""
    f = vacuum_click_fraction
    if not 0 <= f < 1:
        raise CalibrationError(f"vacuum click fraction {f} outside [0, 1)", bound=None)
    if f == 0:
        return 0.0
    return bisect(lambda p: dark_pair_click(p) - f, 0.0, 1.0, xtol=XTOL)


def fit_e_prep(cfg: SessionConfig, target: float, mu: float | None = None) -> float:
    """Preparation error reproducing ``target`` QBER at ``mu`` under the oracle."""
    mu = cfg.alice.mu_signal if mu is None else mu
    floor = oracle_qber(cfg, mu, 0.0)
    ceiling = oracle_qber(cfg, mu, E_MAX)
    if target < floor - XTOL:
        raise CalibrationError(f"target QBER {target:.4%} is below the achievable floor {floor:.4%}", bound=floor)
    if target > ceiling + XTOL:
        raise CalibrationError(f"target QBER {target:.4%} is above the achievable ceiling {ceiling:.4%}", bound=ceiling)
    if target <= floor:
        return 0.0
    return bisect(lambda e: oracle_qber(cfg, mu, e) - target, 0.0, E_MAX, xtol=XTOL)


def calibrate(cfg: SessionConfig, targets: dict) -> tuple[SessionConfig, dict]:
    """Return the fitted session config and a report of predicted vs target values.

    ``targets`` holds ``vacuum_click_fraction`` and ``signal`` (state name to
    QBER at the signal intensity); an optional ``decoy`` map is only reported.
    """
    if "vacuum_click_fraction" not in targets or "signal" not in targets:
        raise CalibrationError("targets need 'vacuum_click_fraction' and 'signal'")
    signal = targets["signal"]
    missing = [s.name for s in StateLabel if s.name not in signal]
    if missing:
        raise CalibrationError(f"signal targets missing for states {missing}")

    p_dark = fit_p_dark(float(targets["vacuum_click_fraction"]))
    cfg = dataclasses.replace(cfg, bob=dataclasses.replace(cfg.bob, p_dark=p_dark))
    errors = {}
    e_prep = {}
    for s in StateLabel:
        try:
            e_prep[s.name] = fit_e_prep(cfg, float(signal[s.name]))
        except CalibrationError as exc:
            errors[s.name] = exc
    if errors:
        detail = "; ".join(f"{k}: {v}" for k, v in errors.items())
        bound = next(iter(errors.values())).bound
        raise CalibrationError(f"unattainable targets ({detail})", bound=bound)

    cfg = dataclasses.replace(cfg, alice=dataclasses.replace(cfg.alice, per_state_e_prep=e_prep))
    return cfg, calibration_report(cfg, targets)


def calibration_report(cfg: SessionConfig, targets: dict) -> dict:
    """Oracle predictions for every (state, intensity) cell next to the targets, plus an error budget."""
    a, b = cfg.alice, cfg.bob
    T = transmittance(cfg.channel) * quantum_arm_factor(b.tap_enabled)
    cells = []
    for s in StateLabel:
        e = a.e_prep_for(s)
        for intensity, mu in ((Intensity.SIGNAL, a.mu_signal), (Intensity.DECOY, a.mu_decoy)):
            key = "signal" if intensity is Intensity.SIGNAL else "decoy"
            cells.append({
                "state": s.name,
                "intensity": key,
                "mu": mu,
                "predicted_qber": oracle_qber(cfg, mu, e),
                "target_qber": (targets.get(key) or {}).get(s.name),
            })

    # budget at the signal intensity, averaged over states
    mean_e = sum(a.e_prep_for(s) for s in StateLabel) / 4
    pred = analytic_qber_oracle(a.mu_signal, T, b.eta, b.p_dark, effective_optical_error(mean_e, b.residual_error))
    signal_part = pred.gain - dark_pair_click(b.p_dark)
    budget = {
        "detector_noise": 0.5 * dark_pair_click(b.p_dark) / pred.gain,
        "compensation": b.residual_error * (1 - 2 * mean_e) * signal_part / pred.gain,
        "preparation": mean_e * signal_part / pred.gain,
        "total": pred.qber,
    }
    return {
        "p_dark": b.p_dark,
        "per_state_e_prep": dict(a.per_state_e_prep or {}),
        "vacuum_click_fraction": dark_pair_click(b.p_dark),
        "target_vacuum_click_fraction": targets.get("vacuum_click_fraction"),
        "cells": cells,
        "signal_budget": budget,
    }
