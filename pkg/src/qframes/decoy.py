"""Vacuum + weak decoy bounds and the closed-form detection oracle."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

EC_EFFICIENCY = 1.16
SIFT_FACTOR = 0.5
VACUUM_ERROR = 0.5


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


@dataclass(frozen=True)
class DecoyEstimate:
    Q_mu: float
    E_mu: float
    Q_nu: float
    E_nu: float
    Y0: float
    Y1_lower: float
    e1_upper: float | None  # None when Y1_lower is 0
    Q1_lower: float
    rate_lower: float
    degenerate: bool = False  # Y1 bound went negative and was clamped

    def to_dict(self) -> dict:
        return asdict(self)


def decoy_bounds(
    Q_mu: float,
    E_mu: float,
    Q_nu: float,
    E_nu: float,
    Y0: float,
    mu: float,
    nu: float,
    f: float = EC_EFFICIENCY,
) -> DecoyEstimate:
    """Lower-bound the single-photon yield and upper-bound its error rate.

    ``mu`` is the signal and ``nu`` the weak decoy intensity; ``Y0`` comes
    from the vacuum decoy. The returned ``rate_lower`` is the asymptotic
    secret-key fraction per pulse and may be negative.
    """
    if not 0 < nu < mu:
        raise ValueError(f"need 0 < nu < mu, got nu={nu}, mu={mu}")
    if Y0 < 0:
        raise ValueError("Y0 must be >= 0")

    y1 = (mu / (mu * nu - nu**2)) * (
        Q_nu * math.exp(nu) - Q_mu * math.exp(mu) * nu**2 / mu**2 - (mu**2 - nu**2) / mu**2 * Y0
    )
    degenerate = y1 < 0
    y1 = min(max(y1, 0.0), 1.0)
    q1 = y1 * mu * math.exp(-mu)

    if y1 > 0:
        e1 = (E_nu * Q_nu * math.exp(nu) - VACUUM_ERROR * Y0) / (y1 * nu)
        e1 = min(max(e1, 0.0), 0.5)
        secret = q1 * (1 - binary_entropy(e1))
    else:
        e1 = None
        secret = 0.0
    rate = SIFT_FACTOR * (-Q_mu * f * binary_entropy(E_mu) + secret)
    return DecoyEstimate(Q_mu, E_mu, Q_nu, E_nu, Y0, y1, e1, q1, rate, degenerate)


@dataclass(frozen=True)
class OraclePrediction:
    gain: float
    qber: float


def dark_pair_click(p_dark: float) -> float:
    """Probability that at least one of two gated detectors dark-clicks."""
    return 1.0 - (1.0 - p_dark) ** 2


def analytic_qber_oracle(mu: float, T: float, eta: float, p_dark: float, e_opt: float) -> OraclePrediction:
    """Per-arm gain and QBER for a Poisson source behind one analyzer arm.

    ``mu`` is the mean photon number leaving Alice; half of it reaches each
    arm after the 50/50 splitter.
    """
    y0 = dark_pair_click(p_dark)
    signal = -math.expm1(-mu * T * 0.5 * eta)
    gain = y0 + signal
    qber = (0.5 * y0 + e_opt * signal) / gain if gain > 0 else float("nan")
    return OraclePrediction(gain, qber)


def effective_optical_error(e_prep: float, residual: float) -> float:
    """Wrong-port probability when a preparation flaw and a compensator tilt combine."""
    return e_prep * (1 - residual) + (1 - e_prep) * residual

