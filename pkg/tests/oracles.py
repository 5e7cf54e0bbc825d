"""Independent reference computations used to freeze expected values.

Nothing here imports the package under test.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import expm
from scipy.stats import poisson

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

# H, V, R, L with R = (1, -i)/sqrt2
JONES = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "R": np.array([1, -1j]) / math.sqrt(2),
    "L": np.array([1, 1j]) / math.sqrt(2),
}


def rotation_expm(axis, angle):
    n = np.asarray(axis, float) / np.linalg.norm(axis)
    return expm(-1j * angle * sum(c * p for c, p in zip(n, PAULI)))


def crc32_bitwise(data: bytes) -> int:
    """Reflected CRC-32 (poly 0xEDB88320), one bit at a time."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def poisson_channel(mu: float, t_eta: float, e_det: float = 0.0, y0: float = 0.0, n_max: int = 50):
    """Gain and QBER of a loss-only channel by summing photon-number terms.

    A dark click only matters when no photon is detected; it then errs half the time.
    """
    n = np.arange(n_max + 1)
    p = poisson.pmf(n, mu)
    eta_n = 1 - (1 - t_eta) ** n
    y = y0 + eta_n - y0 * eta_n
    ey = 0.5 * y0 * (1 - eta_n) + e_det * eta_n
    gain = float(np.sum(p * y))
    err = float(np.sum(p * ey))
    return gain, err / gain


def single_photon_truth(t_eta: float, e_det: float = 0.0, y0: float = 0.0):
    y1 = y0 + t_eta - y0 * t_eta
    e1 = (0.5 * y0 * (1 - t_eta) + e_det * t_eta) / y1
    return y1, e1


def arm_oracle(mu: float, t: float, eta: float, p_dark: float, e_opt: float):
    """Closed form for one analyzer arm: (gain, qber)."""
    y0 = 1 - (1 - p_dark) ** 2
    s = 1 - math.exp(-mu * t * 0.5 * eta)
    g = y0 + s
    return g, (0.5 * y0 + e_opt * s) / g


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)


def sift_fraction(x: float) -> float:
    """Noiseless probability a pulse survives sifting, ``x = mu T eta``.

    Each arm receives half the light; the matched arm clicks with
    ``a = 1 - exp(-x/2)``, the other arm too, and a two-arm event keeps the
    right basis half the time: ``a (1 - a) + a^2 / 2``.
    """
    a = 1 - math.exp(-x / 2)
    return a * (1 - a) + a * a / 2
