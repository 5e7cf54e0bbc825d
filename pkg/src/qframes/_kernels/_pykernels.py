"""Pure numpy/Python twins of the compiled kernels.

Random numbers are pulled from the generator in the same order as the
compiled code (slot-major), so outputs are bit-identical across backends.
"""
from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

REUNITARIZE_EVERY = 1000


def prepare_slots(rng: np.random.Generator, n: int, c_signal: float, c_decoy: float, e_prep: np.ndarray):
    u = rng.random((n, 4))
    state = (2 * (u[:, 1] >= 0.5) + (u[:, 0] >= 0.5)).astype(np.int8)
    intensity = ((u[:, 2] >= c_signal).astype(np.int8) + (u[:, 2] >= c_decoy)).astype(np.int8)
    flawed = (u[:, 3] < np.asarray(e_prep)[state]).astype(np.uint8)
    return state, intensity, flawed


def detect_slots(rng: np.random.Generator, rows: np.ndarray, ptab: np.ndarray):
    n = rows.shape[0]
    u = rng.random((n, 6))
    p = ptab[rows]
    hit = u[:, :4] < p
    clicks = (hit[:, 0] | (hit[:, 1] << 1) | (hit[:, 2] << 2) | (hit[:, 3] << 3)).astype(np.uint8)

    z = (clicks & 3) != 0
    x = (clicks & 12) != 0
    arm = np.where(z & x, (u[:, 4] >= 0.5).astype(np.int8), np.where(z, 0, 1).astype(np.int8))
    pair = (clicks >> (2 * arm).astype(np.uint8)) & 3
    squashed = pair == 3
    bit = np.where(squashed, (u[:, 5] >= 0.5).astype(np.int8), (pair == 2).astype(np.int8))

    none = clicks == 0
    bit = np.where(none, -1, bit).astype(np.int8)
    basis = np.where(none, -1, arm).astype(np.int8)
    squashed = (squashed & ~none).astype(np.uint8)
    return clicks, bit, basis, squashed


def _reunitarize(re: list[float], im: list[float]) -> None:
    n0 = math.sqrt(re[0] * re[0] + im[0] * im[0] + re[2] * re[2] + im[2] * im[2])
    re[0] = re[0] / n0
    im[0] = im[0] / n0
    re[2] = re[2] / n0
    im[2] = im[2] / n0
    pr = (re[0] * re[1] + im[0] * im[1]) + (re[2] * re[3] + im[2] * im[3])
    pi = (re[0] * im[1] - im[0] * re[1]) + (re[2] * im[3] - im[2] * re[3])
    re[1] = re[1] - (pr * re[0] - pi * im[0])
    im[1] = im[1] - (pr * im[0] + pi * re[0])
    re[3] = re[3] - (pr * re[2] - pi * im[2])
    im[3] = im[3] - (pr * im[2] + pi * re[2])
    n1 = math.sqrt(re[1] * re[1] + im[1] * im[1] + re[3] * re[3] + im[3] * im[3])
    re[1] = re[1] / n1
    im[1] = im[1] / n1
    re[3] = re[3] / n1
    im[3] = im[3] / n1


def drift_walk(m: np.ndarray, normals: np.ndarray, sigma: float, clock0: int) -> np.ndarray:
    flat = np.asarray(m, dtype=np.complex128).reshape(4)
    re = [float(z.real) for z in flat]
    im = [float(z.imag) for z in flat]
    for k, (nx, ny, nz, g) in enumerate(normals.tolist()):
        norm = math.sqrt(nx * nx + ny * ny + nz * nz)
        if norm == 0.0:
            nx, ny, nz = 0.0, 0.0, 1.0
        else:
            nx, ny, nz = nx / norm, ny / norm, nz / norm
        theta = sigma * g
        c = math.cos(theta)
        s = math.sin(theta)
        a_re, a_im = c, -s * nz
        b_re, b_im = -s * ny, -s * nx
        c_re, c_im = s * ny, -s * nx
        d_re, d_im = c, s * nz
        t_re = [
            (a_re * re[0] - a_im * im[0]) + (b_re * re[2] - b_im * im[2]),
            (a_re * re[1] - a_im * im[1]) + (b_re * re[3] - b_im * im[3]),
            (c_re * re[0] - c_im * im[0]) + (d_re * re[2] - d_im * im[2]),
            (c_re * re[1] - c_im * im[1]) + (d_re * re[3] - d_im * im[3]),
        ]
        t_im = [
            (a_re * im[0] + a_im * re[0]) + (b_re * im[2] + b_im * re[2]),
            (a_re * im[1] + a_im * re[1]) + (b_re * im[3] + b_im * re[3]),
            (c_re * im[0] + c_im * re[0]) + (d_re * im[2] + d_im * re[2]),
            (c_re * im[1] + c_im * re[1]) + (d_re * im[3] + d_im * re[3]),
        ]
        re, im = t_re, t_im
        if (clock0 + k + 1) % REUNITARIZE_EVERY == 0:
            _reunitarize(re, im)
    return np.array([complex(r, i) for r, i in zip(re, im)], dtype=np.complex128).reshape(2, 2)
