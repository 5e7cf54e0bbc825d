# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-slot kernels.

Every function here has a twin in ``_pykernels`` that consumes the random
stream in exactly the same order and performs the same comparisons, so both
backends produce identical arrays for the same generator state.
"""
import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport cos, sin, sqrt
from numpy.random cimport bitgen_t

cnp.import_array()

BACKEND = "cython"

cdef enum:
    REUNITARIZE_EVERY = 1000


cdef inline bitgen_t* _bitgen(object bit_generator) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")


def prepare_slots(rng, Py_ssize_t n, double c_signal, double c_decoy, const double[::1] e_prep):
    """Draw (state, intensity, flawed) for ``n`` quantum slots.

    Four uniforms per slot, in order: bit, basis, intensity, flaw.
    """
    state_arr = np.empty(n, dtype=np.int8)
    intensity_arr = np.empty(n, dtype=np.int8)
    flawed_arr = np.empty(n, dtype=np.uint8)
    cdef cnp.int8_t[::1] state = state_arr
    cdef cnp.int8_t[::1] intensity = intensity_arr
    cdef cnp.uint8_t[::1] flawed = flawed_arr
    cdef Py_ssize_t i
    cdef double u_bit, u_basis, u_int, u_flaw
    cdef int s
    bit_generator = rng.bit_generator
    cdef bitgen_t* bg = _bitgen(bit_generator)
    with bit_generator.lock, nogil:
        for i in range(n):
            u_bit = bg.next_double(bg.state)
            u_basis = bg.next_double(bg.state)
            u_int = bg.next_double(bg.state)
            u_flaw = bg.next_double(bg.state)
            s = 2 * (u_basis >= 0.5) + (u_bit >= 0.5)
            state[i] = s
            intensity[i] = (u_int >= c_signal) + (u_int >= c_decoy)
            flawed[i] = u_flaw < e_prep[s]
    return state_arr, intensity_arr, flawed_arr


def detect_slots(rng, const cnp.int16_t[::1] rows, const double[:, ::1] ptab):
    """Sample the four detectors and resolve each slot.

    Six uniforms per slot: one per detector (H, V, R, L), then the basis
    tie-break and the double-click bit.
    """
    cdef Py_ssize_t n = rows.shape[0]
    clicks_arr = np.empty(n, dtype=np.uint8)
    bit_arr = np.empty(n, dtype=np.int8)
    basis_arr = np.empty(n, dtype=np.int8)
    squashed_arr = np.empty(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] clicks = clicks_arr
    cdef cnp.int8_t[::1] bit = bit_arr
    cdef cnp.int8_t[::1] basis = basis_arr
    cdef cnp.uint8_t[::1] squashed = squashed_arr
    cdef Py_ssize_t i
    cdef int r, m, arm, pair
    cdef double u0, u1, u2, u3, u_arm, u_bit
    bit_generator = rng.bit_generator
    cdef bitgen_t* bg = _bitgen(bit_generator)
    with bit_generator.lock, nogil:
        for i in range(n):
            r = rows[i]
            u0 = bg.next_double(bg.state)
            u1 = bg.next_double(bg.state)
            u2 = bg.next_double(bg.state)
            u3 = bg.next_double(bg.state)
            u_arm = bg.next_double(bg.state)
            u_bit = bg.next_double(bg.state)
            m = ((u0 < ptab[r, 0])
                 | ((u1 < ptab[r, 1]) << 1)
                 | ((u2 < ptab[r, 2]) << 2)
                 | ((u3 < ptab[r, 3]) << 3))
            clicks[i] = m
            squashed[i] = 0
            if m == 0:
                bit[i] = -1
                basis[i] = -1
                continue
            if (m & 3) and (m & 12):
                arm = 0 if u_arm < 0.5 else 1
            elif m & 3:
                arm = 0
            else:
                arm = 1
            pair = (m >> (2 * arm)) & 3
            if pair == 3:
                bit[i] = 0 if u_bit < 0.5 else 1
                squashed[i] = 1
            else:
                bit[i] = 0 if pair == 1 else 1
            basis[i] = arm
    return clicks_arr, bit_arr, basis_arr, squashed_arr


cdef inline void _reunitarize(double* re, double* im) noexcept nogil:
    # layout: m00, m01, m10, m11
    cdef double n0 = sqrt(re[0] * re[0] + im[0] * im[0] + re[2] * re[2] + im[2] * im[2])
    re[0] = re[0] / n0
    im[0] = im[0] / n0
    re[2] = re[2] / n0
    im[2] = im[2] / n0
    # <col0|col1>
    cdef double pr = (re[0] * re[1] + im[0] * im[1]) + (re[2] * re[3] + im[2] * im[3])
    cdef double pi = (re[0] * im[1] - im[0] * re[1]) + (re[2] * im[3] - im[2] * re[3])
    re[1] = re[1] - (pr * re[0] - pi * im[0])
    im[1] = im[1] - (pr * im[0] + pi * re[0])
    re[3] = re[3] - (pr * re[2] - pi * im[2])
    im[3] = im[3] - (pr * im[2] + pi * re[2])
    cdef double n1 = sqrt(re[1] * re[1] + im[1] * im[1] + re[3] * re[3] + im[3] * im[3])
    re[1] = re[1] / n1
    im[1] = im[1] / n1
    re[3] = re[3] / n1
    im[3] = im[3] / n1


def drift_walk(m, const double[:, ::1] normals, double sigma, long long clock0):
    """Left-multiply ``m`` by one small random rotation per row of ``normals``."""
    cdef double re[4]
    cdef double im[4]
    cdef Py_ssize_t k, j
    cdef Py_ssize_t n = normals.shape[0]
    cdef double nx, ny, nz, norm, theta, c, s, a_re, a_im, b_re, b_im, c_re, c_im, d_re, d_im
    cdef double t_re[4]
    cdef double t_im[4]
    flat = np.ascontiguousarray(m, dtype=np.complex128).reshape(4)
    for j in range(4):
        re[j] = flat[j].real
        im[j] = flat[j].imag
    with nogil:
        for k in range(n):
            nx = normals[k, 0]
            ny = normals[k, 1]
            nz = normals[k, 2]
            norm = sqrt(nx * nx + ny * ny + nz * nz)
            if norm == 0.0:
                nx = 0.0
                ny = 0.0
                nz = 1.0
            else:
                nx = nx / norm
                ny = ny / norm
                nz = nz / norm
            theta = sigma * normals[k, 3]
            c = cos(theta)
            s = sin(theta)
            # R = [[c - i s nz, -s ny - i s nx], [s ny - i s nx, c + i s nz]]
            a_re = c
            a_im = -s * nz
            b_re = -s * ny
            b_im = -s * nx
            c_re = s * ny
            c_im = -s * nx
            d_re = c
            d_im = s * nz
            t_re[0] = (a_re * re[0] - a_im * im[0]) + (b_re * re[2] - b_im * im[2])
            t_im[0] = (a_re * im[0] + a_im * re[0]) + (b_re * im[2] + b_im * re[2])
            t_re[1] = (a_re * re[1] - a_im * im[1]) + (b_re * re[3] - b_im * im[3])
            t_im[1] = (a_re * im[1] + a_im * re[1]) + (b_re * im[3] + b_im * re[3])
            t_re[2] = (c_re * re[0] - c_im * im[0]) + (d_re * re[2] - d_im * im[2])
            t_im[2] = (c_re * im[0] + c_im * re[0]) + (d_re * im[2] + d_im * re[2])
            t_re[3] = (c_re * re[1] - c_im * im[1]) + (d_re * re[3] - d_im * im[3])
            t_im[3] = (c_re * im[1] + c_im * re[1]) + (d_re * im[3] + d_im * re[3])
            for j in range(4):
                re[j] = t_re[j]
                im[j] = t_im[j]
            if (clock0 + k + 1) % REUNITARIZE_EVERY == 0:
                _reunitarize(re, im)
    out = np.empty(4, dtype=np.complex128)
    for j in range(4):
        out[j] = complex(re[j], im[j])
    return out.reshape(2, 2)
