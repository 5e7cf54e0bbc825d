"""Jones-calculus primitives: polarization states, unitaries and projections.

Global phase is never observable here. Two states are "equal" when
``abs(<a|b>) == 1``; compare with :func:`same_state`, not componentwise.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-9
SQRT_HALF = 1.0 / np.sqrt(2.0)

# Pauli matrices, used for drift rotations
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)


class Basis(enum.IntEnum):
    Z = 0  # rectilinear, H/V
    X = 1  # circular, R/L


class StateLabel(enum.IntEnum):
    """The four BB84 states. ``int(label) == 2 * basis + bit``."""

    H = 0
    V = 1
    R = 2
    L = 3

    @property
    def basis(self) -> Basis:
        return Basis(self.value // 2)

    @property
    def bit(self) -> int:
        return self.value % 2

    @classmethod
    def from_basis_bit(cls, basis: Basis | int, bit: int) -> "StateLabel":
        return cls(2 * int(basis) + int(bit))


@dataclass(frozen=True)
class JonesVector:
    """Normalized pure polarization state ``c_h|H> + c_v|V>``.

    The constructor accepts amplitudes that are normalized to within
    ``NORM_TOL`` and renormalizes them exactly; use :meth:`normalized` for
    arbitrary input.
    """

    c_h: complex
    c_v: complex

    def __post_init__(self):
        n2 = abs(self.c_h) ** 2 + abs(self.c_v) ** 2
        if not np.isfinite(n2) or abs(n2 - 1.0) > NORM_TOL:
            raise ValueError(f"Jones vector not normalized (|c|^2 = {n2!r})")
        n = np.sqrt(n2)
        object.__setattr__(self, "c_h", complex(self.c_h) / n)
        object.__setattr__(self, "c_v", complex(self.c_v) / n)

    @classmethod
    def normalized(cls, c_h: complex, c_v: complex) -> "JonesVector":
        n = np.sqrt(abs(c_h) ** 2 + abs(c_v) ** 2)
        if n == 0 or not np.isfinite(n):
            raise ValueError("cannot normalize a zero Jones vector")
        return cls(complex(c_h) / n, complex(c_v) / n)

    @classmethod
    def from_array(cls, a) -> "JonesVector":
        a = np.asarray(a, dtype=np.complex128).reshape(2)
        return cls.normalized(a[0], a[1])

    def as_array(self) -> np.ndarray:
        return np.array([self.c_h, self.c_v], dtype=np.complex128)


class PolUnitary:
    """2x2 unitary acting on Jones vectors (channel or compensator).

    Input matrices must be unitary to within ``NORM_TOL``; they are then
    projected onto the nearest unitary so that ``U^dagger U = I`` holds to
    machine precision.
    """

    __slots__ = ("_m",)

    def __init__(self, m):
        m = np.array(m, dtype=np.complex128)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        err = np.abs(m.conj().T @ m - np.eye(2)).max()
        if not np.isfinite(err) or err > NORM_TOL:
            raise ValueError(f"matrix is not unitary (max |U^dag U - I| = {err:.3g})")
        w, _, vh = np.linalg.svd(m)
        m = w @ vh
        m.setflags(write=False)
        self._m = m

    @classmethod
    def _trusted(cls, m: np.ndarray) -> "PolUnitary":
        # skips validation; callers guarantee unitarity
        obj = cls.__new__(cls)
        m = np.array(m, dtype=np.complex128)
        m.setflags(write=False)
        obj._m = m
        return obj

    @classmethod
    def identity(cls) -> "PolUnitary":
        return cls._trusted(np.eye(2))

    @property
    def m(self) -> np.ndarray:
        return self._m

    @property
    def dagger(self) -> "PolUnitary":
        return PolUnitary._trusted(self._m.conj().T)

    def __matmul__(self, other):
        if isinstance(other, PolUnitary):
            return PolUnitary._trusted(self._m @ other._m)
        if isinstance(other, JonesVector):
            return apply(self, other)
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, PolUnitary):
            return NotImplemented
        return bool(np.array_equal(self._m, other._m))

    def __hash__(self):
        return hash(self._m.tobytes())

    def __repr__(self):
        return f"PolUnitary({self._m.tolist()!r})"


_JONES = {
    StateLabel.H: (1.0, 0.0),
    StateLabel.V: (0.0, 1.0),
    StateLabel.R: (SQRT_HALF, -1j * SQRT_HALF),
    StateLabel.L: (SQRT_HALF, 1j * SQRT_HALF),
}


def jones_of(label: StateLabel) -> JonesVector:
    """Jones vector of a protocol state; circular convention R = (1, -i)/sqrt(2)."""
    return JonesVector(*_JONES[StateLabel(label)])


def _as_vector(v) -> np.ndarray:
    if isinstance(v, JonesVector):
        return v.as_array()
    a = np.asarray(v, dtype=np.complex128).reshape(2)
    n2 = float(np.vdot(a, a).real)
    if abs(n2 - 1.0) > NORM_TOL:
        raise ValueError(f"Jones vector not normalized (|c|^2 = {n2!r})")
    return a


def detection_prob(state, analyzer) -> float:
    """Projection probability ``|<analyzer|state>|^2``."""
    amp = np.vdot(_as_vector(analyzer), _as_vector(state))
    p = float(amp.real**2 + amp.imag**2)
    return min(max(p, 0.0), 1.0)


def overlap(a, b) -> float:
    """``|<a|b>|``, the phase-free similarity of two states."""
    return abs(np.vdot(_as_vector(a), _as_vector(b)))


def same_state(a, b, tol: float = 1e-12) -> bool:
    return abs(overlap(a, b) - 1.0) <= tol


def apply(u: PolUnitary, state: JonesVector) -> JonesVector:
    out = u.m @ state.as_array()
    return JonesVector.normalized(out[0], out[1])


def random_unitary(rng: np.random.Generator) -> PolUnitary:
    """Haar-distributed element of U(2) (QR of a complex Ginibre matrix)."""
    z = (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return PolUnitary(q * (d / np.abs(d)))


def rotation(axis, angle: float) -> np.ndarray:
    """``exp(-i angle n.sigma)`` for a unit 3-vector ``axis``."""
    nx, ny, nz = axis
    c, s = np.cos(angle), np.sin(angle)
    return np.array(
        [[c - 1j * s * nz, -s * ny - 1j * s * nx], [s * ny - 1j * s * nx, c + 1j * s * nz]],
        dtype=np.complex128,
    )


def drift_step(u: PolUnitary, sigma: float, rng: np.random.Generator) -> PolUnitary:
    """One birefringence drift step: ``R @ u`` with a small isotropic rotation.

    The axis is uniform on the sphere and the angle is Normal(0, sigma).
    Draws four standard normals (axis xyz, angle) per call.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return u
    g = rng.standard_normal(4)
    axis = g[:3] / np.linalg.norm(g[:3])
    return PolUnitary._trusted(rotation(axis, sigma * g[3]) @ u.m)


# basis-change matrices taking the anchor state to |H> (and its partner to |V>)
_TO_H = {
    StateLabel.H: np.eye(2, dtype=np.complex128),
    StateLabel.R: np.array([[SQRT_HALF, 1j * SQRT_HALF], [SQRT_HALF, -1j * SQRT_HALF]]),
}


def compensator_for(u: PolUnitary, anchor: StateLabel) -> PolUnitary:
    """Analytic compensator ``S = B @ u^dagger`` so that ``S u |anchor> = |H>``."""
    anchor = StateLabel(anchor)
    if anchor not in _TO_H:
        raise ValueError(f"anchor must be H or R, got {anchor.name}")
    return PolUnitary._trusted(_TO_H[anchor] @ u.m.conj().T)
