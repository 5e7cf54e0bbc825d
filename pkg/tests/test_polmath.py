import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import kstest

from oracles import JONES, rotation_expm
from qframes.polmath import (
    Basis,
    JonesVector,
    PolUnitary,
    StateLabel,
    apply,
    compensator_for,
    detection_prob,
    drift_step,
    jones_of,
    overlap,
    random_unitary,
    rotation,
    same_state,
)

angles = st.floats(-10, 10, allow_nan=False)
unit = st.floats(-1, 1, allow_nan=False)


def test_label_encoding():
    for s in StateLabel:
        assert StateLabel.from_basis_bit(s.basis, s.bit) is s
    assert StateLabel.R.basis is Basis.X and StateLabel.L.bit == 1


@pytest.mark.parametrize("name", "HVRL")
def test_jones_matches_reference(name):
    assert np.allclose(jones_of(StateLabel[name]).as_array(), JONES[name], atol=1e-15)


def test_bb84_overlaps():
    for a in StateLabel:
        for b in StateLabel:
            expect = 1.0 if a == b else (0.0 if a.basis == b.basis else 0.5)
            assert detection_prob(jones_of(a), jones_of(b)) == pytest.approx(expect, abs=1e-15)


def test_jones_rejects_unnormalized():
    with pytest.raises(ValueError):
        JonesVector(1.0, 1.0)
    with pytest.raises(ValueError):
        JonesVector.normalized(0, 0)
    with pytest.raises(ValueError):
        detection_prob(np.array([1.0, 1.0]), jones_of(StateLabel.H))
    assert JonesVector.normalized(3, 4j).c_v == pytest.approx(0.8j)


def test_polunitary_validation():
    with pytest.raises(ValueError):
        PolUnitary(np.eye(3))
    with pytest.raises(ValueError):
        PolUnitary([[1, 1], [0, 1]])
    u = PolUnitary(np.eye(2) * (1 + 1e-11))
    assert np.abs(u.m.conj().T @ u.m - np.eye(2)).max() < 1e-15


def test_global_phase_is_same_state():
    h = jones_of(StateLabel.H)
    assert same_state(h, JonesVector(1j, 0))
    assert not same_state(h, jones_of(StateLabel.R))
    assert overlap(h, jones_of(StateLabel.L)) == pytest.approx(math.sqrt(0.5))


@given(unit, unit, unit, angles)
def test_rotation_matches_expm(x, y, z, a):
    n = np.array([x, y, z])
    if np.linalg.norm(n) < 1e-3:
        return
    n = n / np.linalg.norm(n)
    assert np.allclose(rotation(n, a), rotation_expm(n, a), atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_random_unitary_is_unitary_and_preserves_norm(seed):
    r = np.random.default_rng(seed)
    u = random_unitary(r)
    assert np.abs(u.m.conj().T @ u.m - np.eye(2)).max() < 1e-12
    v = apply(u, jones_of(StateLabel.R)).as_array()
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-14)


@given(st.integers(0, 2**32 - 1), st.sampled_from([StateLabel.H, StateLabel.R]))
def test_compensator_inverts_to_anchor(seed, anchor):
    u = random_unitary(np.random.default_rng(seed))
    s = compensator_for(u, anchor)
    out = apply(s @ u, jones_of(anchor))
    assert detection_prob(out, jones_of(StateLabel.H)) >= 1 - 1e-12
    # the partner state must land on V
    partner = StateLabel.from_basis_bit(anchor.basis, 1)
    assert detection_prob(apply(s @ u, jones_of(partner)), jones_of(StateLabel.V)) >= 1 - 1e-12


def test_compensator_rejects_bad_anchor():
    with pytest.raises(ValueError):
        compensator_for(PolUnitary.identity(), StateLabel.V)


def test_haar_marginal_uniform(rng):
    # |u_00|^2 is Uniform(0, 1) under Haar measure on U(2)
    x = [abs(random_unitary(rng).m[0, 0]) ** 2 for _ in range(4000)]
    assert kstest(x, "uniform").pvalue > 1e-3


def test_haar_axis_isotropic(rng):
    # Bloch image of H is uniform on the sphere: each coordinate Uniform(-1, 1)
    zs = []
    for _ in range(4000):
        v = random_unitary(rng).m[:, 0]
        zs.append(abs(v[0]) ** 2 - abs(v[1]) ** 2)
    assert kstest(zs, "uniform", args=(-1, 2)).pvalue > 1e-3


def test_drift_step_rms_distance(rng):
    sigma = 1e-3
    u = PolUnitary.identity()
    d = np.array([np.linalg.norm(drift_step(u, sigma, rng).m - np.eye(2)) for _ in range(20000)])
    rms = math.sqrt(np.mean(d**2))
    assert rms == pytest.approx(sigma * math.sqrt(2), rel=0.03)
    # the mean is the half-normal mean, not sigma*sqrt(2)
    assert d.mean() == pytest.approx(2 * sigma / math.sqrt(math.pi), rel=0.03)


def test_drift_zero_sigma_is_identity_map(rng):
    u = random_unitary(rng)
    assert drift_step(u, 0.0, rng) is u
    with pytest.raises(ValueError):
        drift_step(u, -1.0, rng)


def test_unitary_algebra():
    u = random_unitary(np.random.default_rng(1))
    assert np.allclose((u.dagger @ u).m, np.eye(2), atol=1e-14)
    assert u == PolUnitary._trusted(u.m) and hash(u) == hash(PolUnitary._trusted(u.m))
    assert isinstance(u @ jones_of(StateLabel.H), JonesVector)
