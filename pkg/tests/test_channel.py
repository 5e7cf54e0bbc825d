
import numpy as np
import pytest

from qframes.alice import AliceParams, Intensity, emit_classical_symbol, prepare_pulse
from qframes.channel import ChannelParams, ChannelState, advance, propagate, quantum_arm_factor, tap_split, transmittance
from qframes.polmath import PolUnitary, StateLabel, detection_prob, jones_of, random_unitary

SWAP = PolUnitary([[0, 1], [1, 0]])


def pulse(mu=0.5, label=StateLabel.H):
    intensity = Intensity.VACUUM if mu == 0 else Intensity.SIGNAL
    p = prepare_pulse(label.bit, label.basis, intensity, AliceParams(mu_signal=mu or 0.5, e_prep=0.0), np.random.default_rng(0))
    assert p.mu == mu
    return p


@pytest.mark.parametrize(
    "km, loss, excess, expected",
    [(0.0, 0.2, 0.0, 1.0), (12.0, 0.2, 0.0, 0.575439937), (5e-3, 0.2, 0.0, 0.999769768), (1.0, 0.0, 3.0, 0.501187234)],
)
def test_transmittance(km, loss, excess, expected):
    assert transmittance(ChannelParams(length_km=km, loss_db_per_km=loss, excess_loss_db=excess)) == pytest.approx(expected, rel=1e-9)


def test_params_validation():
    for bad in ({"length_km": -1}, {"drift_sigma_per_slot": -0.1}, {"initial": "random"}, {"delay_slots": -2}):
        with pytest.raises(ValueError):
            ChannelParams(**bad)


def test_propagate_identity_and_swap():
    p = ChannelParams()
    out = propagate(pulse(), ChannelState(PolUnitary.identity()), p)
    assert out.mu == pytest.approx(0.5 * transmittance(p))
    assert detection_prob(out.pol, jones_of(StateLabel.H)) == pytest.approx(1.0)
    out = propagate(pulse(), ChannelState(SWAP), p)
    assert detection_prob(out.pol, jones_of(StateLabel.V)) == pytest.approx(1.0)
    assert propagate(pulse(0.0), ChannelState(SWAP), p).mu == 0.0


def test_propagate_preserves_truth():
    p = emit_classical_symbol(1, AliceParams())
    out = propagate(p, ChannelState(PolUnitary.identity()), ChannelParams())
    assert out.klass is p.klass and out.slot == p.slot


def test_advance_without_drift_keeps_u(rng):
    u = random_unitary(rng)
    st = ChannelState(u, rng=np.random.default_rng(3))
    before = st.rng.bit_generator.state
    advance(st, 1000, ChannelParams())
    assert st.u is u and st.slot_clock == 1000
    assert st.rng.bit_generator.state == before
    advance(st, 0, ChannelParams(drift_sigma_per_slot=0.1))
    assert st.u is u


def test_advance_deterministic():
    p = ChannelParams(drift_sigma_per_slot=1e-3)
    a = ChannelState.initial(p, np.random.default_rng(9))
    b = ChannelState.initial(p, np.random.default_rng(9))
    advance(a, 5000, p)
    advance(b, 5000, p)
    assert a.u == b.u and a.slot_clock == b.slot_clock == 5000


def test_advance_chunking_invariant():
    # the walk only depends on the slot clock, not on how it is chunked
    p = ChannelParams(drift_sigma_per_slot=1e-3, initial="identity")
    a = ChannelState.initial(p, np.random.default_rng(4))
    b = ChannelState.initial(p, np.random.default_rng(4))
    advance(a, 2500, p)
    for n in (700, 300, 1000, 500):
        advance(b, n, p)
    assert np.allclose(a.u.m, b.u.m, atol=1e-13)


def test_long_walk_stays_unitary():
    p = ChannelParams(drift_sigma_per_slot=0.01, initial="identity")
    st = ChannelState.initial(p, np.random.default_rng(0))
    advance(st, 10**6, p)
    assert np.abs(st.u.m.conj().T @ st.u.m - np.eye(2)).max() < 1e-9


def test_initial_identity():
    assert ChannelState.initial(ChannelParams(initial="identity")).u == PolUnitary.identity()


def test_tap_split():
    c, q = tap_split(pulse(1.0), True)
    assert (c.mu, q.mu) == pytest.approx((0.1, 0.9))
    c, q = tap_split(pulse(0.5), False)
    assert (c.mu, q.mu) == (0.0, 0.5)
    c, q = tap_split(pulse(0.0), True)
    assert (c.mu, q.mu) == (0.0, 0.0)
    assert quantum_arm_factor(True) == pytest.approx(0.9) and quantum_arm_factor(False) == 1.0
    assert c.pol == q.pol
