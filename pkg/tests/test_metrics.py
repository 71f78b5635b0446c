import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fogee.beams import ActiveSet, Beamformer, assoc_threshold
from fogee.metrics import (check_constraints, global_ee, local_ee, rate_from_sinr, served_rates, sinr,
                           sinr_all, slnr, spectral_efficiency, user_rate)
from fogee.netmodel import MACRO, PICO
from fogee.power import PowerParams

from conftest import make_channels, make_topology, random_channels

P = PowerParams()


def test_single_user_sinr():
    topo = make_topology()
    h = np.array([[1 + 1j, 0.5, -0.2j, 2.0]])
    ch = make_channels(topo, h, noise=0.5)
    p = 3.0
    w = Beamformer(np.sqrt(p) * h / np.linalg.norm(h), topo.offsets)
    assert sinr(0, w, ch) == pytest.approx(p * np.linalg.norm(h) ** 2 / 0.5, rel=1e-12)
    assert sinr(0, Beamformer.zeros(topo), ch) == 0.0


def test_two_user_sinr_hand():
    topo = make_topology(antennas=[2], n_users=2)
    H = np.array([[1.0, 0.0], [1.0, 1.0j]])
    ch = make_channels(topo, H)
    W = np.array([[1.0, 0.0], [0.0, 2.0]], dtype=complex)
    w = Beamformer(W, topo.offsets)
    # user 0: |h0^H w0|^2 = 1, |h0^H w1|^2 = 0 ; user 1: |h1^H w1|^2 = |(-1j)*2|^2 = 4, |h1^H w0|^2 = 1
    assert sinr(0, w, ch) == pytest.approx(1.0)
    assert sinr(1, w, ch) == pytest.approx(4.0 / 2.0)
    np.testing.assert_allclose(sinr_all(w, ch), [1.0, 2.0])


def test_rates():
    assert rate_from_sinr(1.0) == 1.0
    assert rate_from_sinr(0.0) == 0.0
    assert rate_from_sinr(3.0) == 2.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_unitary_invariance(seed):
    rng = np.random.default_rng(seed)
    topo = make_topology(antennas=[3], n_users=3)
    ch = random_channels(topo, rng)
    w = Beamformer(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)), topo.offsets)
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
    ch2 = make_channels(topo, ch.perfect @ Q.T)
    w2 = Beamformer(w.W @ Q.T, topo.offsets)
    np.testing.assert_allclose(sinr_all(w, ch), sinr_all(w2, ch2), rtol=1e-9)


@given(st.floats(0, 1e6), st.floats(1e-6, 1e3))
def test_rate_increasing(s, d):
    assert rate_from_sinr(s + d) > rate_from_sinr(s)


def test_spectral_efficiency():
    topo = make_topology(kinds=(MACRO, PICO), n_users=3)
    rng = np.random.default_rng(1)
    ch = random_channels(topo, rng)
    w = Beamformer(np.zeros((3, topo.M), complex), topo.offsets)
    w.W[0, :4] = 1.0
    w.W[1, 4:] = 1.0
    w.W[2, :4] = 0.5j
    assert spectral_efficiency(w, ActiveSet.empty(2), ch) == 0.0
    act = ActiveSet.build([0, 1], {0: [0, 2], 1: [1]})
    assert spectral_efficiency(w, act, ch) == pytest.approx(sum(user_rate(k, w, ch) for k in range(3)), rel=1e-12)
    act2 = ActiveSet.build([0, 1], {0: [0], 1: [1]})
    np.testing.assert_allclose(served_rates(w, act2, ch)[2], 0.0)


def test_one_user_one_bit():
    topo = make_topology(antennas=[1])
    ch = make_channels(topo, [[1.0]])
    w = Beamformer(np.array([[1.0 + 0j]]), topo.offsets)
    act = ActiveSet.build([0], {0: [0]})
    assert spectral_efficiency(w, act, ch) == 1.0


def test_global_ee_ten_mbit_per_joule():
    topo = make_topology(antennas=[1], p_max=[10.0])
    # choose the channel so 10 W radiated gives SINR 1023
    ch = make_channels(topo, [[np.sqrt(102.3)]])
    w = Beamformer(np.array([[np.sqrt(10.0) + 0j]]), topo.offsets)
    act = ActiveSet.build([0], {0: [0]})
    params = PowerParams(p_fix=0.0, beta_redundancy=0.0, p_td=0.0, rho_n0=0.0, p_ic=0.0, beta_amp=1.0)
    assert global_ee(w, act, ch, topo, params) / 1e6 == pytest.approx(10.0, rel=1e-12)
    assert global_ee(Beamformer.zeros(topo), ActiveSet.build([0], {0: []}), ch, topo, P) == 0.0


def test_global_ee_bandwidth_scaling():
    topo = make_topology(antennas=[1], p_max=[10.0])
    ch = make_channels(topo, [[np.sqrt(102.3)]])
    w = Beamformer(np.array([[np.sqrt(10.0) + 0j]]), topo.offsets)
    act = ActiveSet.build([0], {0: [0]})
    for b in (10e6, 20e6):
        params = PowerParams(bandwidth=b)
        tau = 10.0
        p = (0.825 + params.uplink_coef(1)) + (2.5 + 0.2) + (0.825 + b * tau * 0.25e-9) + 10.0
        assert global_ee(w, act, ch, topo, params) == pytest.approx(b * tau / p, rel=1e-12)


def test_ee_decreases_with_power():
    topo = make_topology(antennas=[1], p_max=[10.0])
    ch = make_channels(topo, [[np.sqrt(102.3)]])
    w = Beamformer(np.array([[np.sqrt(10.0) + 0j]]), topo.offsets)
    act = ActiveSet.build([0], {0: [0]})
    assert global_ee(w, act, ch, topo, PowerParams(p_ic=0.5)) < global_ee(w, act, ch, topo, PowerParams(p_ic=0.2))


def test_local_ee():
    topo = make_topology(kinds=(MACRO, PICO), n_users=2)
    ch = random_channels(topo, np.random.default_rng(2))
    w = Beamformer.zeros(topo)
    w.set_block(0, 0, [1, 0, 0, 0])
    w.set_block(1, 1, [0, 0.5])
    act = ActiveSet.build([0, 1], {0: [0], 1: [1]})
    r0 = user_rate(0, w, ch)
    p_on = (0.825 + P.uplink_coef(4)) + 3.3 + 1.0 + (0.825 + P.bandwidth * r0 * P.p_td)
    assert local_ee(0, w, act, ch, topo, P) == pytest.approx(P.bandwidth * r0 / p_on, rel=1e-12)
    assert local_ee(1, w, ActiveSet.build([0, 1], {0: [0], 1: []}), ch, topo, P) == 0.0


def test_local_global_numerators_single_fap():
    topo = make_topology(n_users=2)
    ch = random_channels(topo, np.random.default_rng(5))
    w = Beamformer(np.ones((2, 4), complex), topo.offsets)
    act = ActiveSet.build([0], {0: [0, 1]})
    loc = local_ee(0, w, act, ch, topo, P)
    glob = global_ee(w, act, ch, topo, P)
    # one F-AP: same throughput and same power, so the two coincide
    assert loc == pytest.approx(glob, rel=1e-12)


def test_slnr_cases():
    topo = make_topology(antennas=[2], n_users=2)
    H = np.array([[1.0, 0.0], [0.0, 1.0]], complex)
    ch = make_channels(topo, H)
    w = np.array([2.0, 0.0], complex)
    # orthogonal to the other user: no leakage
    assert slnr(0, 0, w, ch) == pytest.approx(4.0)
    H = np.array([[1.0, 1.0], [1.0, -1.0j]], complex)
    ch = make_channels(topo, H)
    w = np.array([1.0, 1.0j], complex)
    # |h0^H w|^2 = |1 + 1j|^2 = 2, |h1^H w|^2 = |1 + 1j*1j*... | computed by hand
    leak = abs(np.conj(1.0) * 1.0 + np.conj(-1.0j) * 1.0j) ** 2
    assert slnr(0, 0, w, ch) == pytest.approx(2.0 / (leak + 1.0))
    one = make_topology(antennas=[2])
    ch1 = make_channels(one, [[1.0, 2.0]])
    assert slnr(0, 0, np.array([1.0, 0.0]), ch1) == pytest.approx(1.0)


def test_check_constraints():
    topo = make_topology(kinds=(MACRO, PICO), n_users=2)
    ch = random_channels(topo, np.random.default_rng(0), scale=1e-3)
    w = Beamformer.zeros(topo)
    rep = check_constraints(w, ActiveSet.empty(2), ch, topo, P)
    np.testing.assert_allclose(rep.power_residuals, topo.p_max)
    assert rep.feasible() and rep.summary()["association_violations"] == 0
    w.set_block(1, 0, [np.sqrt(1.5), 0])
    rep = check_constraints(w, ActiveSet.build([1], {1: [0]}), ch, topo, P)
    assert rep.power_residuals[1] == pytest.approx(-0.5)
    assert not rep.power_ok()
    w.set_block(0, 0, [1, 0, 0, 0])
    rep = check_constraints(w, ActiveSet.build([1], {1: [0]}), ch, topo, P)
    assert rep.association_violations.tolist() == [1, 0]


def test_perfect_outdated_coincide_without_error():
    from fogee.netmodel import RngSeed, ScenarioConfig, generate_channels, generate_topology
    topo = generate_topology(ScenarioConfig.small(5), RngSeed(3))
    ch = generate_channels(topo, 0.0, RngSeed(3))
    w = Beamformer(np.ones((5, topo.M), complex) * 0.1, topo.offsets)
    np.testing.assert_array_equal(sinr_all(w, ch, "perfect"), sinr_all(w, ch, "outdated"))


def test_threshold():
    topo = make_topology(kinds=(MACRO, PICO), n_users=4)
    assert assoc_threshold(topo) == pytest.approx(1e-4 * 20.0 / 4)
