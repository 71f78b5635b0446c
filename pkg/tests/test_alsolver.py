import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fogee import _alkernel_py, kernels
from fogee.alsolver import (AlOptions, AlProblem, AlState, al_gradient, al_objective, finalize,
                            initial_beamformer, phi, run_al, solve_subproblem)
from fogee.beams import Beamformer
from fogee.heuristic import run_heuristic
from fogee.metrics import check_constraints, global_ee
from fogee.netmodel import MACRO, PICO, RngSeed, ScenarioConfig, generate_frames, generate_topology
from fogee.power import PowerParams, circuit_power

from conftest import make_channels, make_topology, random_channels

P = PowerParams()


def test_phi_examples():
    assert phi(np.zeros(3), 0.1) == 0.0
    y = np.array([np.sqrt(0.05), np.sqrt(0.05)])
    assert phi(y, 0.1) == pytest.approx(0.5)
    assert phi(np.array([np.sqrt(0.9)]), 0.1) == pytest.approx(0.9)
    with pytest.raises(ValueError):
        phi(y, 0.0)


@given(st.lists(st.complex_numbers(max_magnitude=1e3, allow_nan=False), min_size=1, max_size=6),
       st.floats(1e-6, 10))
def test_phi_range(y, delta):
    v = phi(np.array(y), delta)
    assert 0.0 <= v < 1.0


def test_phi_tends_to_l0():
    y = np.array([0.3 + 0.1j])
    assert phi(y, 1e-12) == pytest.approx(1.0, abs=1e-9)


def small_problem(seed=0, K=2, kinds=(MACRO, PICO), scale=3.0):
    topo = make_topology(kinds=kinds, n_users=K)
    ch = random_channels(topo, np.random.default_rng(seed), scale=scale)
    return topo, ch, AlProblem.build(ch, topo, P)


def reference_al(W, prob: AlProblem, mu1, mu2, mu3, rho):
    """Scalar re-implementation of the AL display formula."""
    H = prob.H
    K, M = W.shape
    R = len(prob.p_max)
    rates = []
    for k in range(K):
        sig = abs(np.vdot(H[k], W[k])) ** 2
        intf = sum(abs(np.vdot(H[k], W[j])) ** 2 for j in range(K) if j != k)
        rates.append(math.log2(1 + sig / (intf + 1.0)))
    blk = [[sum(abs(W[k, m]) ** 2 for m in range(prob.offsets[r], prob.offsets[r + 1])) for k in range(K)]
           for r in range(R)]
    ph = [[blk[r][k] / (blk[r][k] + prob.delta) for k in range(K)] for r in range(R)]
    D = 0.0
    g1, g2 = [], []
    for r in range(R):
        pw = sum(blk[r])
        tau = sum(ph[r][k] * rates[k] for k in range(K))
        pfd = prob.p_fix + prob.bw_ptd * tau
        D += prob.static[r] + prob.uplink_coef[r] * sum(ph[r]) + (pfd + pw) * pw / (pw + prob.delta)
        g1.append(pw / prob.p_max[r] - 1)
        g2.append(tau / prob.cap_se[r] - 1)
    g3 = [sum(ph[r][k] for r in range(R)) - 1 for k in range(K)]
    f = -prob.scale * prob.bandwidth * sum(rates) / D
    pen = 0.0
    for g, mu in ((g1, mu1), (g2, mu2), (g3, mu3)):
        pen += sum(max(gi + m / rho, 0.0) ** 2 for gi, m in zip(g, mu))
    return f + rho / 2 * pen, f


def test_origin_values():
    topo, ch, prob = small_problem()
    W = np.zeros((topo.K, topo.M), complex)
    z = np.zeros(topo.R), np.zeros(topo.R), np.zeros(topo.K)
    assert al_objective(W, *z, 10.0, prob) == 0.0
    np.testing.assert_array_equal(al_gradient(W, *z, 10.0, prob), 0.0)
    assert al_gradient(W, *z, 10.0, prob).shape == (2 * topo.M * topo.K,)


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_dual_path_objective(backend):
    kern = _alkernel_py.al_value_grad if backend == "python" else kernels.al_value_grad
    rng = np.random.default_rng(4)
    for seed in range(10):
        topo, ch, prob = small_problem(seed, K=3, kinds=(MACRO, PICO, PICO))
        W = rng.standard_normal((topo.K, topo.M)) + 1j * rng.standard_normal((topo.K, topo.M))
        mu1, mu2, mu3 = rng.uniform(0, 1, topo.R), rng.uniform(0, 1, topo.R), rng.uniform(0, 1, topo.K)
        rho = rng.uniform(0.5, 50)
        val, _ = prob.value_grad(W, mu1, mu2, mu3, rho, kernel=kern)
        ref, f = reference_al(W, prob, mu1, mu2, mu3, rho)
        assert val == pytest.approx(ref, rel=1e-10)
        assert prob.terms(W)[0] == pytest.approx(f, rel=1e-10)


def test_penalty_vanishes():
    topo, ch, prob = small_problem(1)
    W = np.random.default_rng(0).standard_normal((topo.K, topo.M)) * 3 + 0j
    mu = np.zeros(topo.R), np.zeros(topo.R), np.zeros(topo.K)
    f = prob.terms(W)[0]
    assert al_objective(W, *mu, 1e-12, prob) == pytest.approx(f, abs=1e-9)


def test_backends_agree():
    rng = np.random.default_rng(8)
    for seed in range(20):
        topo, ch, prob = small_problem(seed, K=4, kinds=(MACRO, PICO, PICO))
        W = (rng.standard_normal((topo.K, topo.M)) + 1j * rng.standard_normal((topo.K, topo.M))) * rng.uniform(0.1, 3)
        args = (rng.uniform(0, 1, topo.R), rng.uniform(0, 1, topo.R), rng.uniform(0, 1, topo.K), rng.uniform(1, 100))
        v1, g1 = prob.value_grad(W, *args, kernel=_alkernel_py.al_value_grad)
        v2, g2 = prob.value_grad(W, *args, kernel=kernels.al_value_grad)
        assert v1 == pytest.approx(v2, rel=1e-12)
        np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-14)


def fd_check(prob, W, mu1, mu2, mu3, rho, h=1e-6):
    x = prob.to_real(W)
    g = al_gradient(W, mu1, mu2, mu3, rho, prob)
    step = h * max(1.0, np.max(np.abs(x)))
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        fd[i] = (al_objective(prob.from_real(x + e), mu1, mu2, mu3, rho, prob)
                 - al_objective(prob.from_real(x - e), mu1, mu2, mu3, rho, prob)) / (2 * step)
    return np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)


def gradient_audit(n_points=100, seed=0):
    """Worst relative FD mismatch over random points of an R=2, K=2 instance."""
    rng = np.random.default_rng(seed)
    topo, ch, prob = small_problem(seed, K=2)
    worst = 0.0
    for _ in range(n_points):
        W = (rng.standard_normal((2, topo.M)) + 1j * rng.standard_normal((2, topo.M))) * rng.uniform(0.05, 2.0)
        mu1, mu2, mu3 = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
        worst = max(worst, fd_check(prob, W, mu1, mu2, mu3, rng.uniform(1, 100)))
    return worst


def test_gradient_finite_differences():
    assert gradient_audit(30, seed=3) <= 1e-4


def test_phi_term_gradient_at_delta():
    # one user, one antenna, only the association penalty active: d/dy of the
    # smoothed count at |y|^2 = delta is delta / (2 delta)^2 * 2 y
    topo = make_topology(antennas=[1])
    ch = make_channels(topo, [[0.0]])
    prob = AlProblem.build(ch, topo, P)
    y = np.sqrt(prob.delta)
    W = np.array([[y + 0j]])
    mu3 = np.array([1.0])
    rho = 1.0
    # value = f + rho/2 (phi - 1 + mu3/rho)^2 with f = 0 (zero channel)
    ph = 0.5
    t = ph - 1 + mu3[0] / rho
    dphi_dy = prob.delta / (2 * prob.delta) ** 2 * 2 * y
    g = al_gradient(W, np.zeros(1), np.zeros(1), mu3, rho, prob)
    assert g[0] == pytest.approx(rho * t * dphi_dy, rel=1e-9)
    assert fd_check(prob, W, np.zeros(1), np.zeros(1), mu3, rho) <= 1e-6


def test_subproblem_descent_and_stationarity():
    topo, ch, prob = small_problem(2, K=2)
    w0 = initial_beamformer(ch, topo)
    st_ = AlState(w0, np.zeros(topo.R), np.zeros(topo.R), np.zeros(topo.K), 10.0)
    f0 = al_objective(w0, st_.mu1, st_.mu2, st_.mu3, st_.rho, prob)
    w1, res = solve_subproblem(st_, prob, 1e-8, 500)
    assert res.f <= f0
    assert res.converged
    st_.w = w1
    w2, res2 = solve_subproblem(st_, prob, 1e-6, 500)
    assert res2.iterations == 0
    np.testing.assert_array_equal(w1.W, w2.W)


def test_single_user_matches_power_sweep():
    topo = make_topology(antennas=[4], n_users=1, p_max=[20.0])
    h = np.array([[1 + 0.5j, -0.3, 0.2j, 0.8]]) * 3e2
    ch = make_channels(topo, h)
    res = run_al(ch, topo, P, AlOptions(view="perfect"))
    w = res.beamformer.W[0]
    cos = abs(np.vdot(h[0], w)) / (np.linalg.norm(h) * np.linalg.norm(w))
    assert cos == pytest.approx(1.0, abs=1e-6)
    # scalar oracle: best feasible transmit power along the matched filter
    prob = AlProblem.build(ch, topo, P, "perfect")
    u = h / np.linalg.norm(h)
    grid = np.linspace(1e-3, 20.0, 20001)
    vals = []
    for p in grid:
        f, g1, g2, g3 = prob.terms(np.sqrt(p) * u)
        vals.append(f if max(g1.max(), g2.max()) <= 0 else np.inf)
    p_best = grid[int(np.argmin(vals))]
    assert np.linalg.norm(w) ** 2 == pytest.approx(p_best, rel=2e-2)
    assert res.active.active == frozenset({0})
    assert res.active.users(0) == frozenset({0})


def test_run_al_invariants(small_drop):
    topo, frames, _ = small_drop
    res = run_al(frames[0], topo, P)
    rhos = [t["rho"] for t in res.trace]
    for a, b in zip(rhos, rhos[1:]):
        assert b in (a, 10 * a)
    assert res.trace[-1]["iteration"] == res.outer_iterations
    rep = check_constraints(res.beamformer, res.active, frames[0], topo, P, "perfect")
    assert rep.feasible() or res.infeasible
    assert rep.summary()["association_violations"] == 0


def test_multipliers_clamped(monkeypatch):
    topo, ch, prob = small_problem(0, K=3, kinds=(MACRO, PICO, PICO))
    seen = []
    import fogee.alsolver as al
    orig = al.solve_subproblem

    def spy(state, *a, **k):
        seen.append((state.mu1.copy(), state.mu2.copy(), state.mu3.copy()))
        return orig(state, *a, **k)
    monkeypatch.setattr(al, "solve_subproblem", spy)
    al.run_al(ch, topo, P, AlOptions(max_outer=8, rho0=1e3, kkt_tol=1e-12))
    for mus in seen:
        for m in mus:
            assert np.all(m >= 0) and np.all(m <= 1.0)


def test_finalize_projects_power():
    topo = make_topology(kinds=(MACRO, PICO), n_users=2)
    w = Beamformer.zeros(topo)
    w.set_block(1, 0, [2.0, 0.0])
    w.set_block(0, 1, [1.0, 0, 0, 0])
    w.set_block(1, 1, [1e-6, 0.0])
    out, act = finalize(w, topo)
    assert out.fap_power()[1] == pytest.approx(1.0)
    assert act.users(1) == frozenset({0}) and act.users(0) == frozenset({1})
    assert out.block_norms()[1, 1] == 0.0


def test_al_beats_heuristic_mostly():
    wins = 0
    for d in range(50):
        seed = RngSeed(99, d)
        topo = generate_topology(ScenarioConfig.small(5), seed)
        frames = generate_frames(topo, 0.0, seed, 1)
        al = run_al(frames[0], topo, P)
        ee_al = global_ee(al.beamformer, al.active, frames[0], topo, P)
        ee_h = run_heuristic(frames, topo, P).report.ee
        wins += ee_al >= ee_h
    assert wins >= 40
