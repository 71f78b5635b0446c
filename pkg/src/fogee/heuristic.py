"""Two-phase cloud/edge heuristic.

Phase I (cloud, outdated CSI, once per scheduling period): reweighted
sum-rate association followed by greedy F-AP deactivation on global vs local
energy efficiency. Phase II (edge, perfect local CSI, every frame): SLNR
beamforming at each active F-AP with equal power split.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .beams import ActiveSet, Beamformer, assoc_threshold
from .metrics import (check_constraints, fap_spectral_efficiency, global_ee, local_ee,
                      served_rates, system_power, user_rates)
from .netmodel import ChannelSet, NetworkTopology
from .power import FapPower, PowerBreakdown, PowerParams, averaged_heuristic_power

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReweightOptions:
    delta0: float = 0.1
    shrink: float = 0.5
    eps: float | None = None
    max_iter: int = 30
    wmmse_steps: int = 15
    wmmse_rtol: float = 1e-2
    dual_tol: float = 1e-2


@dataclass
class ReweightState:
    beta: np.ndarray
    delta: float
    w_hat: np.ndarray
    iteration: int = 0

    def update(self, shrink: float, offsets) -> None:
        n = np.add.reduceat(np.abs(self.w_hat) ** 2, offsets[:-1], axis=1).T
        self.beta = 1.0 / (n + self.delta)
        self.delta *= shrink
        self.iteration += 1


def solve_beam_qcqp(A, b, beta, p_max, col_fap, dual0=None, tol=1e-6):
    """Convex beamformer step of the reweighted sum-rate problem.

    Minimizes ``sum_k w_k^H A w_k - 2 Re(b_k^H w_k)`` subject to
    ``sum_k ||w_rk||^2 <= p_max[r]`` and ``sum_r beta[r, k] ||w_rk||^2 <= 1`` by
    maximizing the Lagrange dual with L-BFGS-B; the primal is recovered as
    ``w_k = (A + D_k)^{-1} b_k`` with ``D_k`` the block-diagonal multiplier matrix.
    Power constraints are normalized by ``p_max`` inside the dual. Returns
    ``(W, dual, ok)``; ``W`` is scaled back into the feasible set if the dual
    solve stopped slightly short.
    """
    K, M = b.shape
    R = len(p_max)
    reg = 1e-12 * max(np.real(np.trace(A)) / M, 1e-300)
    eye = np.eye(M)
    counts = np.bincount(col_fap, minlength=R)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    inv_p = 1.0 / p_max

    def primal(z):
        lam, nu = z[:R] * inv_p, z[R:]
        d = lam[col_fap][None, :] + nu[:, None] * beta[col_fap, :].T + reg
        Mk = A[None, :, :] + d[:, :, None] * eye[None, :, :]
        return np.linalg.solve(Mk, b[:, :, None])[:, :, 0]

    def neg_dual(z):
        W = primal(z)
        n = np.add.reduceat(W.real ** 2 + W.imag ** 2, starts, axis=1).T
        val = -np.sum(np.real(np.sum(b.conj() * W, axis=1))) - z.sum()
        grad = np.concatenate([n.sum(axis=1) * inv_p - 1.0, (beta * n).sum(axis=0) - 1.0])
        return -val, -grad

    z0 = np.ones(R + K) if dual0 is None else np.maximum(dual0, 1e-9)
    res = scipy.optimize.minimize(neg_dual, z0, jac=True, method="L-BFGS-B",
                                  bounds=[(0.0, None)] * (R + K),
                                  options={"maxiter": 1000, "ftol": 1e-10, "gtol": tol})
    W = primal(res.x)
    n = np.add.reduceat(np.abs(W) ** 2, starts, axis=1).T
    ratio = max(np.max(n.sum(axis=1) * inv_p), np.max((beta * n).sum(axis=0)), 1.0)
    W /= np.sqrt(ratio)
    return W, res.x, bool(np.all(np.isfinite(W)))


def _wmmse_terms(H, W):
    """MMSE receivers and weights; returns ``(A, b)`` of the convex beamformer step."""
    a = H.conj() @ W.T
    total = np.sum(np.abs(a) ** 2, axis=1) + 1.0
    d = np.diagonal(a)
    u = d / total
    e = 1.0 - np.abs(d) ** 2 / total
    v = 1.0 / np.maximum(e, 1e-12)
    wgt = v * np.abs(u) ** 2
    A = (H.T * wgt) @ H.conj()
    b = (v * u)[:, None] * H
    return A, b


def _sum_rate(H, W) -> float:
    a2 = np.abs(H.conj() @ W.T) ** 2
    s = np.diag(a2)
    return float(np.log2(1.0 + s / (a2.sum(axis=1) - s + 1.0)).sum())


def _strongest(ch: ChannelSet, view: str) -> np.ndarray:
    return np.argmax(ch.block_gains(view), axis=0)


def _enforce_single_fap(W, offsets, R, eps):
    """Keep only each user's strongest block above ``eps``."""
    n = np.add.reduceat(np.abs(W) ** 2, offsets[:-1], axis=1).T
    out = np.zeros_like(W)
    for k in range(W.shape[0]):
        r = int(np.argmax(n[:, k]))
        if n[r, k] > eps:
            s = slice(offsets[r], offsets[r + 1])
            out[k, s] = W[k, s]
    return out


def _cap_users(W, offsets, antennas, eps, rank=None):
    """Keep at most ``M_r`` users per F-AP.

    Users are ranked by ``rank`` (an ``(R, K)`` score, default the block power).
    """
    n = np.add.reduceat(np.abs(W) ** 2, offsets[:-1], axis=1).T
    score = n if rank is None else rank
    dropped = []
    for r, m in enumerate(antennas):
        users = np.flatnonzero(n[r] > eps)
        if users.size > m:
            order = users[np.argsort(-score[r, users], kind="stable")]
            for k in order[m:]:
                W[k, offsets[r]:offsets[r + 1]] = 0
                dropped.append((int(r), int(k)))
    return W, dropped


def _release_fronthaul(W, offsets, H, capacity_se, eps):
    """Zero the lowest-rate users of any F-AP whose served rate exceeds its fronthaul."""
    released = []
    R = len(offsets) - 1
    while True:
        n = np.add.reduceat(np.abs(W) ** 2, offsets[:-1], axis=1).T
        a2 = np.abs(H.conj() @ W.T) ** 2
        rate = np.log2(1.0 + np.diag(a2) / (a2.sum(axis=1) - np.diag(a2) + 1.0))
        owner = np.where(n.max(axis=0) > eps, np.argmax(n, axis=0), -1)
        over = None
        for r in range(R):
            users = np.flatnonzero(owner == r)
            if users.size and rate[users].sum() > capacity_se[r]:
                over = (r, users[np.argmin(rate[users])])
                break
        if over is None:
            return W, released
        r, k = over
        W[k, offsets[r]:offsets[r + 1]] = 0
        released.append((int(r), int(k)))


CAP_RANK = "gain"


@dataclass
class AssociationResult:
    beamformer: Beamformer
    active: ActiveSet
    iterations: int
    fallback: bool
    released: list = field(default_factory=list)


def strongest_fap_association(ch: ChannelSet, topo: NetworkTopology, view: str) -> ActiveSet:
    best = _strongest(ch, view)
    return ActiveSet.build(range(topo.R), {r: np.flatnonzero(best == r) for r in range(topo.R)})


def associate_users(ch: ChannelSet, topo: NetworkTopology, params: PowerParams,
                    opts: ReweightOptions = ReweightOptions(), view: str = "outdated") -> AssociationResult:
    """Reweighted sum-rate association with every F-AP active at full budget."""
    H = ch.normalized(view)
    offsets = topo.offsets
    col_fap = topo.col_fap()
    p_max = topo.p_max
    cap_se = topo.capacity / params.bandwidth
    eps_assoc = assoc_threshold(topo)
    eps_stop = opts.eps if opts.eps is not None else 1e-4 * topo.K * topo.M

    W = np.zeros((topo.K, topo.M), dtype=complex)
    for r in range(topo.R):
        s = slice(offsets[r], offsets[r + 1])
        hb = H[:, s]
        W[:, s] = np.sqrt(p_max[r] / topo.K) * hb / np.linalg.norm(hb, axis=1, keepdims=True)
    # reference beams at each F-AP's full budget so the association constraint starts loose
    ref = np.zeros_like(W)
    for r in range(topo.R):
        s = slice(offsets[r], offsets[r + 1])
        ref[:, s] = W[:, s] * np.sqrt(topo.K)
    state = ReweightState(beta=np.zeros((topo.R, topo.K)), delta=opts.delta0, w_hat=ref)

    dual = None
    released = []
    ok = True
    it = 0
    for it in range(1, opts.max_iter + 1):
        state.update(opts.shrink, offsets)
        prev = _sum_rate(H, W)
        for _ in range(opts.wmmse_steps):
            A, b = _wmmse_terms(H, W)
            W, dual, step_ok = solve_beam_qcqp(A, b, state.beta, p_max, col_fap, dual, opts.dual_tol)
            ok &= step_ok
            if not ok:
                break
            cur = _sum_rate(H, W)
            if cur - prev <= opts.wmmse_rtol * max(prev, 1e-9):
                break
            prev = cur
        if not ok:
            break
        W, rel = _release_fronthaul(W, offsets, H, cap_se, eps_assoc)
        released += rel
        change = float(np.sum(np.abs(state.w_hat - W) ** 2))
        state.w_hat = W.copy()
        if change < eps_stop:
            break

    if not ok:
        log.warning("association subproblem failed; falling back to strongest F-AP")
        return AssociationResult(Beamformer.zeros(topo), strongest_fap_association(ch, topo, view),
                                 it, True, released)

    W = _enforce_single_fap(W, offsets, topo.R, eps_assoc)
    W, capped = _cap_users(W, offsets, topo.antennas, eps_assoc,
                           ch.block_gains(view) if CAP_RANK == "gain" else None)
    released += capped
    w = Beamformer(W, offsets)
    assoc = ActiveSet.from_beamformer(w, eps_assoc).association
    return AssociationResult(w, ActiveSet.build(range(topo.R), assoc), it, False, released)


def evaluate_subset(w: Beamformer, assoc: ActiveSet, subset, ch: ChannelSet, topo: NetworkTopology,
                    params: PowerParams, view: str = "outdated") -> float:
    """Global EE with Phase-I beams when only ``subset`` stays on.

    Blocks of switched-off F-APs are zeroed and their users contribute no rate.
    """
    active = assoc.with_active(subset)
    return global_ee(w.restricted(active), active, ch, topo, params, view)


@dataclass
class GreedyResult:
    active: ActiveSet
    ee: float
    initial_ee: float
    local_ee: dict
    removed: list
    reassigned: dict
    unserved: list


def reassign_orphans(assoc: ActiveSet, subset, ch: ChannelSet, topo: NetworkTopology,
                     view: str = "outdated") -> tuple[ActiveSet, dict, list]:
    """Move users of switched-off F-APs to their best remaining F-AP with spare antennas."""
    subset = frozenset(subset)
    groups = {r: set(assoc.users(r)) if r in subset else set() for r in range(topo.R)}
    orphans = sorted(k for r in range(topo.R) if r not in subset for k in assoc.users(r))
    gains = ch.block_gains(view)
    moved, dropped = {}, []
    for k in orphans:
        for r in sorted(subset, key=lambda r: (-gains[r, k], r)):
            if len(groups[r]) < topo.antennas[r]:
                groups[r].add(k)
                moved[k] = r
                break
        else:
            dropped.append(k)
    return ActiveSet.build(subset, groups), moved, dropped


def greedy_deactivate(w: Beamformer, assoc: ActiveSet, ch: ChannelSet, topo: NetworkTopology,
                      params: PowerParams, view: str = "outdated") -> GreedyResult:
    current = set(range(topo.R))
    full = assoc.with_active(current)
    wf = w.restricted(full)
    rates = user_rates(wf, ch, view)
    loc = {r: local_ee(r, wf, full, ch, topo, params, view, rates) for r in current}
    eta = evaluate_subset(w, assoc, current, ch, topo, params, view)
    initial = eta
    removed = []
    while len(current) > 1:
        worst = min(current, key=lambda r: (loc[r], r))
        trial = current - {worst}
        eta_new = evaluate_subset(w, assoc, trial, ch, topo, params, view)
        if eta_new >= eta:
            current = trial
            removed.append({"fap": worst, "local_ee": loc[worst], "global_ee": eta_new})
            eta = eta_new
        else:
            break
    final, moved, dropped = reassign_orphans(assoc, current, ch, topo, view)
    return GreedyResult(final, eta, initial, loc, removed, moved, dropped)


def _principal_direction(Q, h, max_iter=100, tol=1e-13):
    """Principal eigenvector of ``Q^{-1} h h^H`` by power iteration."""
    lu = scipy.linalg.lu_factor(Q)
    x = h / np.linalg.norm(h)
    for _ in range(max_iter):
        y = scipy.linalg.lu_solve(lu, h * (h.conj() @ x))
        ny = np.linalg.norm(y)
        if ny == 0:
            break
        y /= ny
        # remove the arbitrary phase before comparing iterates
        ph = np.vdot(y, x)
        if abs(ph) > 0:
            y *= ph / abs(ph)
        if np.linalg.norm(y - x) < tol:
            return y, True
        x = y
    return x, False


def _dense_direction(Q, h):
    vals, vecs = scipy.linalg.eig(np.linalg.solve(Q, np.outer(h, h.conj())))
    v = vecs[:, np.argmax(vals.real)]
    return v / np.linalg.norm(v)


def slnr_beamform(r: int, users, ch: ChannelSet, p_r: float, view: str = "perfect",
                  leakage=None) -> dict:
    """Equal-power max-SLNR beams of F-AP ``r`` toward ``users``.

    Leakage runs over ``leakage``, by default the F-AP's own users, matching
    the per-F-AP problem whose noise term is scaled by ``len(users)``.
    """
    users = list(users)
    if not users:
        return {}
    Hr = ch.normalized(view)[:, ch.offsets[r]:ch.offsets[r + 1]]
    m = Hr.shape[1]
    n_users = len(users)
    if leakage is None:
        leakage = users
    out = {}
    for k in users:
        others = [j for j in leakage if j != k]
        Ho = Hr[others]
        Q = Ho.T @ Ho.conj() + (n_users / p_r) * np.eye(m)
        h = Hr[k]
        v, ok = _principal_direction(Q, h)
        if not ok:
            v = _dense_direction(Q, h)
        out[k] = np.sqrt(p_r / n_users) * v / np.linalg.norm(v)
    return out


def phase2_beams(active: ActiveSet, ch: ChannelSet, topo: NetworkTopology) -> Beamformer:
    w = Beamformer.zeros(topo)
    for r in sorted(active.active):
        for k, v in slnr_beamform(r, sorted(active.users(r)), ch, topo.p_max[r]).items():
            w.set_block(r, k, v)
    return w


@dataclass
class DropReport:
    algorithm: str
    ee: float
    sum_rate: float
    user_rates: np.ndarray
    n_active: int
    residuals: dict
    feasible: bool
    flags: list
    iterations: int
    wall_time: float
    extra: dict = field(default_factory=dict)

    @property
    def ee_mbit_per_j(self) -> float:
        return self.ee / 1e6


def frame_metrics(w, active, ch, topo, params):
    rates = served_rates(w, active, ch, "perfect")
    p, bd = system_power(w, active, ch, topo, params, "perfect")
    rep = check_constraints(w, active, ch, topo, params, "perfect")
    return rates, p, bd, rep


def merge_residuals(reports) -> tuple[dict, bool]:
    summ = [r.summary() for r in reports]
    out = {
        "max_power_violation": max(s["max_power_violation"] for s in summ),
        "max_fronthaul_violation": max(s["max_fronthaul_violation"] for s in summ),
        "association_violations": max(s["association_violations"] for s in summ),
    }
    return out, all(r.feasible() for r in reports)


@dataclass
class HeuristicResult:
    beamformers: list
    active: ActiveSet
    report: DropReport
    association: AssociationResult
    greedy: GreedyResult

    def trace(self) -> dict:
        return {
            "association": {r: sorted(self.association.active.users(r)) for r in range(len(self.association.active.association))},
            "released_fronthaul": self.association.released,
            "local_ee": self.greedy.local_ee,
            "initial_global_ee": self.greedy.initial_ee,
            "removals": self.greedy.removed,
            "reassigned": self.greedy.reassigned,
            "unserved": self.greedy.unserved,
            "final_active": sorted(self.active.active),
        }


def run_heuristic(frames: list, topo: NetworkTopology, params: PowerParams,
                  T: int | None = None, association: AssociationResult | None = None,
                  reweight: ReweightOptions = ReweightOptions()) -> HeuristicResult:
    """One scheduling period: Phase I on frame 1's outdated CSI, Phase II on every frame."""
    t0 = time.perf_counter()
    T = len(frames) if T is None else T
    if T < 1 or len(frames) < T:
        raise ValueError("need T >= 1 frames")
    frames = frames[:T]
    if association is None:
        association = associate_users(frames[0], topo, params, reweight)
    greedy = greedy_deactivate(association.beamformer, association.active, frames[0], topo, params)
    active = greedy.active

    beams, rates, breakdowns, reports = [], [], [], []
    for ch in frames:
        w = phase2_beams(active, ch, topo)
        r_t, _, bd, rep = frame_metrics(w, active, ch, topo, params)
        beams.append(w)
        rates.append(r_t)
        breakdowns.append(bd)
        reports.append(rep)

    steady = breakdowns[1:] or breakdowns[:1]
    p_avg = averaged_heuristic_power(breakdowns[0], _mean_breakdown(steady), T)
    mean_rates = np.mean(rates, axis=0)
    tau = mean_rates.sum()
    residuals, feasible = merge_residuals(reports)
    flags = []
    if association.fallback:
        flags.append("association_fallback")
    if not feasible:
        flags.append("infeasible")
    report = DropReport("heuristic", params.bandwidth * tau / p_avg, params.bandwidth * tau,
                        mean_rates, len(active.active), residuals, feasible, flags,
                        association.iterations, time.perf_counter() - t0,
                        {"active_counts": [len(active.active)] * T})
    return HeuristicResult(beams, active, report, association, greedy)


def _mean_breakdown(bds):
    n = len(bds)
    faps = []
    for parts in zip(*(b.faps for b in bds)):
        faps.append(FapPower(sum(p.uplink for p in parts) / n, sum(p.circuit for p in parts) / n,
                             sum(p.downlink for p in parts) / n, sum(p.wireless for p in parts) / n,
                             parts[0].active))
    return PowerBreakdown(tuple(faps))
