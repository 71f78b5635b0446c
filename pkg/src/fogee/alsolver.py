"""Augmented Lagrangian solver for the smoothed joint association/beamforming problem.

The local-processing constraint is smoothed with ``phi(y) = |y|^2 / (|y|^2 + delta)``
and the resulting problem is solved by a safeguarded AL outer loop whose
unconstrained subproblems are handled by BFGS over ``[Re W, Im W]``.
Objective values are in Mbit/J (negated) and constraints are normalized:
power by ``P_max``, fronthaul by ``C_r``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .beams import ActiveSet, Beamformer, assoc_threshold
from .metrics import check_constraints
from .netmodel import ChannelSet, NetworkTopology
from .power import PowerParams, circuit_power
from .qn import QNResult, bfgs

LN2 = np.log(2.0)


def phi(y, delta: float) -> float:
    if delta <= 0:
        raise ValueError("delta must be positive")
    n = float(np.sum(np.abs(y) ** 2))
    return n / (n + delta)


@dataclass(frozen=True)
class AlOptions:
    mu_max: float = 1.0
    lam: float = 0.25
    beta: float = 10.0
    rho0: float = 10.0
    max_outer: int = 50
    delta: float = 0.1
    inner_max: int = 500
    inner_rtol: float = 1e-4
    kkt_tol: float = 1e-3
    view: str = "outdated"


@dataclass
class AlProblem:
    H: np.ndarray
    offsets: np.ndarray
    col_fap: np.ndarray
    p_max: np.ndarray
    cap_se: np.ndarray
    uplink_coef: np.ndarray
    static: np.ndarray
    p_fix: float
    bw_ptd: float
    bandwidth: float
    delta: float
    scale: float = 1e-6

    @classmethod
    def build(cls, ch: ChannelSet, topo: NetworkTopology, params: PowerParams,
              view: str = "outdated", delta: float = 0.1) -> "AlProblem":
        m = topo.antennas
        return cls(
            H=np.ascontiguousarray(ch.normalized(view)),
            offsets=topo.offsets.astype(np.int64),
            col_fap=topo.col_fap().astype(np.int64),
            p_max=topo.p_max.astype(float),
            cap_se=topo.capacity / params.bandwidth,
            uplink_coef=np.array([params.uplink_coef(mr) for mr in m], dtype=float),
            static=np.array([params.p_fix + circuit_power(params, mr) for mr in m], dtype=float),
            p_fix=params.p_fix,
            bw_ptd=params.bandwidth * params.p_td,
            bandwidth=params.bandwidth,
            delta=delta,
        )

    @property
    def K(self) -> int:
        return self.H.shape[0]

    @property
    def M(self) -> int:
        return self.H.shape[1]

    @property
    def R(self) -> int:
        return len(self.p_max)

    def value_grad(self, W, mu1, mu2, mu3, rho, kernel=None):
        kernel = kernel or kernels.al_value_grad
        return kernel(np.ascontiguousarray(W, dtype=complex), self.H, self.offsets, self.col_fap,
                      self.p_max, self.cap_se, self.uplink_coef, self.static,
                      self.p_fix, self.bw_ptd, self.bandwidth, self.delta, self.scale,
                      np.asarray(mu1, float), np.asarray(mu2, float), np.asarray(mu3, float),
                      float(rho))

    def terms(self, W):
        """Objective ``f`` and the three normalized constraint families at ``W``."""
        a2 = np.abs(self.H.conj() @ W.T) ** 2
        T = a2.sum(axis=1) + 1.0
        rate = np.log2(T / (T - np.diag(a2)))
        n = np.add.reduceat(np.abs(W) ** 2, self.offsets[:-1], axis=1).T
        ph = n / (n + self.delta)
        pw = n.sum(axis=1)
        psi = pw / (pw + self.delta)
        tau = ph @ rate
        pfd = self.p_fix + self.bw_ptd * tau
        D = np.sum(self.static + self.uplink_coef * ph.sum(axis=1) + (pfd + pw) * psi)
        f = -self.scale * self.bandwidth * rate.sum() / D
        return f, pw / self.p_max - 1.0, tau / self.cap_se - 1.0, ph.sum(axis=0) - 1.0

    def to_real(self, W) -> np.ndarray:
        return np.concatenate([W.real.ravel(), W.imag.ravel()])

    def from_real(self, x) -> np.ndarray:
        n = self.K * self.M
        return (x[:n] + 1j * x[n:]).reshape(self.K, self.M)


def _as_array(w) -> np.ndarray:
    return w.W if isinstance(w, Beamformer) else np.asarray(w)


def al_objective(w, mu1, mu2, mu3, rho, problem: AlProblem) -> float:
    return problem.value_grad(_as_array(w), mu1, mu2, mu3, rho)[0]


def al_gradient(w, mu1, mu2, mu3, rho, problem: AlProblem) -> np.ndarray:
    """Gradient over the stacked real coordinates ``[Re W, Im W]`` (length ``2 M K``)."""
    G = problem.value_grad(_as_array(w), mu1, mu2, mu3, rho)[1]
    return 2.0 * problem.to_real(G)


@dataclass
class AlState:
    w: Beamformer
    mu1: np.ndarray
    mu2: np.ndarray
    mu3: np.ndarray
    rho: float
    iteration: int = 0
    violations: list = field(default_factory=list)


def solve_subproblem(state: AlState, problem: AlProblem, inner_tol=None,
                     max_iter: int = 500) -> tuple[Beamformer, QNResult]:
    """Minimize the AL function in ``w`` for fixed multipliers and penalty, warm-started at ``state.w``."""
    mu1, mu2, mu3, rho = state.mu1, state.mu2, state.mu3, state.rho

    def fun(x):
        val, G = problem.value_grad(problem.from_real(x), mu1, mu2, mu3, rho)
        return val, 2.0 * problem.to_real(G)

    res = bfgs(fun, problem.to_real(state.w.W), tol=inner_tol, max_iter=max_iter)
    return Beamformer(problem.from_real(res.x), state.w.offsets), res


def initial_beamformer(ch: ChannelSet, topo: NetworkTopology, view: str = "outdated") -> Beamformer:
    """Each user gets a matched filter from its strongest F-AP; every F-AP radiates half its budget."""
    w = Beamformer.zeros(topo)
    gains = ch.block_gains(view)
    best = np.argmax(gains, axis=0)
    for r in range(topo.R):
        users = np.flatnonzero(best == r)
        if users.size == 0:
            continue
        p = 0.5 * topo.p_max[r] / users.size
        for k in users:
            h = ch.block(view, r, k)
            w.set_block(r, k, np.sqrt(p) * h / np.linalg.norm(h))
    return w


@dataclass
class AlResult:
    beamformer: Beamformer
    active: ActiveSet
    raw: Beamformer
    trace: list
    converged: bool
    infeasible: bool
    outer_iterations: int
    inner_iterations: int
    degraded: bool
    wall_time: float

    @property
    def flags(self) -> list:
        out = []
        if not self.converged:
            out.append("al_not_converged")
        if self.infeasible:
            out.append("infeasible")
        if self.degraded:
            out.append("line_search_degraded")
        return out


def finalize(w: Beamformer, topo: NetworkTopology) -> tuple[Beamformer, ActiveSet]:
    """Threshold the smoothed solution into a hard association and enforce the power budgets."""
    eps = assoc_threshold(topo)
    active = ActiveSet.from_beamformer(w, eps)
    out = w.restricted(active)
    pw = out.fap_power()
    for r in range(topo.R):
        if pw[r] > topo.p_max[r]:
            s = slice(topo.offsets[r], topo.offsets[r + 1])
            out.W[:, s] *= np.sqrt(topo.p_max[r] / pw[r])
    return out, ActiveSet.from_beamformer(out, eps)


def run_al(ch: ChannelSet, topo: NetworkTopology, params: PowerParams,
           opts: AlOptions = AlOptions(), w0: Beamformer | None = None) -> AlResult:
    t0 = time.perf_counter()
    problem = AlProblem.build(ch, topo, params, opts.view, opts.delta)
    state = AlState(
        w=w0.copy() if w0 is not None else initial_beamformer(ch, topo, opts.view),
        mu1=np.zeros(topo.R), mu2=np.zeros(topo.R), mu3=np.zeros(topo.K), rho=opts.rho0,
    )
    trace = []
    converged = degraded = False
    inner_total = 0
    prev_v = None
    for i in range(opts.max_outer):
        state.iteration = i
        tol = lambda f: opts.inner_rtol * (1.0 + abs(f))  # noqa: E731
        w, res = solve_subproblem(state, problem, tol, opts.inner_max)
        state.w = w
        inner_total += res.iterations
        degraded |= res.degraded

        f, g1, g2, g3 = problem.terms(w.W)
        v = np.concatenate([np.maximum(g1, -state.mu1 / state.rho),
                            np.maximum(g2, -state.mu2 / state.rho),
                            np.maximum(g3, -state.mu3 / state.rho)])
        v_norm = float(np.max(np.abs(v)))
        max_violation = float(max(0.0, g1.max(), g2.max(), g3.max()))
        state.violations.append(v_norm)
        trace.append({
            "iteration": i + 1,
            "objective": float(f),
            "lagrangian": float(res.f),
            "max_violation": max_violation,
            "complementarity": v_norm,
            "rho": float(state.rho),
            "inner_iterations": res.iterations,
            "inner_converged": bool(res.converged),
        })

        if res.grad_inf <= opts.kkt_tol * (1.0 + abs(f)) and v_norm <= opts.kkt_tol:
            converged = True
            break

        state.mu1 = np.clip(state.mu1 + state.rho * g1, 0.0, opts.mu_max)
        state.mu2 = np.clip(state.mu2 + state.rho * g2, 0.0, opts.mu_max)
        state.mu3 = np.clip(state.mu3 + state.rho * g3, 0.0, opts.mu_max)
        if prev_v is not None and v_norm > opts.lam * prev_v:
            state.rho *= opts.beta
        prev_v = v_norm

    final, active = finalize(state.w, topo)
    report = check_constraints(final, active, ch, topo, params, "perfect")
    return AlResult(final, active, state.w, trace, converged, not report.feasible(),
                    len(trace), inner_total, degraded, time.perf_counter() - t0)
