"""SINR, rates, energy efficiency and constraint residuals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beams import ActiveSet, Beamformer, assoc_threshold
from .netmodel import ChannelSet, NetworkTopology
from .power import (PowerParams, circuit_power, fronthaul_downlink_power,
                    fronthaul_uplink_power, total_power, wireless_power)


def sinr_all(w: Beamformer, ch: ChannelSet, view: str = "perfect") -> np.ndarray:
    H = ch.normalized(view)
    # a[k, j] = h_k^H w_j
    a2 = np.abs(H.conj() @ w.W.T) ** 2
    signal = np.diag(a2).copy()
    interference = a2.sum(axis=1) - signal + 1.0
    return signal / interference


def sinr(k: int, w: Beamformer, ch: ChannelSet, view: str = "perfect") -> float:
    H = ch.normalized(view)
    a2 = np.abs(w.W.conj() @ H[k]) ** 2
    return float(a2[k] / (a2.sum() - a2[k] + 1.0))


def rate_from_sinr(s):
    return np.log2(1.0 + s)


def user_rate(k: int, w: Beamformer, ch: ChannelSet, view: str = "perfect") -> float:
    return float(rate_from_sinr(sinr(k, w, ch, view)))


def user_rates(w: Beamformer, ch: ChannelSet, view: str = "perfect") -> np.ndarray:
    return rate_from_sinr(sinr_all(w, ch, view))


def served_rates(w: Beamformer, active: ActiveSet, ch: ChannelSet, view: str = "perfect") -> np.ndarray:
    """Per-user rate, zero for users outside the association."""
    return np.where(active.served_mask(w.K), user_rates(w, ch, view), 0.0)


def fap_spectral_efficiency(w, active, ch, view="perfect", rates=None) -> np.ndarray:
    """``(R,)`` sum of served user rates per F-AP."""
    if rates is None:
        rates = user_rates(w, ch, view)
    tau = np.zeros(w.R)
    for r in active.active:
        users = list(active.users(r))
        tau[r] = rates[users].sum() if users else 0.0
    return tau


def spectral_efficiency(w: Beamformer, active: ActiveSet, ch: ChannelSet, view: str = "perfect") -> float:
    return float(fap_spectral_efficiency(w, active, ch, view).sum())


def system_power(w, active, ch, topo, params, view="perfect", rates=None):
    tau_r = fap_spectral_efficiency(w, active, ch, view, rates)
    return total_power(w, active, params, tau_r, topo.antennas, eps=assoc_threshold(topo))


def global_ee(w: Beamformer, active: ActiveSet, ch: ChannelSet, topo: NetworkTopology,
              params: PowerParams, view: str = "perfect") -> float:
    """Served throughput over total power, bits/J."""
    rates = user_rates(w, ch, view)
    tau = fap_spectral_efficiency(w, active, ch, view, rates).sum()
    p, _ = system_power(w, active, ch, topo, params, view, rates)
    return params.bandwidth * tau / p


def fap_on_power(r, w, active, topo, params, tau_r) -> float:
    m_r = int(topo.antennas[r])
    return (fronthaul_uplink_power(params, m_r, active.n_users(r)) + circuit_power(params, m_r)
            + wireless_power(w, r) + fronthaul_downlink_power(params, tau_r))


def local_ee(r: int, w: Beamformer, active: ActiveSet, ch: ChannelSet, topo: NetworkTopology,
             params: PowerParams, view: str = "perfect", rates=None) -> float:
    users = list(active.users(r))
    if r not in active.active or not users:
        return 0.0
    if rates is None:
        rates = user_rates(w, ch, view)
    tau_r = float(rates[users].sum())
    return params.bandwidth * tau_r / fap_on_power(r, w, active, topo, params, tau_r)


def slnr(r: int, k: int, w_rk: np.ndarray, ch: ChannelSet, view: str = "perfect", users=None) -> float:
    """Signal-to-leakage-plus-noise ratio of ``w_rk``.

    Leakage runs over ``users`` (default: every other user in the network),
    using F-AP ``r``'s block of the channel.
    """
    H = ch.normalized(view)[:, ch.offsets[r]:ch.offsets[r + 1]]
    g2 = np.abs(H.conj() @ w_rk) ** 2
    others = [j for j in (range(ch.K) if users is None else users) if j != k]
    return float(g2[k] / (g2[others].sum() + 1.0))


@dataclass(frozen=True)
class ConstraintReport:
    power_residuals: np.ndarray
    fronthaul_residuals: np.ndarray
    association_violations: np.ndarray
    p_max: np.ndarray
    capacity: np.ndarray

    def power_ok(self, rtol: float = 1e-6) -> bool:
        return bool(np.all(self.power_residuals >= -rtol * self.p_max))

    def fronthaul_ok(self, rtol: float = 1e-6) -> bool:
        return bool(np.all(self.fronthaul_residuals >= -rtol * self.capacity))

    def feasible(self, rtol: float = 1e-6) -> bool:
        return self.power_ok(rtol) and self.fronthaul_ok(rtol) and not self.association_violations.any()

    def summary(self) -> dict:
        return {
            "max_power_violation": float(max(0.0, -(self.power_residuals / self.p_max).min())),
            "max_fronthaul_violation": float(max(0.0, -(self.fronthaul_residuals / self.capacity).min())),
            "association_violations": int(self.association_violations.sum()),
        }


def check_constraints(w: Beamformer, active: ActiveSet, ch: ChannelSet, topo: NetworkTopology,
                      params: PowerParams, view: str = "perfect") -> ConstraintReport:
    norms = w.block_norms()
    power_res = topo.p_max - norms.sum(axis=1)
    tau_r = fap_spectral_efficiency(w, active, ch, view)
    fronthaul_res = topo.capacity - params.bandwidth * tau_r
    nonzero = (norms > assoc_threshold(topo)).sum(axis=0)
    return ConstraintReport(power_res, fronthaul_res, np.maximum(nonzero - 1, 0),
                            topo.p_max, topo.capacity)
