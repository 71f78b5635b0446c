"""F-RAN power consumption model.

All rates are in bits/s and ``p_td`` is stored in W per bit/s
(0.25 W/Gbps -> 0.25e-9).
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .beams import ActiveSet, Beamformer
from .errors import ConfigError, InvariantViolation


@dataclass(frozen=True)
class PowerParams:
    p_fix: float = 0.825
    beta_redundancy: float = 4.0 / 3.0
    b_iq: float = 20.0
    f_pre: float = 1.5e6
    p_td: float = 0.25e-9
    beta_amp: float = 0.4
    rho_n0: float = 1.0
    p_ic: float = 0.2
    bandwidth: float = 10e6

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"{f.name} must be non-negative")
        if not 0 < self.beta_amp <= 1:
            raise ConfigError("beta_amp must lie in (0, 1]")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive")

    @classmethod
    def from_dict(cls, data: dict | None) -> "PowerParams":
        return cls(**(data or {}))

    def uplink_coef(self, m_r) -> float:
        """Traffic-dependent uplink fronthaul power per served user."""
        return self.beta_redundancy * m_r * self.b_iq * self.f_pre * self.p_td


def fronthaul_uplink_power(params: PowerParams, m_r: int, k_r: int) -> float:
    return params.p_fix + params.uplink_coef(m_r) * k_r


def circuit_power(params: PowerParams, m_r: int) -> float:
    return params.rho_n0 / params.beta_amp + m_r * params.p_ic


def fronthaul_downlink_power(params: PowerParams, tau: float) -> float:
    """``tau`` is the spectral efficiency carried on the link, bits/s/Hz."""
    return params.p_fix + params.bandwidth * tau * params.p_td


def wireless_power(w: Beamformer, r: int) -> float:
    s = slice(w.offsets[r], w.offsets[r + 1])
    return float(np.sum(np.abs(w.W[:, s]) ** 2))


@dataclass(frozen=True)
class FapPower:
    uplink: float
    circuit: float
    downlink: float
    wireless: float
    active: bool

    @property
    def total(self) -> float:
        return self.uplink + self.circuit + self.downlink + self.wireless


@dataclass(frozen=True)
class PowerBreakdown:
    faps: tuple

    @property
    def total(self) -> float:
        return float(sum(f.total for f in self.faps))


def total_power(w: Beamformer, active: ActiveSet, params: PowerParams, tau,
                antennas, eps: float = 0.0) -> tuple[float, PowerBreakdown]:
    """Total consumption of active and idle F-APs.

    ``tau`` holds the per-F-AP served spectral efficiency; each active link
    carries only its own users' traffic. Idle F-APs pay the no-traffic uplink
    term and circuit power. Raises ``InvariantViolation`` if an idle F-AP
    radiates more than ``eps``.
    """
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (w.R,))
    faps = []
    for r in range(w.R):
        m_r = int(antennas[r])
        p_w = wireless_power(w, r)
        if r in active.active:
            faps.append(FapPower(
                fronthaul_uplink_power(params, m_r, active.n_users(r)),
                circuit_power(params, m_r),
                fronthaul_downlink_power(params, tau[r]),
                p_w, True))
        else:
            if p_w > eps:
                raise InvariantViolation(f"idle F-AP {r} radiates {p_w:.3g} W")
            faps.append(FapPower(fronthaul_uplink_power(params, m_r, 0),
                                 circuit_power(params, m_r), 0.0, 0.0, False))
    bd = PowerBreakdown(tuple(faps))
    return bd.total, bd


def averaged_heuristic_power(frame1: PowerBreakdown, steady: PowerBreakdown, T: int) -> float:
    """Per-frame power over a scheduling period of ``T`` frames.

    Frame 1 pays the full cost at active F-APs; frames 2..T pay only circuit
    and radiated power there. Idle F-APs pay uplink + circuit every frame.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    first = sum(f.total for f in frame1.faps if f.active)
    rest = sum(f.circuit + f.wireless for f in steady.faps if f.active)
    idle = sum(f.uplink + f.circuit for f in frame1.faps if not f.active)
    return (first + (T - 1) * rest + T * idle) / T
