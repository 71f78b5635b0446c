"""Reference schemes: distributed energy-efficiency baseline and sum-rate reference."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .beams import ActiveSet
from .heuristic import (AssociationResult, DropReport, ReweightOptions, associate_users,
                        frame_metrics, merge_residuals, phase2_beams)
from .netmodel import ChannelSet, NetworkTopology
from .power import PowerParams


@dataclass(frozen=True)
class RefEeParams:
    theta: int = 1
    capacity: tuple | None = None

    def __post_init__(self):
        if self.theta < 1:
            raise ValueError("theta must be >= 1")

    def cap(self, topo: NetworkTopology) -> np.ndarray:
        return topo.antennas if self.capacity is None else np.asarray(self.capacity)


@dataclass
class BaselineResult:
    beamformers: list
    actives: list
    report: DropReport


def ref_ee_association(ch: ChannelSet, topo: NetworkTopology, opts: RefEeParams = RefEeParams()) -> ActiveSet:
    """Strongest-F-AP choice, farthest users dropped at capacity, sparse F-APs switched off."""
    gains = ch.block_gains("perfect")
    best = np.argmax(gains, axis=0)
    dist = topo.distances()
    cap = opts.cap(topo)
    groups, active = {}, set()
    for r in range(topo.R):
        users = list(np.flatnonzero(best == r))
        while len(users) > cap[r]:
            users.remove(max(users, key=lambda k: (dist[r, k], k)))
        if len(users) >= opts.theta:
            active.add(r)
            groups[r] = users
        else:
            groups[r] = []
    return ActiveSet.build(active, groups)


def _report(name, beams, actives, frames, topo, params, t0, iterations=0, flags=()):
    rates, powers, reps = [], [], []
    for w, act, ch in zip(beams, actives, frames):
        r_t, p, _, rep = frame_metrics(w, act, ch, topo, params)
        rates.append(r_t)
        powers.append(p)
        reps.append(rep)
    mean_rates = np.mean(rates, axis=0)
    tau = mean_rates.sum()
    residuals, feasible = merge_residuals(reps)
    flags = list(flags) + ([] if feasible else ["infeasible"])
    n_active = float(np.mean([len(a.active) for a in actives]))
    return DropReport(name, params.bandwidth * tau / np.mean(powers), params.bandwidth * tau,
                      mean_rates, n_active, residuals, feasible, flags, iterations,
                      time.perf_counter() - t0, {"active_counts": [len(a.active) for a in actives]})


def ref_ee(frames: list, topo: NetworkTopology, params: PowerParams,
           opts: RefEeParams = RefEeParams()) -> BaselineResult:
    """Fully local scheme; re-decided every frame from perfect local CSI only."""
    t0 = time.perf_counter()
    actives = [ref_ee_association(ch, topo, opts) for ch in frames]
    beams = [phase2_beams(a, ch, topo) for a, ch in zip(actives, frames)]
    return BaselineResult(beams, actives, _report("ref_ee", beams, actives, frames, topo, params, t0))


def ref_sr(frames: list, topo: NetworkTopology, params: PowerParams,
           association: AssociationResult | None = None,
           reweight: ReweightOptions = ReweightOptions()) -> BaselineResult:
    """Sum-rate association on frame 1 without deactivation; SLNR beams every frame."""
    t0 = time.perf_counter()
    if association is None:
        association = associate_users(frames[0], topo, params, reweight)
    assoc = association.active
    active = assoc.with_active([r for r in range(topo.R) if assoc.users(r)])
    beams = [phase2_beams(active, ch, topo) for ch in frames]
    flags = ["association_fallback"] if association.fallback else []
    return BaselineResult(beams, [active] * len(frames),
                          _report("ref_sr", beams, [active] * len(frames), frames, topo, params, t0,
                                  association.iterations, flags))
