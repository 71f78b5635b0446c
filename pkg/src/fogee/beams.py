"""Beamformer and active-set containers shared by every algorithm."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netmodel import NetworkTopology


@dataclass
class Beamformer:
    """Stacked beamformer: row ``k`` is ``w_k``; F-AP ``r`` owns columns ``offsets[r]:offsets[r+1]``."""

    W: np.ndarray
    offsets: np.ndarray

    @classmethod
    def zeros(cls, topo: NetworkTopology) -> "Beamformer":
        return cls(np.zeros((topo.K, topo.M), dtype=complex), topo.offsets)

    @property
    def K(self) -> int:
        return self.W.shape[0]

    @property
    def R(self) -> int:
        return len(self.offsets) - 1

    def block(self, r: int, k: int) -> np.ndarray:
        return self.W[k, self.offsets[r]:self.offsets[r + 1]]

    def set_block(self, r: int, k: int, value) -> None:
        self.W[k, self.offsets[r]:self.offsets[r + 1]] = value

    def block_norms(self) -> np.ndarray:
        """``(R, K)`` array of ``||w_rk||^2``."""
        w2 = np.abs(self.W) ** 2
        return np.add.reduceat(w2, self.offsets[:-1], axis=1).T

    def fap_power(self) -> np.ndarray:
        return self.block_norms().sum(axis=1)

    def copy(self) -> "Beamformer":
        return Beamformer(self.W.copy(), self.offsets)

    def restricted(self, active: "ActiveSet") -> "Beamformer":
        """Copy with every block outside the association zeroed."""
        out = Beamformer(np.zeros_like(self.W), self.offsets)
        for r, users in active.association.items():
            if r not in active.active:
                continue
            s = slice(self.offsets[r], self.offsets[r + 1])
            idx = sorted(users)
            out.W[idx, s] = self.W[idx, s]
        return out


def assoc_threshold(topo: NetworkTopology) -> float:
    """Power level above which ``w_rk`` counts as nonzero."""
    return 1e-4 * float(topo.p_max.max()) / topo.K


@dataclass(frozen=True)
class ActiveSet:
    active: frozenset
    association: dict

    def __post_init__(self):
        seen = set()
        for r, users in self.association.items():
            if users and r not in self.active:
                raise ValueError(f"F-AP {r} serves users but is not active")
            if seen & set(users):
                raise ValueError("a user is associated with more than one F-AP")
            seen |= set(users)

    @classmethod
    def build(cls, active, association) -> "ActiveSet":
        return cls(frozenset(int(r) for r in active),
                   {int(r): frozenset(int(k) for k in u) for r, u in association.items()})

    @classmethod
    def empty(cls, R: int) -> "ActiveSet":
        return cls.build([], {r: () for r in range(R)})

    @classmethod
    def from_beamformer(cls, w: Beamformer, eps: float) -> "ActiveSet":
        """F-AP active iff its total beam power exceeds ``eps``; users go to their argmax block above ``eps``."""
        norms = w.block_norms()
        active = {r for r in range(w.R) if norms[r].sum() > eps}
        assoc = {r: set() for r in range(w.R)}
        for k in range(w.K):
            col = np.where(norms[:, k] > eps, norms[:, k], -np.inf)
            if np.isfinite(col).any():
                r = int(np.argmax(col))
                if r in active:
                    assoc[r].add(k)
        return cls.build(active, assoc)

    def users(self, r: int) -> frozenset:
        return self.association.get(r, frozenset())

    def n_users(self, r: int) -> int:
        return len(self.users(r))

    def serving(self, k: int):
        for r, users in self.association.items():
            if k in users:
                return r
        return None

    def served_mask(self, K: int) -> np.ndarray:
        mask = np.zeros(K, dtype=bool)
        for r in self.active:
            mask[list(self.users(r))] = True
        return mask

    def with_active(self, active) -> "ActiveSet":
        active = frozenset(active)
        return ActiveSet.build(active, {r: (u if r in active else ()) for r, u in self.association.items()})
