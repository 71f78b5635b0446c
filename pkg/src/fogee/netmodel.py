"""Network topology and channel generation.

Channels are stored stacked per user: row ``k`` of a ``(K, M)`` array is
``h_k = [h_1k; ...; h_Rk]`` and the F-AP ``r`` block occupies columns
``offsets[r]:offsets[r + 1]``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError

MACRO = "macro"
PICO = "pico"

MIN_DISTANCE_M = 10.0
SHADOWING_STD_DB = 8.0
NOISE_PSD_DBM_HZ = -169.0


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


class Stream(Enum):
    TOPOLOGY = 0
    FADING = 1
    SHADOWING = 2
    CSI_ERROR = 3


@dataclass(frozen=True)
class RngSeed:
    """Seed plus drop index; every random draw comes from a tagged sub-stream."""

    seed: int
    drop: int = 0

    def generator(self, stream: Stream, *extra: int) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.seed & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(self.drop, stream.value, *extra),
        )
        return np.random.default_rng(ss)


@dataclass(frozen=True)
class FApConfig:
    kind: str
    antennas: int
    p_max: float
    fronthaul_capacity: float
    position: tuple[float, float]

    def __post_init__(self):
        if self.kind not in (MACRO, PICO):
            raise ConfigError(f"unknown F-AP class {self.kind!r}")
        if self.antennas < 1:
            raise ConfigError("antennas must be >= 1")
        if self.p_max <= 0 or self.fronthaul_capacity <= 0:
            raise ConfigError("p_max and fronthaul_capacity must be positive")


@dataclass(frozen=True)
class NetworkTopology:
    faps: tuple[FApConfig, ...]
    users: np.ndarray
    area_radius: float

    def __post_init__(self):
        if len(self.faps) < 1 or len(self.users) < 1:
            raise ConfigError("topology needs at least one F-AP and one user")

    @property
    def R(self) -> int:
        return len(self.faps)

    @property
    def K(self) -> int:
        return len(self.users)

    @property
    def antennas(self) -> np.ndarray:
        return np.array([f.antennas for f in self.faps], dtype=np.int64)

    @property
    def M(self) -> int:
        return int(self.antennas.sum())

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.antennas)]).astype(np.int64)

    @property
    def p_max(self) -> np.ndarray:
        return np.array([f.p_max for f in self.faps])

    @property
    def capacity(self) -> np.ndarray:
        return np.array([f.fronthaul_capacity for f in self.faps])

    @property
    def fap_positions(self) -> np.ndarray:
        return np.array([f.position for f in self.faps], dtype=float)

    def distances(self) -> np.ndarray:
        """``(R, K)`` F-AP to user distances in meters."""
        d = self.fap_positions[:, None, :] - self.users[None, :, :]
        return np.hypot(d[..., 0], d[..., 1])

    def col_fap(self) -> np.ndarray:
        """F-AP index owning each stacked antenna column."""
        return np.repeat(np.arange(self.R), self.antennas)


@dataclass(frozen=True)
class ScenarioConfig:
    n_macro: int = 1
    n_pico: int = 3
    n_users: int = 5
    area_radius: float = 500.0
    macro_antennas: int = 4
    pico_antennas: int = 2
    macro_p_max_dbm: float = 43.0
    pico_p_max_dbm: float = 30.0
    macro_fronthaul: float = 690e6
    pico_fronthaul: float = 107e6

    @classmethod
    def small(cls, n_users: int = 5) -> "ScenarioConfig":
        return cls(n_macro=1, n_pico=3, n_users=n_users, area_radius=500.0)

    @classmethod
    def large(cls, n_users: int = 60) -> "ScenarioConfig":
        return cls(n_macro=3, n_pico=9, n_users=n_users, area_radius=1000.0)


def _uniform_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = 2 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def _macro_sites(n: int, radius: float) -> list[tuple[float, float]]:
    if n == 1:
        return [(0.0, 0.0)]
    # centers of n equal angular sectors at half radius
    angles = 2 * np.pi * np.arange(n) / n + np.pi / 2
    return [(radius / 2 * np.cos(a), radius / 2 * np.sin(a)) for a in angles]


def generate_topology(config: ScenarioConfig, seed: RngSeed) -> NetworkTopology:
    if config.n_users < 1:
        raise ConfigError("n_users must be >= 1")
    if config.n_macro < 0 or config.n_pico < 0 or config.n_macro + config.n_pico < 1:
        raise ConfigError("need at least one F-AP")
    if config.area_radius <= 0:
        raise ConfigError("area_radius must be positive")

    rng = seed.generator(Stream.TOPOLOGY)
    faps = []
    if config.n_macro:
        for pos in _macro_sites(config.n_macro, config.area_radius):
            faps.append(FApConfig(MACRO, config.macro_antennas,
                                  dbm_to_watt(config.macro_p_max_dbm),
                                  config.macro_fronthaul, pos))
    for pos in _uniform_disc(rng, config.n_pico, config.area_radius):
        faps.append(FApConfig(PICO, config.pico_antennas,
                              dbm_to_watt(config.pico_p_max_dbm),
                              config.pico_fronthaul, (float(pos[0]), float(pos[1]))))
    users = _uniform_disc(rng, config.n_users, config.area_radius)
    return NetworkTopology(tuple(faps), users, config.area_radius)


def path_loss_db(kind: str, distance_m: np.ndarray) -> np.ndarray:
    d_km = np.maximum(distance_m, MIN_DISTANCE_M) / 1000.0
    if kind == MACRO:
        return 128.1 + 37.6 * np.log10(d_km)
    return 140.7 + 36.7 * np.log10(d_km)


def large_scale_gain(topo: NetworkTopology, seed: RngSeed) -> np.ndarray:
    """``(R, K)`` linear gain from path loss and log-normal shadowing."""
    dist = topo.distances()
    pl = np.stack([path_loss_db(f.kind, dist[r]) for r, f in enumerate(topo.faps)])
    shadow = seed.generator(Stream.SHADOWING).normal(0.0, SHADOWING_STD_DB, pl.shape)
    return 10.0 ** (-(pl + shadow) / 10.0)


def noise_power(bandwidth: float = 10e6) -> float:
    return dbm_to_watt(NOISE_PSD_DBM_HZ) * bandwidth


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


@dataclass(frozen=True)
class ChannelSet:
    perfect: np.ndarray
    outdated: np.ndarray
    gain: np.ndarray
    offsets: np.ndarray
    noise_power: float
    error_variance: float = 0.0
    fading: np.ndarray = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return self.perfect.shape[0]

    @property
    def R(self) -> int:
        return len(self.offsets) - 1

    def view(self, name: str) -> np.ndarray:
        if name == "perfect":
            return self.perfect
        if name == "outdated":
            return self.outdated
        raise ValueError(f"unknown CSI view {name!r}")

    def normalized(self, name: str = "perfect") -> np.ndarray:
        """Channels divided by the noise amplitude, so noise power becomes 1."""
        return self.view(name) / np.sqrt(self.noise_power)

    def block(self, name: str, r: int, k: int) -> np.ndarray:
        return self.view(name)[k, self.offsets[r]:self.offsets[r + 1]]

    def block_gains(self, name: str = "perfect") -> np.ndarray:
        """``(R, K)`` array of ``||h_rk||^2``."""
        h2 = np.abs(self.view(name)) ** 2
        return np.add.reduceat(h2, self.offsets[:-1], axis=1).T


def _expand_gain(gain: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    counts = np.diff(offsets)
    return np.repeat(gain, counts, axis=0).T


def _build(fading, error, gain, offsets, noise, error_variance) -> ChannelSet:
    amp = np.sqrt(_expand_gain(gain, offsets))
    perfect = amp * fading
    if error_variance == 0:
        outdated = perfect.copy()
    else:
        outdated = amp * (fading + np.sqrt(error_variance) * error)
    return ChannelSet(perfect, outdated, gain, offsets, noise, error_variance, fading)


def generate_channels(topo: NetworkTopology, error_variance: float, seed: RngSeed,
                      frame: int = 0, bandwidth: float = 10e6) -> ChannelSet:
    """Rayleigh fading over path loss and shadowing, plus the cloud's stale view.

    Shadowing is per drop; fading and CSI error are redrawn per ``frame``. The
    error draw is scaled by ``sqrt(error_variance)`` so different error levels
    on the same seed share one underlying realization.
    """
    if error_variance < 0:
        raise ConfigError("error variance must be >= 0")
    gain = large_scale_gain(topo, seed)
    shape = (topo.K, topo.M)
    fading = _cn(seed.generator(Stream.FADING, frame), shape)
    error = _cn(seed.generator(Stream.CSI_ERROR, frame), shape)
    return _build(fading, error, gain, topo.offsets, noise_power(bandwidth), error_variance)


def generate_frames(topo: NetworkTopology, error_variance: float, seed: RngSeed,
                    n_frames: int, bandwidth: float = 10e6) -> list[ChannelSet]:
    return [generate_channels(topo, error_variance, seed, t, bandwidth) for t in range(n_frames)]


def _pairs(a: np.ndarray) -> list:
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _unpairs(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def channels_to_fixture(ch: ChannelSet) -> dict:
    return {
        "offsets": ch.offsets.tolist(),
        "noise_power": ch.noise_power,
        "error_variance": ch.error_variance,
        "gain": ch.gain.tolist(),
        "perfect": _pairs(ch.perfect),
        "outdated": _pairs(ch.outdated),
    }


def channels_from_fixture(data: dict) -> ChannelSet:
    perfect = _unpairs(data["perfect"])
    outdated = _unpairs(data["outdated"])
    if perfect.shape != outdated.shape:
        raise ValueError("perfect and outdated views differ in shape")
    offsets = np.asarray(data["offsets"], dtype=np.int64)
    gain = np.asarray(data["gain"], dtype=float)
    fading = perfect / np.sqrt(_expand_gain(gain, offsets))
    return ChannelSet(perfect, outdated, gain, offsets, float(data["noise_power"]),
                      float(data["error_variance"]), fading)


def save_channels(ch: ChannelSet, path) -> None:
    Path(path).write_text(json.dumps(channels_to_fixture(ch), indent=1))


def load_channels(path) -> ChannelSet:
    return channels_from_fixture(json.loads(Path(path).read_text()))
