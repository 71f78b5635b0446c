import numpy as np
import pytest

from fogee.netmodel import (MACRO, PICO, ChannelSet, FApConfig, NetworkTopology, RngSeed,
                            ScenarioConfig, generate_channels, generate_frames, generate_topology)
from fogee.power import PowerParams


def make_topology(kinds=(MACRO,), antennas=None, n_users=1, p_max=None, capacity=None):
    """Hand-built topology; positions are irrelevant when channels are supplied directly."""
    faps = []
    for i, kind in enumerate(kinds):
        m = antennas[i] if antennas else (4 if kind == MACRO else 2)
        p = p_max[i] if p_max else (20.0 if kind == MACRO else 1.0)
        c = capacity[i] if capacity else (690e6 if kind == MACRO else 107e6)
        faps.append(FApConfig(kind, m, p, c, (100.0 * i, 0.0)))
    users = np.column_stack([np.linspace(10, 50, n_users), np.full(n_users, 20.0)])
    return NetworkTopology(tuple(faps), users, 500.0)


def make_channels(topo, H, outdated=None, noise=1.0):
    """ChannelSet over explicit (K, M) channels with unit large-scale gain."""
    H = np.asarray(H, dtype=complex)
    gain = np.ones((topo.R, topo.K))
    return ChannelSet(H, H.copy() if outdated is None else np.asarray(outdated, dtype=complex),
                      gain, topo.offsets, noise, 0.0, H.copy())


def random_channels(topo, rng, scale=1.0):
    H = scale * (rng.standard_normal((topo.K, topo.M)) + 1j * rng.standard_normal((topo.K, topo.M))) / np.sqrt(2)
    return make_channels(topo, H)


@pytest.fixture
def params():
    return PowerParams()


@pytest.fixture
def small_drop():
    seed = RngSeed(7, 0)
    topo = generate_topology(ScenarioConfig.small(5), seed)
    return topo, generate_frames(topo, 0.0, seed, 3), seed


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Recorder for acceptance outcomes: ``acceptance(n, ok, detail)``."""
    def record(n, ok, detail):
        _ACCEPTANCE[n] = (bool(ok), detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
