"""Time the AL value+gradient kernel: compiled extension vs numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from fogee import _alkernel_py
from fogee.alsolver import AlProblem, initial_beamformer
from fogee.netmodel import RngSeed, ScenarioConfig, generate_frames, generate_topology
from fogee.power import PowerParams

try:
    from fogee import _alkernel
except ImportError:
    _alkernel = None


def instance(scenario, k):
    seed = RngSeed(0, 0)
    topo = generate_topology(getattr(ScenarioConfig, scenario)(k), seed)
    ch = generate_frames(topo, 0.0, seed, 1)[0]
    prob = AlProblem.build(ch, topo, PowerParams())
    w = initial_beamformer(ch, topo).W
    R = prob.R
    mus = (np.full(R, 0.5), np.full(R, 0.5), np.full(prob.K, 0.5))
    return prob, w, mus


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    print(f"{'instance':<16}{'backend':<10}{'us/call':>12}{'speedup':>10}")
    for scenario, k in (("small", 5), ("small", 10), ("large", 60)):
        prob, w, mus = instance(scenario, k)
        kernels = [("numpy", _alkernel_py.al_value_grad)]
        if _alkernel is not None:
            kernels.append(("cython", _alkernel.al_value_grad))
        base = None
        ref = prob.value_grad(w, *mus, 10.0, kernel=kernels[0][1])
        for name, fn in kernels:
            out = prob.value_grad(w, *mus, 10.0, kernel=fn)
            assert np.isclose(out[0], ref[0], rtol=1e-10) and np.allclose(out[1], ref[1], rtol=1e-8, atol=1e-12)
            t = min(timeit.repeat(lambda: prob.value_grad(w, *mus, 10.0, kernel=fn),
                                  number=args.repeat, repeat=3)) / args.repeat
            base = base or t
            print(f"{scenario + ' K=' + str(k):<16}{name:<10}{t * 1e6:>12.1f}{base / t:>9.1f}x")


if __name__ == "__main__":
    main()
