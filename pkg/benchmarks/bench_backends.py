"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_backends.py [--repeat N]

Each case runs once to warm up (numba compiles on first call), then reports
the best of ``--repeat`` timings for both backends and their ratio.
"""
import argparse
import os
import time

import numpy as np

from kvnmd.classical import MdState, run_trajectory
from kvnmd.engine import Propagator, StepConfig
from kvnmd.phase_space import encode_canonical, make_grid
from kvnmd.potentials import coupled_cosine_2p
from kvnmd.resources import pauli_coefficients


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def case_split_step():
    mod = coupled_cosine_2p()
    g = make_grid(2, 5, 5, 6.0)
    psi = encode_canonical(g, mod, 1.0)
    prop = Propagator(g, mod, StepConfig(dt=0.02))
    return lambda: prop.evolve(psi, 10)


def case_md():
    mod = coupled_cosine_2p()
    s0 = MdState([0.3, 2.0], [1.1, -0.4])
    return lambda: run_trajectory(s0, mod, None, 0.01, 20_000, record_every=1000)


def case_pauli():
    rng = np.random.default_rng(0)
    D = rng.normal(size=(256, 256)) + 1j * rng.normal(size=(256, 256))
    return lambda: pauli_coefficients(D)


CASES = {"split-step 32^4 x10": case_split_step, "velocity Verlet 2e4 steps": case_md,
         "Pauli projection n=8": case_pauli}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'case':28s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s}")
    for name, make in CASES.items():
        res = {}
        for be in ("numba", "numpy"):
            os.environ["KVNMD_BACKEND"] = be
            res[be] = _best(make(), args.repeat)
        print(f"{name:28s} {res['numba']:10.4f} {res['numpy']:10.4f} {res['numpy'] / res['numba']:8.2f}")
    os.environ.pop("KVNMD_BACKEND", None)


if __name__ == "__main__":
    main()
