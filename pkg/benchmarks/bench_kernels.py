"""Time the numba and numpy backends of the two hot kernels.

    python benchmarks/bench_kernels.py [--repeat 2]

The moving-boundary solver and the particle simulation are run with the
same inputs under each backend; the counts are checked to be identical.
"""

import argparse
import time
import warnings

import numpy as np

from matrixtx import MatrixParams, ChannelParams, _kernels
from matrixtx.pbs import PbsConfig, constant_front, simulate_end_to_end
from matrixtx.release import FdmConfig, fdm_release_oracle


def fdm_case():
    m = MatrixParams(1e-6, 1e-9, 25.0)
    return lambda: fdm_release_oracle(m, FdmConfig()).fraction


def pbs_case():
    m = MatrixParams(1e-6, 1e-9, 1.0, 5000)
    c = ChannelParams(1e-9, 5e-6, 1e-6)
    cfg = PbsConfig(dt=1e-5, n_steps=2000, front_table=constant_front(0.0, 2e-2), realizations=4, seed=1,
                    absorption_mode="intra-step-crossing", release_mode="intra-step-crossing")
    return lambda: simulate_end_to_end(m, c, cfg).absorbed_raw


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=2)
    args = p.parse_args()
    backends = [b for b in ("numba", "numpy") if b in _kernels.BACKENDS]
    warnings.simplefilter("ignore")
    print(f"{'kernel':<6} {'backend':<7} {'best [s]':>10}")
    for name, case in [("fdm", fdm_case()), ("pbs", pbs_case())]:
        results = {}
        for be in backends:
            _kernels.ACTIVE_BACKEND = be
            if be == "numba":
                case()  # compile outside the timing
            seconds, results[be] = best_of(case, args.repeat)
            print(f"{name:<6} {be:<7} {seconds:>10.3f}", flush=True)
        if len(results) == 2:
            a, b = (np.asarray(results[k], dtype=float) for k in ("numba", "numpy"))
            if a.shape == b.shape:
                print(f"{name:<6} max |numba - numpy| = {np.max(np.abs(a - b)):.2e}")
            else:
                print(f"{name:<6} outputs differ in length: {a.shape} vs {b.shape}")


if __name__ == "__main__":
    main()
