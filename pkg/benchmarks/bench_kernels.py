"""Timing of the per-node temperature inversion: compiled kernel vs numpy fallback.

    python3 benchmarks/bench_kernels.py [--nodes 65536] [--repeat 5] [--threads N]

Both backends solve the same problem; the largest difference between their
temperatures is printed next to the timings.
"""
import argparse
import os
import time

import numpy as np

from viscotherm import kernels
from viscotherm.functions import make_psi0, make_psi1, make_psi2
from viscotherm.constitutive import FreeEnergyModel, preset_oldroyd_b
from viscotherm.regularization import RegularizedModel


def models():
    ob, _ = preset_oldroyd_b(c_V=2.0, mu_elastic=2.0)
    sat = FreeEnergyModel(make_psi0({"name": "ideal_plus", "c_V": 1.5, "c_a": 0.5, "theta_c": 2.0}),
                          make_psi1({"name": "saturating", "g0": 1.0, "g1": 0.5, "s_c": 3.0}),
                          make_psi2({"name": "log_stretch"}))
    return {"oldroyd_b": ob, "saturating": sat}


def problem(reg, n, seed=0):
    rng = np.random.default_rng(seed)
    theta = 10.0 ** rng.uniform(-3, 3, n)
    b = rng.uniform(0.5, 2.0, n)
    p2 = reg.base.psi2(b)
    return reg.energy_p2(theta, p2), p2


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=65536)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    a = ap.parse_args()
    if not kernels.available():
        print("compiled kernels not built; only the fallback can be timed")
    kernels.set_threads(a.threads)
    print(f"{'model':<12}{'eps':>8}{'python [ms]':>14}{'compiled [ms]':>16}{'speedup':>10}{'max diff':>12}")
    for name, model in models().items():
        for eps in (0.0, 1e-2):
            reg = RegularizedModel(model, eps)
            e, p2 = problem(reg, a.nodes)
            kernels.use_backend("python")
            tp, (thp, _, _) = best_of(lambda: kernels.invert(reg, e, p2), a.repeat)
            if kernels.available():
                kernels.use_backend("compiled")
                tc, (thc, _, _) = best_of(lambda: kernels.invert(reg, e, p2), a.repeat)
                diff = float(np.max(np.abs(thc - thp) / thp))
                print(f"{name:<12}{eps:>8g}{1e3 * tp:>14.2f}{1e3 * tc:>16.2f}{tp / tc:>10.1f}{diff:>12.1e}")
            else:
                print(f"{name:<12}{eps:>8g}{1e3 * tp:>14.2f}{'-':>16}{'-':>10}{'-':>12}")


if __name__ == "__main__":
    main()
