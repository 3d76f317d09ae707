"""Compiled versus pure-Python sampler kernel: microseconds per full Gibbs sweep.

Usage::

    python3 benchmarks/bench_kernels.py [--iterations N] [--models AR1,AR4&VL]

Each model is fitted to one realistic replicate (all in-sample individuals
plus one new individual). The same seed drives both backends, and the script
reports the largest absolute difference in the retained offset draws as a
sanity check that the kernels agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from serorecency.mcmc.problem import Tuning, build_problem
from serorecency.mcmc.sampler import _allocate, available_backends, init_state, kernel_class
from serorecency.simgen import realistic_config, simulate_dataset
from serorecency.study import model_spec_for


def time_backend(backend, dataset, model, iterations, seed=1):
    pb = build_problem(dataset, model)
    state = init_state(dataset, model, np.random.default_rng(seed))
    kern = kernel_class(backend)(pb, state, Tuning.initial(pb), np.random.default_rng(seed + 1))
    burn = iterations // 2
    out = _allocate(pb, iterations - burn, False)
    t0 = time.perf_counter()
    kern.run(iterations, adapt_window=burn, burn_in=burn, out=out)
    return (time.perf_counter() - t0) / iterations * 1e6, out["tau"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--models", default="AR1,AR4,VL,AR4&VL,AR1&AR4")
    a = ap.parse_args(argv)
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled kernel not built; run `python3 setup.py build_ext --inplace` first")
    cfg = realistic_config()
    print(f"{'model':10s} {'n':>4s} " + " ".join(f"{b + ' us/it':>16s}" for b in backends) + f" {'speedup':>8s} {'max |dtau|':>11s}")
    for name in a.models.split(","):
        ds = simulate_dataset(cfg, 0, name).with_new_individual(1)
        model = model_spec_for(name)
        res = {b: time_backend(b, ds, model, a.iterations) for b in backends}
        cols = " ".join(f"{res[b][0]:16.1f}" for b in backends)
        if len(res) == 2:
            speed = res["python"][0] / res["compiled"][0]
            diff = float(np.max(np.abs(res["python"][1] - res["compiled"][1])))
            print(f"{name:10s} {len(ds.individuals):4d} {cols} {speed:8.1f}x {diff:11.2e}")
        else:
            print(f"{name:10s} {len(ds.individuals):4d} {cols}")


if __name__ == "__main__":
    main()
