"""Time the numba kernels against the numpy/Python fallbacks.

Kernel timings run in-process (both variants are importable side by side);
the end-to-end estimator timing is repeated in a subprocess with
ONEBIT_MIMO_NUMBA=0 so the whole package uses the fallback.

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from onebit_mimo import kernels
from onebit_mimo._accel import USE_NUMBA
from onebit_mimo.model import make_dictionary, make_zc_training
from onebit_mimo.threshold import build_bands

END_TO_END = """
import time, numpy as np
from onebit_mimo.harness import EstimatorSpec, ExperimentConfig, run_experiment
from onebit_mimo.model import SystemConfig
cfg = ExperimentConfig(system=SystemConfig(16, 16, 20, 4, 64, 64, seed=1), snr_db=(10.0,), trials=%d,
                       estimators=(EstimatorSpec("bms"), EstimatorSpec("bms-htp", "grahtp")))
run_experiment(cfg.with_overrides(trials=1))  # warm-up / compile
t = time.perf_counter()
run_experiment(cfg)
print(time.perf_counter() - t)
"""


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    t = rng.normal(0.0, 6.0, 2 * 16 * 20 * 50)
    d = make_dictionary(16, 16, 64, 64)
    bands = build_bands(d, make_zc_training(16, 20))
    absz = rng.random(d.B)
    x = np.zeros(d.B, complex)
    order = np.argsort(-absz, kind="stable")
    compiled_bms = kernels._bms_select_jit
    compiled_be = kernels._be_select_jit
    # trigger compilation outside the timed region
    kernels.log_ncdf_cf(t[:4])
    kernels.inverse_mills_cf(t[:4])
    compiled_bms(absz, x, order, bands.indptr, bands.indices, 8)
    compiled_be(absz, order, bands.indptr, bands.indices, 8)
    cases = [
        ("log_ncdf", lambda: kernels.log_ncdf_cf(t), lambda: kernels.log_ncdf_numpy(t)),
        ("inverse_mills", lambda: kernels.inverse_mills_cf(t), lambda: kernels.inverse_mills_numpy(t)),
        (
            "bms_select (s=8)",
            lambda: compiled_bms(absz, x, order, bands.indptr, bands.indices, 8),
            lambda: kernels._bms_select_py(absz, x, order, bands.indptr, bands.indices, 8),
        ),
        (
            "be_select (s=8)",
            lambda: compiled_be(absz, order, bands.indptr, bands.indices, 8),
            lambda: kernels._be_select_py(absz, order, bands.indptr, bands.indices, 8),
        ),
    ]
    print(f"{'kernel':<20s} {'numba [ms]':>11s} {'fallback [ms]':>14s} {'speedup':>8s}")
    for name, fast, slow in cases:
        a, b = best(fast, repeat) * 1e3, best(slow, repeat) * 1e3
        print(f"{name:<20s} {a:11.3f} {b:14.3f} {b / a:8.1f}x")


def end_to_end(trials):
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, ONEBIT_MIMO_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END % trials], env=env, capture_output=True, text=True, check=True)
        out[flag] = float(res.stdout.strip().splitlines()[-1])
    print(f"\nend-to-end, {trials} desk trials x 2 BMS estimators:")
    print(f"  numba   {out['1']:.2f} s\n  numpy   {out['0']:.2f} s   ({out['0'] / out['1']:.2f}x)")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--trials", type=int, default=20)
    args = p.parse_args()
    if not USE_NUMBA:
        print("numba disabled in this process; the 'numba' column shows the uncompiled loops")
    kernel_table(args.repeat)
    end_to_end(args.trials)


if __name__ == "__main__":
    main()
