"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--sizes 1024 8192 65536] [--repeat 50]

Part one calls both implementations side by side in this process.  Part two
runs a short split-step evolution in two subprocesses, one with
NLS_LAB_DISABLE_NUMBA=1, so the env-flag path is what gets measured.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from nls_lab import _accel

EVOLVE_SNIPPET = """
import time, warnings
from nls_lab import _accel
from nls_lab.nls_solver import Coefficient, NonlinearitySpec, SolverConfig, evolve, evolve_pair
from nls_lab.spectral_core import ProbeSpec, gaussian_probe, make_grid
g = make_grid({n}, 64.0)
a = Coefficient.gaussian_bump(g, 1.0, 1.0)
b = Coefficient.gaussian_bump(g, 1.1, 1.0)
u0 = gaussian_probe(g, ProbeSpec(0.5, 0.0, 0.05))
cfg = SolverConfig(0.001, 0.5)
evolve(u0, NonlinearitySpec.power(a, 3.0), SolverConfig(0.001, 0.01))  # warm-up / compile
evolve_pair(u0, NonlinearitySpec.power(a, 3.0), NonlinearitySpec.power(b, 3.0),
            SolverConfig(0.001, 0.01))
t = time.perf_counter(); evolve(u0, NonlinearitySpec.power(a, 3.0), cfg)
t1 = time.perf_counter() - t
t = time.perf_counter()
evolve_pair(u0, NonlinearitySpec.power(a, 3.0), NonlinearitySpec.power(b, 3.0), cfg)
t2 = time.perf_counter() - t
print(_accel.BACKEND, t1, t2)
"""


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    backends = [b for b in ("numpy", "numba") if b in _accel.IMPLEMENTATIONS]
    print(f"{'kernel':<22}{'n':>8}" + "".join(f"{b + ' [us]':>14}" for b in backends)
          + f"{'speed-up':>10}")
    for n in sizes:
        u = rng.normal(size=n) + 1j * rng.normal(size=n)
        d = 1e-6 * (rng.normal(size=n) + 1j * rng.normal(size=n))
        c1 = rng.normal(size=n)
        c2 = c1 + 1e-3 * rng.normal(size=n)
        xs = np.linspace(-10, 10, n)
        w = rng.normal(size=n)
        cases = {
            "kick": lambda f: f(u, c1, 3.0, 1e-3),
            "kick_pair": lambda f: f(u.copy(), d.copy(), c1, c2, 3.0, 1e-3),
            "gaussian_moment_sum": lambda f: f(xs, w, 0.3, 2.0),
        }
        for name, call in cases.items():
            times = []
            for b in backends:
                fn = _accel.IMPLEMENTATIONS[b][name]
                call(fn)  # compile outside the timing
                times.append(min(timeit.repeat(lambda: call(fn), number=1, repeat=repeat)) * 1e6)
            speed = times[0] / times[-1] if len(times) > 1 else float("nan")
            print(f"{name:<22}{n:>8}" + "".join(f"{t:>14.1f}" for t in times) + f"{speed:>10.2f}")


def bench_evolve(n):
    print(f"\nsplit-step evolution, n={n}, 500 steps (seconds)")
    print(f"{'backend':<10}{'evolve':>10}{'pair':>10}")
    for flag in ("1", "0"):
        env = dict(os.environ, NLS_LAB_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", EVOLVE_SNIPPET.format(n=n)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"{out[0]:<10}{float(out[1]):>10.3f}{float(out[2]):>10.3f}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[1024, 8192, 65536])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--evolve-n", type=int, default=4096)
    args = ap.parse_args(argv)
    print(f"active backend: {_accel.BACKEND}\n")
    bench_kernels(args.sizes, args.repeat)
    bench_evolve(args.evolve_n)


if __name__ == "__main__":
    main()
