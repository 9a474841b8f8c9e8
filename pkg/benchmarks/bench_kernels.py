"""Time the compiled and pure-Python kernels on the same random instances.

Usage: python3 benchmarks/bench_kernels.py [--sizes 20 50 100] [--repeat 3]
"""

import argparse
import time

import numpy as np

from wotlab._kernels import available_backends, get_backend


def _instance(rng, n):
    C = rng.random((n, n))
    a = rng.dirichlet(np.ones(n))
    b = rng.dirichlet(np.ones(n))
    return C, a, b


def _best_of(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def run(sizes, repeat, seed):
    backends = available_backends()
    rows = []
    for n in sizes:
        C, a, b = _instance(np.random.default_rng(seed + n), n)
        lg = np.log(C + 0.1)
        res = {}
        for name in backends:
            ts, sk = get_backend(name)
            t_ts, out_ts = _best_of(lambda: ts(C, a, b), repeat)
            t_sk, out_sk = _best_of(lambda: sk(lg, np.log(a), np.log(b), np.zeros(n), np.zeros(n), 1e-10, 100000),
                                    repeat)
            res[name] = (t_ts, t_sk, float(np.sum(out_ts[0] * C)), out_sk[2])
        rows.append((n, res))
    return backends, rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[20, 50, 100])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    backends, rows = run(args.sizes, args.repeat, args.seed)
    print(f"backends: {', '.join(backends)}")
    print(f"{'n':>5} {'kernel':<18} " + " ".join(f"{b + ' [s]':>12}" for b in backends) + f" {'speedup':>8}")
    for n, res in rows:
        for k, label in ((0, "transport_simplex"), (1, "sinkhorn_log")):
            times = [res[b][k] for b in backends]
            speed = f"{times[0] / times[-1]:8.1f}" if len(times) > 1 else f"{'-':>8}"
            print(f"{n:>5} {label:<18} " + " ".join(f"{t:12.4f}" for t in times) + f" {speed}")
        if len(backends) > 1:
            costs = [res[b][2] for b in backends]
            sweeps = [res[b][3] for b in backends]
            print(f"{'':>5} agreement: |cost diff| {abs(costs[0] - costs[1]):.1e}, sweeps {sweeps}")


if __name__ == "__main__":
    main()
