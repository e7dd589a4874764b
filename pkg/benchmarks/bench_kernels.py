"""Compare the compiled and pure-Python kernels on representative workloads.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Workloads: lookahead LPs of the storage model (K = 13 and 25 periods) and
2e5 tabular Q-learning steps on the discretized storage MDP.  Both backends
must return identical results; the script checks that before timing.
"""
import argparse
import time

import numpy as np

from seqdec import _kernels
from seqdec.exact import q_learning
from seqdec.lp.lookahead import assemble_lookahead, solve_lookahead
from seqdec.storage.model import StorageConfig
from seqdec.storage.tabular import discretized_storage_mdp


def lp_workload(K, n=20):
    cfg = StorageConfig()
    rng = np.random.default_rng(K)
    probs = [assemble_lookahead(rng.uniform(0, 100), cfg, rng.uniform(0, 8, K), rng.uniform(2, 8, K),
                                rng.uniform(15, 45, K)) for _ in range(n)]

    def run():
        return [solve_lookahead(p).objective for p in probs]

    return run


def q_workload(steps=200_000):
    mdp, _, _ = discretized_storage_mdp(StorageConfig(), 11, (20.0, 30.0, 40.0), gamma=0.95)

    def run():
        return q_learning(mdp, steps, lambda n: 10.0 / (10.0 + n), 0.2, seed=3).q

    return run


def best_time(fn, repeat):
    out, best = None, np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels.compiled_backend is None:
        print("compiled kernels not built; only the Python backend is available")
    workloads = [("lookahead LP, K=13 (x20)", lp_workload(13)), ("lookahead LP, K=25 (x20)", lp_workload(25)),
                 ("Q-learning, 2e5 steps", q_workload())]
    print(f"{'workload':28s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for name, fn in workloads:
        with _kernels.use_backend("python"):
            tp, ref = best_time(fn, args.repeat)
        if _kernels.compiled_backend is None:
            print(f"{name:28s} {tp:10.4f} {'-':>10s} {'-':>8s}")
            continue
        with _kernels.use_backend("cython"):
            tc, out = best_time(fn, args.repeat)
        if not np.array_equal(np.asarray(ref), np.asarray(out)):
            raise SystemExit(f"{name}: backends disagree")
        print(f"{name:28s} {tp:10.4f} {tc:10.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
