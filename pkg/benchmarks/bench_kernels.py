"""Compare the compiled and pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Times the beta error over a grid of (n, alpha, q, p) and an exact clique
search for small constant-weight codes, on each available backend.
"""

import argparse
import math
import random
import timeit

from unlearn_verify import kernels
from unlearn_verify.capacity import _adjacency, _words


def beta_grid(size=2000, seed=5):
    rng = random.Random(seed)
    out = []
    for _ in range(size):
        n = rng.randint(1, 400)
        q, p = sorted((rng.random(), rng.random()))
        out.append((n, math.log(10 ** rng.uniform(-12, -1)), q, p))
    return out


def bench_beta(mod, grid):
    for args in grid:
        mod.log_beta(*args)


def bench_clique(mod, instances):
    for rows in instances:
        mod.BitGraph(rows).search((1 << len(rows)) - 1, 0, 0, 10 ** 8)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("compiled", kernels.compiled_backend))
    else:
        print("compiled extension not built; timing the Python backend only")

    grid = beta_grid()
    cliques = [_adjacency(_words(n, w), n, d) for n, d, w in ((9, 4, 3), (10, 6, 4), (8, 4, 4))]
    tasks = [("log_beta x%d" % len(grid), bench_beta, grid),
             ("clique A(9,4,3) A(10,6,4) A(8,4,4)", bench_clique, cliques)]

    print(f"{'task':<36}{'backend':<10}{'best of %d (s)' % args.repeat:>16}")
    for label, fn, data in tasks:
        times = {}
        for name, mod in backends:
            times[name] = min(timeit.repeat(lambda: fn(mod, data), number=1, repeat=args.repeat))
            print(f"{label:<36}{name:<10}{times[name]:>16.4f}", flush=True)
        if "compiled" in times:
            print(f"{'':<36}{'speedup':<10}{times['python'] / times['compiled']:>15.1f}x")


if __name__ == "__main__":
    main()
