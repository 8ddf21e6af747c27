"""Compare the compiled and pure-Python curve kernels.

    python3 benchmarks/bench_pairing.py [--repeat N]

Both kernels run the same seeded workload; their outputs are compared
before any timing is reported.
"""

import argparse
import random
import time

from scproto.primitives import _pairing_py

try:
    from scproto.primitives import _pairing_core
except ImportError:
    _pairing_core = None


def workload(kernel, seed=1, n=20):
    rng = random.Random(seed)
    q = _pairing_py.Q_ORDER
    g = None
    x = 1
    while g is None:
        pt = kernel.lift_x(x)
        if pt is not None:
            g = kernel.g1_mul(_pairing_py.COFACTOR, pt)
        x += 1
    out = []
    for _ in range(n):
        a = kernel.g1_mul(rng.randrange(1, q), g)
        b = kernel.g1_mul(rng.randrange(1, q), g)
        e = kernel.pair(a, b)
        out.append((a, b, kernel.gt_pow(e, rng.randrange(1, q))))
    return out


def timed(kernel, repeat):
    best = float("inf")
    result = None
    for _ in range(repeat):
        start = time.perf_counter()
        result = workload(kernel)
        best = min(best, time.perf_counter() - start)
    return best, result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)

    t_py, r_py = timed(_pairing_py, args.repeat)
    print(f"python   {t_py * 1000:9.2f} ms")
    if _pairing_core is None:
        print("compiled kernel not built; nothing to compare")
        return 0
    t_c, r_c = timed(_pairing_core, args.repeat)
    if r_c != r_py:
        print("MISMATCH between kernels")
        return 1
    print(f"compiled {t_c * 1000:9.2f} ms")
    print(f"speedup  {t_py / t_c:9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
