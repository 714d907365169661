"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the two kernels on their own and one full coverage replication, with
each backend swapped into ``mvopl.kernels``. Also checks the backends agree.
"""
import argparse
import timeit

import numpy as np

from mvopl import _pykernels, kernels
from mvopl.simulation import CoverageConfig, _coverage_replication

try:
    from mvopl import _kernels
except ImportError:
    _kernels = None


def use(backend):
    kernels.diag_gauss_logpdf = backend.diag_gauss_logpdf
    kernels.weight_summary = backend.weight_summary


def best(stmt, repeat, number):
    return min(timeit.repeat(stmt, repeat=repeat, number=number)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e .` first")

    rng = np.random.default_rng(0)
    backends = {"compiled": _kernels, "python": _pykernels}
    print(f"{'case':<34}{'compiled':>12}{'python':>12}{'speedup':>9}")
    for n in (16, 256, 4096, 65536):
        actions = rng.standard_normal((n, 5))
        mean, sig = np.full(5, 0.5), np.full(5, 0.25)
        log_w = rng.normal(0, 3, n)
        rewards = rng.poisson(0.05, n).astype(np.float64)
        number = max(1, 200_000 // n)
        for name, call in (
            ("diag_gauss_logpdf", lambda b: b.diag_gauss_logpdf(actions, mean, sig)),
            ("weight_summary", lambda b: b.weight_summary(log_w, rewards)),
        ):
            ref, alt = call(_kernels), call(_pykernels)
            np.testing.assert_allclose(np.asarray(ref), np.asarray(alt), rtol=1e-10)
            t = {k: best(lambda: call(b), args.repeat, number) for k, b in backends.items()}
            print(f"{name + f' N={n}':<34}{t['compiled'] * 1e6:>10.1f}us"
                  f"{t['python'] * 1e6:>10.1f}us{t['python'] / t['compiled']:>8.1f}x")

    config = CoverageConfig(1, sample_sizes=tuple(2**k for k in range(3, 11)), replications=2)
    t, results = {}, {}
    for name, backend in backends.items():
        use(backend)
        results[name] = _coverage_replication((config, 0))
        t[name] = best(lambda: _coverage_replication((config, 0)), args.repeat, 3)
    use(_kernels)
    np.testing.assert_allclose(results["compiled"], results["python"], rtol=1e-9)
    print(f"{'coverage replication (N<=2^10)':<34}{t['compiled'] * 1e3:>10.1f}ms"
          f"{t['python'] * 1e3:>10.1f}ms{t['python'] / t['compiled']:>8.1f}x")


if __name__ == "__main__":
    main()
