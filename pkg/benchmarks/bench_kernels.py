"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--sizes 784 128 10] [--batch 128] [--repeat 50]

Prints one row per (kernel, backend): best and median time per call, plus the
speed-up of the compiled backend over the fallback and the largest
elementwise difference between their results.
"""

import argparse
import statistics
import time

import numpy as np

from fedsim import _backend
from fedsim.nn import NetworkSpec, init_params


def timed(fn, repeat):
    fn()  # warm-up
    samples = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t)
    return min(samples), statistics.median(samples)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[784, 128, 10])
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--agencies", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=50)
    args = ap.parse_args()

    spec = NetworkSpec(tuple(args.sizes))
    values = init_params(spec, 0).values
    rng = np.random.default_rng(0)
    x = rng.random((args.batch, spec.input_size))
    y = rng.integers(0, spec.class_count, size=args.batch)
    stack = values + rng.normal(0, 0.01, size=(args.agencies, values.size))
    weights = np.ones(args.agencies)

    backends = _backend.available()
    print(f"network {spec.spec_hash}, batch {args.batch}, {args.agencies} models averaged; "
          f"default backend: {_backend.BACKEND}")
    if "compiled" not in backends:
        print("compiled backend not built; timing the fallback only")

    kernels = {
        "mlp_forward": lambda k: k.mlp_forward(values, spec.layer_sizes, x),
        "mlp_loss_grad": lambda k: k.mlp_loss_grad(values, spec.layer_sizes, x, y)[1],
        "weighted_average": lambda k: k.weighted_average(stack, weights),
    }
    print(f"{'kernel':<18}{'backend':<10}{'best ms':>10}{'median ms':>11}{'speed-up':>10}{'max |diff|':>12}")
    for name, call in kernels.items():
        results, best = {}, {}
        for bname, mod in sorted(backends.items()):
            results[bname] = call(mod)
            best[bname], med = timed(lambda: call(mod), args.repeat)
            speed = ""
            diff = ""
            if bname == "python" and "compiled" in best:
                speed = f"{best['python'] / best['compiled']:.2f}x"
                diff = f"{np.max(np.abs(results['python'] - results['compiled'])):.1e}"
            print(f"{name:<18}{bname:<10}{best[bname] * 1e3:>10.3f}{med * 1e3:>11.3f}"
                  f"{speed:>10}{diff:>12}")


if __name__ == "__main__":
    main()
