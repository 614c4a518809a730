"""Time the numba kernels against their pure-numpy twins.

Usage::

    python3 benchmarks/bench_kernels.py [--rows 20000] [--repeat 5] [--threads 4]

Each kernel is run once untimed (numba compilation / cache load), then
``--repeat`` times; the best wall time is reported.  Outputs of the two
backends are compared for bit equality on every run.
"""
import argparse
import time

import numpy as np

from hammock import _accel, kernels
from hammock.binning import fit_binning, onehot_rows, quantize
from hammock.trees import random_ensemble


def best_time(fn, args, repeat):
    out = fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rows, seed):
    rng = np.random.default_rng(seed)
    ens = random_ensemble(seed, 10, 100, 6, "multiclass", num_classes=5)
    fl = ens._flat
    X = rng.random((rows, 10))
    route_args = (fl["feature"], fl["threshold"], fl["left"], fl["right"], fl["roots"], X)
    leaves = kernels.route_leaves_numpy(*route_args)
    values = fl["value"][leaves]

    Xq = rng.normal(size=(rows, 16))
    spec = fit_binning(Xq, 50)
    onehot = onehot_rows(quantize(Xq, spec), spec)
    W = rng.normal(size=(spec.total_onehot_width, 256))
    bias = rng.normal(size=256)
    dout = rng.normal(size=(rows, 256))
    return [
        ("route_leaves", route_args),
        ("accumulate_rows", (values, fl["class_matrix"], fl["base"])),
        ("onehot_matmul", (onehot, W, bias)),
        ("onehot_grad", (onehot, dout, spec.total_onehot_width)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=None, help="numba threads (default: env/1)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not _accel.USE_NUMBA:
        print("numba backend disabled (HAMMOCK_DISABLE_NUMBA set or numba missing); "
              "nothing to compare")
        return 0
    _accel.set_threads(args.threads or _accel.threads_from_env())

    print(f"rows={args.rows} repeat={args.repeat}")
    print(f"{'kernel':<18}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  identical")
    for name, kargs in cases(args.rows, args.seed):
        t_nb, out_nb = best_time(getattr(kernels, f"{name}_numba"), kargs, args.repeat)
        t_np, out_np = best_time(getattr(kernels, f"{name}_numpy"), kargs, args.repeat)
        same = np.array_equal(out_nb, out_np)
        print(f"{name:<18}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>8.1f}x  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
