"""Speed comparison of the numba and numpy kernel backends.

Times the hot kernels (convolution forward/backward, maxpool forward)
on the reference 64x64 layer sizes. The numba path gets an untimed
warm-up call per kernel so JIT compilation never pollutes the numbers.
If numba is not importable the script reports numpy alone.

Run:

    python3 benchmarks/bench_kernels.py [--batch 32] [--repeats 7]
"""

import argparse
import time

import numpy as np

from mebauth.kernels import numba_backend, numpy_backend


def timed(fn, args, repeats: int) -> tuple[float, float]:
    """Mean and std of wall seconds over repeats (one untimed warm-up)."""
    fn(*args)
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        samples.append(time.perf_counter() - start)
    arr = np.asarray(samples)
    return float(arr.mean()), float(arr.std())


def layer_cases(batch: int, rng: np.random.Generator):
    """(name, kernel-name, args) on the two reference conv/pool layers."""
    cases = []
    for tag, in_maps, side, out_maps in (("conv1 64px", 1, 64, 32), ("conv2 29px", 32, 29, 64)):
        x = rng.random((batch, in_maps, side, side))
        filters = rng.random((out_maps, in_maps, 7, 7)) - 0.5
        biases = rng.random(out_maps) - 0.5
        out_side = side - 6
        d_out = rng.random((batch, out_maps, out_side, out_side))
        cases.append((f"{tag} forward", "conv_forward", (x, filters, biases)))
        cases.append((f"{tag} backward", "conv_backward", (x, filters, d_out)))
        pool_in = rng.random((batch, out_maps, out_side, out_side))
        cases.append((f"pool {out_side}px forward", "maxpool_forward", (pool_in,)))
    return cases


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    backends = [("numpy", numpy_backend)]
    if numba_backend is not None:
        backends.append(("numba", numba_backend))
    else:
        print("numba backend not importable; timing numpy only")

    rng = np.random.default_rng(0)
    cases = layer_cases(args.batch, rng)

    print(f"batch {args.batch}, {args.repeats} repeats, times in ms")
    header = f"{'kernel':<24}" + "".join(f"{name:>18}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label, kernel, kargs in cases:
        means = []
        row = f"{label:<24}"
        for _, mod in backends:
            mean, std = timed(getattr(mod, kernel), kargs, args.repeats)
            means.append(mean)
            row += f"{mean * 1e3:10.2f} ±{std * 1e3:5.2f}"
        if len(means) == 2:
            row += f"{means[0] / means[1]:9.2f}x"
        print(row)

    # agreement spot check: same inputs, both backends, small tolerance
    if len(backends) == 2:
        x = rng.random((4, 1, 16, 16))
        filters = rng.random((3, 1, 5, 5)) - 0.5
        biases = rng.random(3) - 0.5
        a = numpy_backend.conv_forward(x, filters, biases)
        b = numba_backend.conv_forward(x, filters, biases)
        gap = float(np.abs(a - b).max())
        print(f"cross-backend conv agreement: max abs gap {gap:.2e}")
        assert gap < 1e-10


if __name__ == "__main__":
    main()
