"""Benchmark the numba and numpy kernel backends against each other.

Times raw im2col/col2im plus a full sweep iteration (forward + backward +
optimizer step) on the desk-scale plain network. Run directly:

    python benchmarks/bench_kernels.py [--size 128] [--iters 30]
"""

import argparse
import importlib
import os
import statistics
import sys
import time


def _reload_with_backend(backend: str):
    os.environ["NRTW_KERNELS"] = backend
    for name in [m for m in sys.modules if m == "nrtw" or m.startswith("nrtw.")]:
        del sys.modules[name]
    import nrtw.kernels as kernels

    importlib.reload(kernels)
    return kernels


def bench_backend(backend: str, size: int, iters: int) -> dict:
    import numpy as np

    kernels = _reload_with_backend(backend)
    assert kernels.backend_name() == backend

    from nrtw.autodiff import Tensor, backward, mse_loss
    from nrtw.networks import NetworkConfig, build_network, forward
    from nrtw.optim import sgd_momentum_state, sgd_momentum_step

    rng = np.random.default_rng(0)
    x = rng.standard_normal((1, 16, size, size)).astype(np.float32)

    # raw kernels
    cols = kernels.im2col(x, 3, 1, 1)  # warm up / compile
    t0 = time.perf_counter()
    for _ in range(iters):
        cols = kernels.im2col(x, 3, 1, 1)
    im2col_ms = (time.perf_counter() - t0) / iters * 1e3

    kernels.col2im(cols, x.shape, 3, 1, 1)
    t0 = time.perf_counter()
    for _ in range(iters):
        kernels.col2im(cols, x.shape, 3, 1, 1)
    col2im_ms = (time.perf_counter() - t0) / iters * 1e3

    # full sweep iteration on the plain net
    cfg = NetworkConfig(kind="plain", num_layers=8, hidden_channels=16)
    params = build_network(cfg, seed=0)
    state = sgd_momentum_state(params, 1e-2, 0.9)
    xin = Tensor(rng.random((1, 1, size, size), dtype=np.float32))
    target = Tensor(rng.random((1, 1, size, size), dtype=np.float32))

    def iteration():
        loss = mse_loss(forward(cfg, params, xin), target)
        grads = backward(loss, params)
        sgd_momentum_step(params, grads, state)

    iteration()  # warm up
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        iteration()
        samples.append((time.perf_counter() - t0) * 1e3)

    return {
        "im2col_ms": im2col_ms,
        "col2im_ms": col2im_ms,
        "iteration_ms_median": statistics.median(samples),
        "iteration_ms_mean": statistics.fmean(samples),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=128)
    parser.add_argument("--iters", type=int, default=30)
    args = parser.parse_args()

    results = {}
    for backend in ("numpy", "numba"):
        try:
            results[backend] = bench_backend(backend, args.size, args.iters)
        except ImportError as exc:
            print(f"{backend}: unavailable ({exc})")

    print(f"\n{args.size}x{args.size} plain net, {args.iters} timed iterations")
    header = f"{'backend':<8} {'im2col ms':>10} {'col2im ms':>10} {'iter ms (median)':>17} {'iter ms (mean)':>15}"
    print(header)
    print("-" * len(header))
    for backend, r in results.items():
        print(
            f"{backend:<8} {r['im2col_ms']:>10.3f} {r['col2im_ms']:>10.3f} "
            f"{r['iteration_ms_median']:>17.2f} {r['iteration_ms_mean']:>15.2f}"
        )


if __name__ == "__main__":
    main()
