#!/usr/bin/env python3
"""Compare the compiled and numpy rasterization kernels.

Renders identical scenes through both backends, reports per-call timings for
the forward and backward passes, and checks that the forward outputs agree
bit for bit.
"""
import argparse
import time

import numpy as np

from stillsplat.splat import Camera, GaussianCloud, get_backend, render, render_backward


def make_scene(seed: int, n: int, size: int):
    rng = np.random.default_rng(seed)
    cloud = GaussianCloud(
        means=rng.normal(0, 0.4, (n, 3)),
        log_scales=np.log(rng.uniform(0.05, 0.25, (n, 3))),
        quats=rng.normal(size=(n, 4)),
        opacity_logits=rng.uniform(-1.0, 2.0, n),
        color_logits=rng.normal(0, 1, (n, 3)),
    )
    cloud.normalize_quats()
    cam = Camera.look_at([0, 0.4, -3.0], [0, 0, 0], [0, 1, 0], 55.0, size, size)
    return cloud, cam


def time_backend(backend: str, cloud, cam, grad, repeats: int):
    render(cloud, cam, kernel_backend=backend)  # warmup
    t0 = time.perf_counter()
    for _ in range(repeats):
        out = render(cloud, cam, kernel_backend=backend)
    fwd = (time.perf_counter() - t0) / repeats

    out = render(cloud, cam, retain=True, kernel_backend=backend)
    render_backward(out, grad)
    t0 = time.perf_counter()
    for _ in range(repeats):
        render_backward(out, grad)
    bwd = (time.perf_counter() - t0) / repeats
    return fwd, bwd, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--gaussians", type=int, default=600)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cloud, cam = make_scene(args.seed, args.gaussians, args.size)
    grad = np.random.default_rng(1).normal(0, 1, (args.size, args.size, 3))

    backends = ["python"]
    try:
        get_backend("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled kernels not built; benchmarking the numpy fallback only")

    results = {}
    outputs = {}
    for backend in backends:
        fwd, bwd, out = time_backend(backend, cloud, cam, grad, args.repeats)
        results[backend] = (fwd, bwd)
        outputs[backend] = out
        print(f"{backend:>7}: forward {fwd * 1000:8.2f} ms   backward {bwd * 1000:8.2f} ms")

    if len(backends) == 2:
        f_ratio = results["python"][0] / results["cython"][0]
        b_ratio = results["python"][1] / results["cython"][1]
        print(f"speedup: forward {f_ratio:.1f}x, backward {b_ratio:.1f}x")
        same = np.array_equal(outputs["cython"].color.data, outputs["python"].color.data)
        print(f"forward outputs bit-identical: {same}")


if __name__ == "__main__":
    main()
