"""Compare the numba and numpy convolution backends on simulator workloads.

Usage::

    python benchmarks/bench_backends.py [--samples N] [--widths 16,32,64,128]

Times the Monte-Carlo simulation of the three-layer diagnostic stack
(pointwise / 3x3x3 / pointwise on a 5x5x5 map) at several widths, plus a
strided mixed stack, on both backends.  The first numba call triggers (or
loads the cached) JIT compilation and is excluded from the timings.
"""

from __future__ import annotations

import argparse
import time

from e3dnas.arch import ConvLayer, Kernel3d, LayerKind, Shape3d
from e3dnas.oracle import SimConfig, simulate

POINTWISE = Kernel3d(1, 1, 1)


def diagnostic_stack(width: int) -> list[ConvLayer]:
    return [
        ConvLayer(LayerKind.POINTWISE, POINTWISE, width, width, layer_id="l1"),
        ConvLayer(LayerKind.REGULAR, Kernel3d(3, 3, 3), width, width, layer_id="l2"),
        ConvLayer(LayerKind.POINTWISE, POINTWISE, width, width, layer_id="l3"),
    ]


def strided_stack() -> tuple[list[ConvLayer], int, Shape3d]:
    layers = [
        ConvLayer(LayerKind.REGULAR, Kernel3d(1, 3, 3), 8, 32, spatial_stride=2, layer_id="s1"),
        ConvLayer(LayerKind.DEPTHWISE, Kernel3d(3, 3, 3), 32, 32, spatial_stride=2, layer_id="s2"),
        ConvLayer(LayerKind.POINTWISE, POINTWISE, 32, 64, layer_id="s3"),
    ]
    return layers, 8, Shape3d(13, 33, 33)


def time_backend(layers, in_ch, shape, samples, backend) -> tuple[float, float]:
    warm = SimConfig(samples=2, seed=0, input_channels=in_ch, input_shape=shape)
    simulate(layers, warm, backend=backend)
    cfg = SimConfig(samples=samples, seed=1, input_channels=in_ch, input_shape=shape)
    start = time.perf_counter()
    report = simulate(layers, cfg, backend=backend)
    return time.perf_counter() - start, report.relative_error


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--samples", type=int, default=500)
    parser.add_argument("--widths", default="16,32,64,128")
    args = parser.parse_args()
    widths = [int(w) for w in args.widths.split(",")]

    print(f"{'workload':<22}{'numba':>10}{'numpy':>10}{'numba/numpy':>14}")
    for width in widths:
        layers = diagnostic_stack(width)
        shape = Shape3d(5, 5, 5)
        t_nb, _ = time_backend(layers, width, shape, args.samples, "numba")
        t_np, _ = time_backend(layers, width, shape, args.samples, "numpy")
        print(f"{'diagnostic C=' + str(width):<22}{t_nb:>9.2f}s{t_np:>9.2f}s{t_nb / t_np:>13.2f}x")
    layers, in_ch, shape = strided_stack()
    t_nb, _ = time_backend(layers, in_ch, shape, args.samples, "numba")
    t_np, _ = time_backend(layers, in_ch, shape, args.samples, "numpy")
    print(f"{'strided mixed':<22}{t_nb:>9.2f}s{t_np:>9.2f}s{t_nb / t_np:>13.2f}x")
    print(f"\n{args.samples} draws per workload; ratios > 1 mean the numpy (BLAS) path is faster.")


if __name__ == "__main__":
    main()
