"""Convolution backends for the Monte-Carlo simulator.

Two interchangeable implementations of the batched dense 3D convolution:

* ``numba``: direct loops compiled with ``@njit(parallel=True)``, the
  default whenever numba imports cleanly.
* ``numpy``: sliding windows reshaped into batched matmuls (BLAS).

Select with the ``E3DNAS_BACKEND`` environment variable (``numba`` or
``numpy``) or per call via the ``backend=`` argument; the script
``benchmarks/bench_backends.py`` compares the two on the simulator's
workload.  Both produce the same convolution up to float32 summation
order.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np

from .arch import ArchitectureError, ConvLayer

BACKEND_ENV = "E3DNAS_BACKEND"
BACKENDS = ("numba", "numpy")

_NUMBA_MODULE = None
_NUMBA_FAILED = False


def _numba_kernels():
    global _NUMBA_MODULE, _NUMBA_FAILED
    if _NUMBA_MODULE is None and not _NUMBA_FAILED:
        try:
            from . import _kernels_numba

            _NUMBA_MODULE = _kernels_numba
        except ImportError as exc:  # pragma: no cover - depends on environment
            _NUMBA_FAILED = True
            warnings.warn(f"numba backend unavailable ({exc}); falling back to numpy", RuntimeWarning)
    return _NUMBA_MODULE


def active_backend(requested: str | None = None) -> str:
    """Resolve a backend name from the argument, the environment, or defaults."""
    name = requested or os.environ.get(BACKEND_ENV, "").strip().lower() or "numba"
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")
    if name == "numba" and _numba_kernels() is None:
        return "numpy"
    return name


@dataclass(frozen=True, slots=True)
class ConvGeometry:
    """Output extents and pads for one layer under one padding mode."""

    out: tuple[int, int, int]
    pad: tuple[int, int, int]
    pad_after: tuple[int, int, int]


def _axis_geometry(extent: int, kernel: int, stride: int, padding: str) -> tuple[int, int, int]:
    if padding == "same":
        out = -(-extent // stride)
        total = max((out - 1) * stride + kernel - extent, 0)
        return out, total // 2, total - total // 2
    if padding == "valid":
        if extent < kernel:
            raise ArchitectureError(f"valid padding needs extent >= kernel, got {extent} < {kernel}")
        return (extent - kernel) // stride + 1, 0, 0
    raise ValueError(f"unknown padding mode {padding!r}")


def conv_geometry(layer: ConvLayer, in_shape: tuple[int, int, int], padding: str) -> ConvGeometry:
    kt, kh, kw = layer.kernel.as_tuple()
    to, pt, at = _axis_geometry(in_shape[0], kt, layer.temporal_stride, padding)
    ho, ph, ah = _axis_geometry(in_shape[1], kh, layer.spatial_stride, padding)
    wo, pw, aw = _axis_geometry(in_shape[2], kw, layer.spatial_stride, padding)
    return ConvGeometry(out=(to, ho, wo), pad=(pt, ph, pw), pad_after=(at, ah, aw))


# Sub-batch budget for the numpy path's materialized window matrix (floats).
_WINDOW_BUDGET = 16_000_000


def _conv_numpy(x: np.ndarray, w: np.ndarray, depthwise: bool, strides, geometry: ConvGeometry) -> np.ndarray:
    st, ss = strides
    pt, ph, pw = geometry.pad
    at, ah, aw = geometry.pad_after
    if any((pt, ph, pw, at, ah, aw)):
        x = np.pad(x, ((0, 0), (0, 0), (pt, at), (ph, ah), (pw, aw)))
    kt, kh, kw = w.shape[-3], w.shape[-2], w.shape[-1]
    windows = np.lib.stride_tricks.sliding_window_view(x, (kt, kh, kw), axis=(2, 3, 4))
    windows = windows[:, :, ::st, ::ss, ::ss]
    d, ci, to, ho, wo = windows.shape[:5]
    if depthwise:
        flat = windows.reshape(d, ci, to * ho * wo, kt * kh * kw)
        out = np.einsum("dcpk,dck->dcp", flat, w.reshape(d, ci, -1), optimize=True)
        return np.ascontiguousarray(out.reshape(d, ci, to, ho, wo), dtype=np.float32)
    co = w.shape[1]
    positions = to * ho * wo
    taps = ci * kt * kh * kw
    wmat = w.reshape(d, co, taps).transpose(0, 2, 1)
    out = np.empty((d, co, to, ho, wo), dtype=np.float32)
    step = max(1, _WINDOW_BUDGET // max(1, positions * taps))
    for lo in range(0, d, step):
        hi = min(d, lo + step)
        block = windows[lo:hi].transpose(0, 2, 3, 4, 1, 5, 6, 7).reshape(hi - lo, positions, taps)
        out[lo:hi] = (block @ wmat[lo:hi]).transpose(0, 2, 1).reshape(hi - lo, co, to, ho, wo)
    return out


def conv3d_draws(
    x: np.ndarray,
    w: np.ndarray,
    layer: ConvLayer,
    geometry: ConvGeometry,
    backend: str,
) -> np.ndarray:
    """Convolve a batch of independent draws with per-draw weights.

    ``x`` is (draws, C_in, T, H, W) float32; ``w`` is
    (draws, C, kt, kh, kw) for depthwise layers and
    (draws, C_out, C_in, kt, kh, kw) otherwise.
    """
    depthwise = w.ndim == 5
    strides = (layer.temporal_stride, layer.spatial_stride)
    if backend == "numpy":
        return _conv_numpy(x, w, depthwise, strides, geometry)
    kernels = _numba_kernels()
    if kernels is None:
        return _conv_numpy(x, w, depthwise, strides, geometry)
    d = x.shape[0]
    co = w.shape[1]
    out = np.empty((d, co) + geometry.out, dtype=np.float32)
    fn = kernels.conv_depthwise if depthwise else kernels.conv_regular
    fn(
        np.ascontiguousarray(x),
        np.ascontiguousarray(w),
        out,
        strides[0],
        strides[1],
        geometry.pad[0],
        geometry.pad[1],
        geometry.pad[2],
    )
    return out
