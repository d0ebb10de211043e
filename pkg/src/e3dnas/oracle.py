"""Monte-Carlo forward-inference simulator over Gaussian inputs and weights.

This is the independent check of the analytic variance propagation: for a
stack of bias-free convolutions with weights drawn from N(0, weight_std^2)
and inputs from N(0, 1), the per-element variance of the final feature map
should equal the product over layers of
``kernel_volume * effective_in_channels * weight_std^2``.

Each draw freshly samples inputs and every layer's weights, runs the dense
convolutions exactly (float32 tensors, float64 moment accumulation), and
pools the output-element variance across draws and elements.  Zero padding
makes edge elements sum fewer live terms than the closed form assumes, so
the default pools only interior elements, those whose cumulative receptive
field lies inside the original input; ``padding="valid"`` reaches the same
elements by construction.

Draw streams come from a counter-based Philox generator: draws are
processed in fixed chunks of 256, each chunk seeded by jumping the base
stream, so results are reproducible and chunks are independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .arch import ArchitectureError, ConvLayer, LayerKind, NetworkSpec, Shape3d, flatten
from .backends import ConvGeometry, active_backend, conv3d_draws, conv_geometry
from .entropy import LogBase, log_variance_terms, running_total

_CHUNK = 256
_RNG_NAME = f"philox4x64 (jumped per {_CHUNK}-draw chunk)"


class SimulationCapError(RuntimeError):
    """A tensor in the simulation would exceed the configured element cap."""


@dataclass(frozen=True, slots=True)
class SimConfig:
    """Simulation protocol: draw count, seeding, input geometry.

    ``input_channels``/``input_shape`` may be left as None when simulating
    a full :class:`NetworkSpec`, which carries its own input; they are
    required for bare layer sequences.
    """

    samples: int
    seed: int
    input_channels: int | None = None
    input_shape: Shape3d | None = None
    weight_std: float = 1.0
    padding: str = "same"
    pooling: str = "interior"
    log_base: LogBase = LogBase.BASE10
    max_elements_per_draw: int = 1 << 24

    def __post_init__(self) -> None:
        if self.samples < 2:
            raise ArchitectureError(f"samples must be >= 2 (variance needs two draws), got {self.samples}")
        if self.weight_std < 0:
            raise ArchitectureError(f"weight_std must be non-negative, got {self.weight_std}")
        if self.padding not in ("same", "valid"):
            raise ArchitectureError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.pooling not in ("interior", "all"):
            raise ArchitectureError(f"pooling must be 'interior' or 'all', got {self.pooling!r}")
        if self.max_elements_per_draw < 1:
            raise ArchitectureError("max_elements_per_draw must be positive")


@dataclass(frozen=True, slots=True)
class SimReport:
    samples_used: int
    pooled_elements: int
    empirical_variance: float
    analytic_variance: float
    empirical_log_variance: float
    analytic_log_variance: float
    relative_error: float
    final_mean: float
    final_mean_stderr: float
    log_base: LogBase
    padding: str
    pooling: str
    backend: str
    rng: str


class MomentReport(NamedTuple):
    mean: float
    mean_stderr: float
    variance: float
    analytic_variance: float


def _resolve_layers(net, cfg: SimConfig) -> tuple[tuple[ConvLayer, ...], int, Shape3d]:
    if isinstance(net, NetworkSpec):
        return flatten(net), net.input_channels, net.input_shape
    layers = tuple(net)
    if not layers:
        raise ArchitectureError("cannot simulate an empty layer sequence")
    if cfg.input_channels is None or cfg.input_shape is None:
        raise ArchitectureError("input_channels and input_shape are required for bare layer sequences")
    if layers[0].in_channels != cfg.input_channels:
        raise ArchitectureError(
            f"first layer expects {layers[0].in_channels} channels, config says {cfg.input_channels}"
        )
    return layers, cfg.input_channels, cfg.input_shape


def _check_chain(layers: Sequence[ConvLayer]) -> None:
    for prev, layer in zip(layers, layers[1:]):
        if layer.in_channels != prev.out_channels:
            raise ArchitectureError(
                f"channel chain broken between {prev.layer_id or 'layer'} ({prev.out_channels}) "
                f"and {layer.layer_id or 'layer'} ({layer.in_channels})"
            )


def _interior_margins(
    margins: tuple[tuple[int, int], ...],
    in_extents: tuple[int, int, int],
    geometry: ConvGeometry,
    kernel: tuple[int, int, int],
    strides: tuple[int, int, int],
) -> tuple[tuple[int, int], ...]:
    """Propagate per-axis (before, after) contamination margins one layer."""
    new: list[tuple[int, int]] = []
    for axis in range(3):
        before, after = margins[axis]
        n_in = in_extents[axis]
        n_out = geometry.out[axis]
        pad = geometry.pad[axis]
        k = kernel[axis]
        s = strides[axis]
        first_ok = -(-(before + pad) // s)
        last_ok = (n_in - after - k + pad) // s
        new.append((min(first_ok, n_out), max(n_out - 1 - last_ok, 0)))
    return tuple(new)


def _cap_check(name: str, elements: int, cap: int) -> None:
    if elements > cap:
        raise SimulationCapError(f"{name}: {elements} elements per draw exceeds the cap of {cap}")


class _Plan(NamedTuple):
    geometries: tuple[ConvGeometry, ...]
    final_slices: tuple[slice, slice, slice]
    pooled_per_draw: int


def _plan(layers, input_channels, input_shape, cfg: SimConfig) -> _Plan:
    _check_chain(layers)
    extents = input_shape.as_tuple()
    _cap_check("input tensor", input_channels * int(np.prod(extents)), cfg.max_elements_per_draw)
    margins: tuple[tuple[int, int], ...] = ((0, 0), (0, 0), (0, 0))
    geometries: list[ConvGeometry] = []
    for layer in layers:
        name = layer.layer_id or "layer"
        try:
            geo = conv_geometry(layer, extents, cfg.padding)
        except ArchitectureError as exc:
            raise ArchitectureError(str(exc), path=name) from exc
        kernel = layer.kernel.as_tuple()
        strides = (layer.temporal_stride, layer.spatial_stride, layer.spatial_stride)
        margins = _interior_margins(margins, extents, geo, kernel, strides)
        weight_elems = layer.kernel.volume * (layer.in_channels // layer.groups) * layer.out_channels
        _cap_check(f"{name} weights", weight_elems, cfg.max_elements_per_draw)
        _cap_check(f"{name} output", layer.out_channels * int(np.prod(geo.out)), cfg.max_elements_per_draw)
        geometries.append(geo)
        extents = geo.out
    if cfg.pooling == "interior":
        lo = [m[0] for m in margins]
        hi = [extents[i] - margins[i][1] for i in range(3)]
        if any(hi[i] <= lo[i] for i in range(3)):
            raise ArchitectureError(
                f"no interior elements survive (final extents {extents}, margins {margins}); "
                "use a larger input or smaller kernels"
            )
        slices = (slice(lo[0], hi[0]), slice(lo[1], hi[1]), slice(lo[2], hi[2]))
        pooled = (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2])
    else:
        slices = (slice(None), slice(None), slice(None))
        pooled = int(np.prod(extents))
    return _Plan(tuple(geometries), slices, pooled * layers[-1].out_channels)


class _Moments(NamedTuple):
    count: int
    mean: float
    variance: float
    draw_means: np.ndarray


def _run_sim(layers, input_channels, input_shape, cfg: SimConfig, backend: str) -> _Moments:
    plan = _plan(layers, input_channels, input_shape, cfg)
    base = np.random.Philox(key=cfg.seed)
    std = np.float32(cfg.weight_std)
    total = 0
    total_sum = 0.0
    total_sumsq = 0.0
    draw_means: list[np.ndarray] = []
    t, h, w = input_shape.as_tuple()
    for chunk_index, lo in enumerate(range(0, cfg.samples, _CHUNK)):
        draws = min(_CHUNK, cfg.samples - lo)
        rng = np.random.Generator(base.jumped(chunk_index))
        x = rng.standard_normal((draws, input_channels, t, h, w), dtype=np.float32)
        for layer, geo in zip(layers, plan.geometries):
            if layer.kind is LayerKind.DEPTHWISE:
                shape = (draws, layer.out_channels) + layer.kernel.as_tuple()
            else:
                shape = (draws, layer.out_channels, layer.in_channels) + layer.kernel.as_tuple()
            weights = rng.standard_normal(shape, dtype=np.float32)
            if cfg.weight_std != 1.0:
                weights *= std
            x = conv3d_draws(x, weights, layer, geo, backend)
        final = x[:, :, plan.final_slices[0], plan.final_slices[1], plan.final_slices[2]]
        values = final.astype(np.float64)
        total += values.size
        total_sum += float(values.sum())
        total_sumsq += float(np.square(values).sum())
        draw_means.append(values.mean(axis=(1, 2, 3, 4)))
    mean = total_sum / total
    variance = total_sumsq / total - mean * mean
    return _Moments(total, mean, variance, np.concatenate(draw_means))


def _log_scalar(value: float, base: LogBase) -> float:
    return float(np.log(value) if base is LogBase.NATURAL else np.log10(value))


def simulate(net, cfg: SimConfig, backend: str | None = None) -> SimReport:
    """Estimate the final feature-map variance of a network by simulation.

    ``net`` may be a :class:`NetworkSpec` (its backbone is simulated) or a
    bare sequence of :class:`ConvLayer`.  The report compares the pooled
    empirical variance against the closed-form product, in the configured
    log base; ``analytic_log_variance`` is computed by the same code path
    as the homogeneous entropy score, so the two agree bit for bit when
    ``weight_std`` is 1.
    """
    if cfg.weight_std == 0:
        raise ArchitectureError("simulate needs weight_std > 0 (the log variance is undefined at 0)")
    layers, input_channels, input_shape = _resolve_layers(net, cfg)
    resolved_backend = active_backend(backend)
    moments = _run_sim(layers, input_channels, input_shape, cfg, resolved_backend)
    analytic_log = running_total(log_variance_terms(layers, cfg.weight_std, cfg.log_base))
    empirical_log = _log_scalar(moments.variance, cfg.log_base)
    analytic_variance = float(
        np.prod([layer.kernel.volume * layer.effective_in_channels * cfg.weight_std**2 for layer in layers])
    )
    if analytic_log == 0.0:
        relative = 0.0 if empirical_log == 0.0 else float("inf")
    else:
        relative = abs(empirical_log - analytic_log) / abs(analytic_log)
    draw_means = moments.draw_means
    stderr = float(draw_means.std(ddof=1) / np.sqrt(len(draw_means)))
    return SimReport(
        samples_used=cfg.samples,
        pooled_elements=moments.count,
        empirical_variance=moments.variance,
        analytic_variance=analytic_variance,
        empirical_log_variance=empirical_log,
        analytic_log_variance=analytic_log,
        relative_error=relative,
        final_mean=moments.mean,
        final_mean_stderr=stderr,
        log_base=cfg.log_base,
        padding=cfg.padding,
        pooling=cfg.pooling,
        backend=resolved_backend,
        rng=_RNG_NAME,
    )


def moment_check(layer: ConvLayer, cfg: SimConfig, backend: str | None = None) -> MomentReport:
    """First two moments of one layer's output under the Gaussian protocol.

    The empirical mean should sit within a few standard errors of zero and
    the variance near ``kernel_volume * effective_in_channels *
    weight_std^2``.  ``weight_std=0`` is allowed here and collapses the
    variance to exactly zero.
    """
    if cfg.input_channels is None or cfg.input_shape is None:
        raise ArchitectureError("moment_check requires input_channels and input_shape")
    if layer.in_channels != cfg.input_channels:
        raise ArchitectureError(
            f"layer expects {layer.in_channels} channels, config says {cfg.input_channels}"
        )
    resolved_backend = active_backend(backend)
    moments = _run_sim([layer], cfg.input_channels, cfg.input_shape, cfg, resolved_backend)
    analytic = layer.kernel.volume * layer.effective_in_channels * cfg.weight_std**2
    stderr = float(moments.draw_means.std(ddof=1) / np.sqrt(len(moments.draw_means)))
    return MomentReport(moments.mean, stderr, moments.variance, float(analytic))
