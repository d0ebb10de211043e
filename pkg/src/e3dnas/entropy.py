"""Analytic entropy scores for convolutional architectures.

A bias-free convolutional network with independently Gaussian-initialized
weights maps unit-variance Gaussian inputs to a final feature map whose
per-element variance is the product, over layers, of

    kernel_volume * effective_in_channels * weight_variance

(effective_in_channels is 1 for depthwise layers).  The log of that
variance is the information-capacity proxy used to rank architectures.

Two metrics are provided:

* ``homo``: the plain log-variance sum.  It treats every kernel direction
  the same, so it barely distinguishes kernels of similar volume placed at
  different depths.
* ``st``: each layer's product additionally carries a spatio-temporal
  refinement factor, the negated log cosine distance between the layer's
  input feature-map size vector (T, H, W) and its kernel size vector.
  Kernels shaped like their feature map (wide kernels on wide maps,
  temporally extended kernels once spatial extents have shrunk) score
  higher, which is what makes the metric sensitive to where a kernel is
  placed along the depth of the network.

The default log bases were fixed by a one-time calibration against the
published score of the small preset (see the project README): base 10 for
the outer per-layer log, natural log inside the refinement factor.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .arch import (
    ArchitectureError,
    ConvLayer,
    LayerKind,
    NetworkSpec,
    Shape3d,
    flatten,
    propagate_layer_shapes,
)


class LogBase(str, Enum):
    NATURAL = "e"
    BASE10 = "10"


class Metric(str, Enum):
    HOMO = "homo"
    ST = "st"


def _log(values: np.ndarray, base: LogBase) -> np.ndarray:
    return np.log(values) if base is LogBase.NATURAL else np.log10(values)


@dataclass(frozen=True, slots=True)
class ScoreConfig:
    """Knobs shared by both metrics.

    ``epsilon`` clamps the cosine distance away from zero; with integer
    shapes and kernels exact parallelism only occurs for degenerate inputs
    (e.g. a 1x1x1 kernel on a 1x1x1 map), but the clamp keeps the score
    finite there.  ``refine_pointwise`` applies the refinement factor to
    pointwise layers too (the calibrated default); switching it off leaves
    their refinement at exactly 1.
    """

    log_base: LogBase = LogBase.BASE10
    refinement_log_base: LogBase = LogBase.NATURAL
    epsilon: float = 1e-6
    include_classifier: bool = False
    refine_pointwise: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.epsilon < 1:
            raise ArchitectureError(f"epsilon must be in (0, 1), got {self.epsilon!r}")


DEFAULT_SCORE_CONFIG = ScoreConfig()


@dataclass(frozen=True, slots=True)
class LayerTerm:
    layer_id: str
    kernel_volume: int
    effective_in_channels: int
    refinement: float
    term: float


@dataclass(frozen=True, slots=True)
class ScoreBreakdown:
    metric: Metric
    log_base: LogBase
    per_layer: tuple[LayerTerm, ...]
    total: float


def running_total(terms: np.ndarray) -> float:
    """Left-to-right float sum, so totals are reproducible bit for bit."""
    total = 0.0
    for term in terms:
        total += float(term)
    return total


def _volumes_channels(layers: Sequence[ConvLayer]) -> tuple[np.ndarray, np.ndarray]:
    volumes = np.array([layer.kernel.volume for layer in layers], dtype=np.float64)
    channels = np.array([layer.effective_in_channels for layer in layers], dtype=np.float64)
    return volumes, channels


def log_variance_terms(
    layers: Sequence[ConvLayer],
    weight_std: float = 1.0,
    log_base: LogBase = LogBase.BASE10,
) -> np.ndarray:
    """Per-layer log(kernel_volume * effective_in_channels * weight_std**2).

    Summed over layers this is the log variance of the final feature map
    under Gaussian initialization; the Monte-Carlo simulator checks the
    same expression, so both callers share this code path.
    """
    volumes, channels = _volumes_channels(layers)
    return _log(volumes * channels * np.float64(weight_std) ** 2, log_base)


def refinement_factors(
    shapes: Sequence[Shape3d],
    kernels: Sequence[tuple[int, int, int]],
    log_base: LogBase = LogBase.NATURAL,
    epsilon: float = 1e-6,
) -> np.ndarray:
    """Vectorized refinement: -log(max(epsilon, 1 - cos(S, K)))."""
    s = np.array([shape.as_tuple() for shape in shapes], dtype=np.float64)
    k = np.array(kernels, dtype=np.float64)
    cosine = (s * k).sum(axis=1) / (np.linalg.norm(s, axis=1) * np.linalg.norm(k, axis=1))
    distance = np.maximum(epsilon, 1.0 - cosine)
    return -_log(distance, log_base)


def refinement(
    shape: Shape3d,
    kernel,
    log_base: LogBase = LogBase.NATURAL,
    epsilon: float = 1e-6,
) -> float:
    """Refinement factor for one (feature-map size, kernel size) pair.

    Positive whenever the two vectors are not parallel; parallel pairs hit
    the epsilon clamp and return -log(epsilon).
    """
    kernel_tuple = kernel.as_tuple() if hasattr(kernel, "as_tuple") else tuple(kernel)
    return float(refinement_factors([shape], [kernel_tuple], log_base, epsilon)[0])


def _homo_terms(layers: Sequence[ConvLayer], config: ScoreConfig) -> np.ndarray:
    return log_variance_terms(layers, weight_std=1.0, log_base=config.log_base)


def _st_terms(
    layers: Sequence[ConvLayer],
    input_shape: Shape3d,
    config: ScoreConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (per-layer terms, per-layer refinement factors)."""
    layer_shapes = propagate_layer_shapes(layers, input_shape)
    refined = refinement_factors(
        [ls.input for ls in layer_shapes],
        [layer.kernel.as_tuple() for layer in layers],
        config.refinement_log_base,
        config.epsilon,
    )
    if not config.refine_pointwise:
        pointwise = np.array([layer.kind is LayerKind.POINTWISE for layer in layers])
        refined = np.where(pointwise, 1.0, refined)
    volumes, channels = _volumes_channels(layers)
    return _log(volumes * channels * refined, config.log_base), refined


def _breakdown(
    metric: Metric,
    layers: Sequence[ConvLayer],
    terms: np.ndarray,
    refined: np.ndarray,
    config: ScoreConfig,
) -> ScoreBreakdown:
    per_layer = tuple(
        LayerTerm(layer.layer_id, layer.kernel.volume, layer.effective_in_channels, float(r), float(t))
        for layer, r, t in zip(layers, refined, terms)
    )
    return ScoreBreakdown(metric, config.log_base, per_layer, running_total(terms))


def homo_score_layers(
    layers: Sequence[ConvLayer], config: ScoreConfig = DEFAULT_SCORE_CONFIG
) -> ScoreBreakdown:
    terms = _homo_terms(layers, config)
    return _breakdown(Metric.HOMO, layers, terms, np.ones(len(layers)), config)


def homo_score(net: NetworkSpec, config: ScoreConfig = DEFAULT_SCORE_CONFIG) -> ScoreBreakdown:
    """Homogeneous entropy score of a network's flattened backbone."""
    return homo_score_layers(flatten(net, config.include_classifier), config)


def st_score_layers(
    layers: Sequence[ConvLayer],
    input_shape: Shape3d,
    config: ScoreConfig = DEFAULT_SCORE_CONFIG,
) -> ScoreBreakdown:
    terms, refined = _st_terms(layers, input_shape, config)
    return _breakdown(Metric.ST, layers, terms, refined, config)


def st_score(net: NetworkSpec, config: ScoreConfig = DEFAULT_SCORE_CONFIG) -> ScoreBreakdown:
    """Spatio-temporal entropy score of a network.

    Classifier layers, when included, are scored on the 1x1x1 pooled map,
    where the pointwise kernel is parallel to the map and the refinement
    hits the epsilon clamp; the calibrated default excludes them.
    """
    layers = flatten(net, include_classifier=False)
    terms, refined = _st_terms(layers, net.input_shape, config)
    if config.include_classifier:
        tail = flatten(net, include_classifier=True)[len(layers):]
        tail_terms, tail_refined = _st_terms(tail, Shape3d(1, 1, 1), config)
        layers = layers + tail
        terms = np.concatenate([terms, tail_terms])
        refined = np.concatenate([refined, tail_refined])
    return _breakdown(Metric.ST, layers, terms, refined, config)


def st_total(net: NetworkSpec, config: ScoreConfig = DEFAULT_SCORE_CONFIG) -> float:
    """Search fast path: the spatio-temporal score without breakdown objects.

    Bit-identical to ``st_score(net, config).total``.
    """
    layers = flatten(net, include_classifier=False)
    terms, _ = _st_terms(layers, net.input_shape, config)
    if config.include_classifier:
        tail = flatten(net, include_classifier=True)[len(layers):]
        tail_terms, _ = _st_terms(tail, Shape3d(1, 1, 1), config)
        terms = np.concatenate([terms, tail_terms])
    return running_total(terms)


def score(net: NetworkSpec, metric: Metric, config: ScoreConfig = DEFAULT_SCORE_CONFIG) -> ScoreBreakdown:
    return homo_score(net, config) if metric is Metric.HOMO else st_score(net, config)
