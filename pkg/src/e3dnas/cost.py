"""Multiply-accumulate and parameter counting for architecture specs.

One MAC is counted as one FLOP; the doubled (multiply+add) figure is also
reported since both conventions are in common use.  Pooling, normalization
and activation layers cost nothing here: the analyzed network space is the
bare convolutional backbone.  Classifier parameters are tallied separately
and classifier MACs are excluded from the total (they run on a 1x1x1 map
and are negligible either way).
"""

from __future__ import annotations

from dataclasses import dataclass

from .arch import ConvLayer, NetworkSpec, flatten, propagate_shapes


@dataclass(frozen=True, slots=True)
class LayerCost:
    layer_id: str
    macs: int
    params: int


@dataclass(frozen=True, slots=True)
class CostReport:
    per_layer: tuple[LayerCost, ...]
    total_macs: int
    total_params: int
    classifier_params: int
    gflops: float
    gflops_doubled: float

    @property
    def total_params_with_classifier(self) -> int:
        return self.total_params + self.classifier_params


def layer_macs(layer: ConvLayer, out_numel: int) -> int:
    return layer.kernel.volume * (layer.in_channels // layer.groups) * layer.out_channels * out_numel


def layer_params(layer: ConvLayer) -> int:
    return layer.kernel.volume * (layer.in_channels // layer.groups) * layer.out_channels


def cost(net: NetworkSpec) -> CostReport:
    """Per-layer and total MAC/parameter counts for the backbone."""
    layers = flatten(net)
    shapes = propagate_shapes(net)
    per_layer = tuple(
        LayerCost(layer.layer_id, layer_macs(layer, shape.output.numel), layer_params(layer))
        for layer, shape in zip(layers, shapes)
    )
    total_macs = sum(entry.macs for entry in per_layer)
    total_params = sum(entry.params for entry in per_layer)
    classifier_params = sum(
        layer_params(layer) for layer in flatten(net, include_classifier=True)[len(layers):]
    )
    return CostReport(
        per_layer=per_layer,
        total_macs=total_macs,
        total_params=total_params,
        classifier_params=classifier_params,
        gflops=total_macs / 1e9,
        gflops_doubled=2 * total_macs / 1e9,
    )


def total_macs(net: NetworkSpec) -> int:
    """Budget-check fast path: total backbone MACs without report objects."""
    layers = flatten(net)
    shapes = propagate_shapes(net)
    return sum(layer_macs(layer, shape.output.numel) for layer, shape in zip(layers, shapes))
