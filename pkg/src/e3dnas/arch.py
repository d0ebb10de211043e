"""Architecture IR for 3D depthwise-separable video CNNs.

The family is MobileNet-styled: a strided stem convolution, stages of
inverted-bottleneck blocks (pointwise expand -> depthwise 3D conv ->
pointwise project), a pointwise head convolution, and a two-layer
classifier applied after global average pooling.  Networks are immutable
values and everything in this module is a pure function of them, so specs
can be shared freely between concurrent workers.

Feature maps follow the same-padding convention: each temporal or spatial
extent maps to ceil(extent / stride).  Stages are numbered from 2 in layer
ids ("stage2.block1.dw", ...), the stem being layer 1, which is the usual
numbering for this architecture family.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Mapping, Sequence

SCHEMA_VERSION = 1

CHANNEL_MIN = 8
CHANNEL_MAX = 640
CHANNEL_STEP = 8


class ArchitectureError(ValueError):
    """A network description violates a structural invariant."""

    def __init__(self, message: str, path: str = "") -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SchemaError(ArchitectureError):
    """A document does not match the architecture JSON schema."""


def round_channels(value: float) -> int:
    """Round to the searchable channel grid: multiples of 8, clamped to [8, 640]."""
    stepped = int(round(value / CHANNEL_STEP)) * CHANNEL_STEP
    return max(CHANNEL_MIN, min(CHANNEL_MAX, stepped))


def _require_positive_int(value: Any, name: str) -> None:
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ArchitectureError(f"{name} must be a positive integer, got {value!r}")


@dataclass(frozen=True, slots=True)
class Kernel3d:
    """A convolution kernel extent (t, h, w); every extent is odd and >= 1."""

    t: int
    h: int
    w: int

    def __post_init__(self) -> None:
        for name, extent in (("t", self.t), ("h", self.h), ("w", self.w)):
            _require_positive_int(extent, f"kernel extent {name}")
            if extent % 2 == 0:
                raise ArchitectureError(f"kernel extent {name}={extent} must be odd")

    @property
    def volume(self) -> int:
        return self.t * self.h * self.w

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.t, self.h, self.w)


POINTWISE_KERNEL = Kernel3d(1, 1, 1)


@dataclass(frozen=True, slots=True)
class Shape3d:
    """A feature-map size (frames, height, width)."""

    frames: int
    height: int
    width: int

    def __post_init__(self) -> None:
        for name in ("frames", "height", "width"):
            _require_positive_int(getattr(self, name), name)

    @property
    def numel(self) -> int:
        return self.frames * self.height * self.width

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.frames, self.height, self.width)


class LayerKind(str, Enum):
    REGULAR = "regular"
    DEPTHWISE = "depthwise"
    POINTWISE = "pointwise"


@dataclass(frozen=True, slots=True)
class ConvLayer:
    """One 3D convolution, bias-free.

    The effective input channel count, as seen by the variance propagation
    and the scores, is 1 for depthwise layers (each output channel reads a
    single input channel) and ``in_channels`` otherwise.
    """

    kind: LayerKind
    kernel: Kernel3d
    in_channels: int
    out_channels: int
    spatial_stride: int = 1
    temporal_stride: int = 1
    layer_id: str = ""

    def __post_init__(self) -> None:
        _require_positive_int(self.in_channels, "in_channels")
        _require_positive_int(self.out_channels, "out_channels")
        if self.spatial_stride not in (1, 2):
            raise ArchitectureError(f"spatial_stride must be 1 or 2, got {self.spatial_stride!r}")
        if self.temporal_stride not in (1, 2):
            raise ArchitectureError(f"temporal_stride must be 1 or 2, got {self.temporal_stride!r}")
        if self.kind is LayerKind.POINTWISE and self.kernel.as_tuple() != (1, 1, 1):
            raise ArchitectureError(f"pointwise layer must use a 1x1x1 kernel, got {self.kernel.as_tuple()}")
        if self.kind is LayerKind.DEPTHWISE and self.in_channels != self.out_channels:
            raise ArchitectureError(
                f"depthwise layer needs in_channels == out_channels, got {self.in_channels} != {self.out_channels}"
            )

    @property
    def groups(self) -> int:
        return self.in_channels if self.kind is LayerKind.DEPTHWISE else 1

    @property
    def effective_in_channels(self) -> int:
        return 1 if self.kind is LayerKind.DEPTHWISE else self.in_channels


def _check_searchable_channels(value: int, name: str) -> None:
    _require_positive_int(value, name)
    if value % CHANNEL_STEP != 0 or not (CHANNEL_MIN <= value <= CHANNEL_MAX):
        raise ArchitectureError(
            f"{name}={value} must be a multiple of {CHANNEL_STEP} in [{CHANNEL_MIN}, {CHANNEL_MAX}]"
        )


@dataclass(frozen=True, slots=True)
class Block:
    """One inverted-bottleneck block: expand -> depthwise -> project.

    Bottleneck and output widths are stored explicitly; ``expansion_ratio``
    is the nominal ratio recorded by the last ratio mutation, if any (the
    built-in presets carry widths that are not reachable from the mutation
    ratio set, so the width is authoritative).
    """

    dw_kernel: Kernel3d
    bottleneck_channels: int
    out_channels: int
    downsample: bool = False
    expansion_ratio: float | None = None

    def __post_init__(self) -> None:
        _check_searchable_channels(self.bottleneck_channels, "bottleneck_channels")
        _check_searchable_channels(self.out_channels, "out_channels")
        if self.expansion_ratio is not None and not self.expansion_ratio > 0:
            raise ArchitectureError(f"expansion_ratio must be positive, got {self.expansion_ratio!r}")


@dataclass(frozen=True, slots=True)
class Stage:
    """A run of blocks sharing one output resolution; never empty."""

    blocks: tuple[Block, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.blocks, tuple):
            object.__setattr__(self, "blocks", tuple(self.blocks))
        if len(self.blocks) < 1:
            raise ArchitectureError("stage must contain at least one block")
        for i, block in enumerate(self.blocks[1:], start=2):
            if block.downsample:
                raise ArchitectureError(f"only the first block of a stage may downsample (block {i} does)")

    @property
    def downsample(self) -> bool:
        return self.blocks[0].downsample


@dataclass(frozen=True, slots=True)
class Classifier:
    """Two pointwise layers applied after global pooling.

    Classifier widths are not searchable and are exempt from the channel
    grid (class counts are arbitrary).
    """

    hidden_channels: int = 2048
    num_classes: int = 174

    def __post_init__(self) -> None:
        _require_positive_int(self.hidden_channels, "hidden_channels")
        _require_positive_int(self.num_classes, "num_classes")


@dataclass(frozen=True, slots=True)
class NetworkSpec:
    """A full architecture: input, stem, stages, head, classifier.

    ``frame_sampling_stride`` documents how the input clip was sampled and
    has no effect on shapes, cost, or scores.  ``annotations`` is a
    free-form string map for auxiliary training-time components (squeeze-
    excitation, norm layers, ...) that the analytic machinery ignores.
    """

    input_shape: Shape3d
    stem: ConvLayer
    stages: tuple[Stage, ...]
    head_channels: int
    classifier: Classifier = Classifier()
    input_channels: int = 3
    frame_sampling_stride: int = 1
    annotations: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.stages, tuple):
            object.__setattr__(self, "stages", tuple(self.stages))
        _require_positive_int(self.input_channels, "input_channels")
        _require_positive_int(self.frame_sampling_stride, "frame_sampling_stride")
        if self.stem.in_channels != self.input_channels:
            raise ArchitectureError(
                f"stem.in_channels={self.stem.in_channels} must equal input_channels={self.input_channels}"
            )
        _check_searchable_channels(self.stem.out_channels, "stem.out_channels")
        _check_searchable_channels(self.head_channels, "head_channels")

    @property
    def total_blocks(self) -> int:
        return sum(len(stage.blocks) for stage in self.stages)

    @property
    def depth(self) -> int:
        """Number of backbone conv layers (classifier excluded)."""
        return 2 + 3 * self.total_blocks


def flatten(net: NetworkSpec, include_classifier: bool = False) -> tuple[ConvLayer, ...]:
    """List every conv layer in forward order.

    Order is stem, then each block's expand/depthwise/project triple, then
    the head conv.  Classifier layers are appended only when
    ``include_classifier`` is set; by default scores and costs cover the
    feature-extraction backbone.
    """
    layers: list[ConvLayer] = [replace(net.stem, layer_id="stem")]
    in_ch = net.stem.out_channels
    for si, stage in enumerate(net.stages):
        for bi, block in enumerate(stage.blocks):
            prefix = f"stage{si + 2}.block{bi + 1}"
            mid = block.bottleneck_channels
            layers.append(
                ConvLayer(LayerKind.POINTWISE, POINTWISE_KERNEL, in_ch, mid, layer_id=f"{prefix}.expand")
            )
            layers.append(
                ConvLayer(
                    LayerKind.DEPTHWISE,
                    block.dw_kernel,
                    mid,
                    mid,
                    spatial_stride=2 if block.downsample else 1,
                    layer_id=f"{prefix}.dw",
                )
            )
            layers.append(
                ConvLayer(
                    LayerKind.POINTWISE, POINTWISE_KERNEL, mid, block.out_channels, layer_id=f"{prefix}.project"
                )
            )
            in_ch = block.out_channels
    layers.append(ConvLayer(LayerKind.POINTWISE, POINTWISE_KERNEL, in_ch, net.head_channels, layer_id="head"))
    if include_classifier:
        cls = net.classifier
        layers.append(
            ConvLayer(
                LayerKind.POINTWISE, POINTWISE_KERNEL, net.head_channels, cls.hidden_channels,
                layer_id="classifier.fc1",
            )
        )
        layers.append(
            ConvLayer(
                LayerKind.POINTWISE, POINTWISE_KERNEL, cls.hidden_channels, cls.num_classes,
                layer_id="classifier.fc2",
            )
        )
    return tuple(layers)


@dataclass(frozen=True, slots=True)
class LayerShapes:
    layer_id: str
    input: Shape3d
    output: Shape3d


def _strided_extent(extent: int, stride: int) -> int:
    return -(-extent // stride)  # ceil division, same-padding rule


def propagate_layer_shapes(layers: Sequence[ConvLayer], input_shape: Shape3d) -> tuple[LayerShapes, ...]:
    """Same-padding shape propagation over an explicit layer sequence."""
    result: list[LayerShapes] = []
    current = input_shape
    for layer in layers:
        out = Shape3d(
            _strided_extent(current.frames, layer.temporal_stride),
            _strided_extent(current.height, layer.spatial_stride),
            _strided_extent(current.width, layer.spatial_stride),
        )
        if min(out.as_tuple()) < 1:
            raise ArchitectureError(f"output shape {out.as_tuple()} collapses below 1", path=layer.layer_id)
        result.append(LayerShapes(layer.layer_id, current, out))
        current = out
    return tuple(result)


def propagate_shapes(net: NetworkSpec, include_classifier: bool = False) -> tuple[LayerShapes, ...]:
    """Per-layer input/output feature-map sizes for a full network.

    Classifier layers, when included, run on the 1x1x1 map left by global
    pooling.
    """
    layers = flatten(net, include_classifier=False)
    result = list(propagate_layer_shapes(layers, net.input_shape))
    if include_classifier:
        pooled = Shape3d(1, 1, 1)
        for tail in flatten(net, include_classifier=True)[len(layers):]:
            result.append(LayerShapes(tail.layer_id, pooled, pooled))
    return tuple(result)


# --- JSON serialization -----------------------------------------------------
#
# The document layout is fixed (canonical key order, schema version 1):
#   {version, input, stem, stages[], head, classifier, annotations}
# with kernels as 3-element arrays [t, h, w] and all channels as integers.


def to_json(net: NetworkSpec) -> str:
    doc = {
        "version": SCHEMA_VERSION,
        "input": {
            "channels": net.input_channels,
            "frames": net.input_shape.frames,
            "height": net.input_shape.height,
            "width": net.input_shape.width,
            "frame_sampling_stride": net.frame_sampling_stride,
        },
        "stem": {
            "kernel": list(net.stem.kernel.as_tuple()),
            "out_channels": net.stem.out_channels,
            "spatial_stride": net.stem.spatial_stride,
            "temporal_stride": net.stem.temporal_stride,
        },
        "stages": [
            {
                "blocks": [
                    {
                        "dw_kernel": list(block.dw_kernel.as_tuple()),
                        "bottleneck_channels": block.bottleneck_channels,
                        "out_channels": block.out_channels,
                        "downsample": block.downsample,
                        **(
                            {"expansion_ratio": block.expansion_ratio}
                            if block.expansion_ratio is not None
                            else {}
                        ),
                    }
                    for block in stage.blocks
                ]
            }
            for stage in net.stages
        ],
        "head": {"out_channels": net.head_channels},
        "classifier": {
            "hidden_channels": net.classifier.hidden_channels,
            "num_classes": net.classifier.num_classes,
        },
        "annotations": dict(net.annotations),
    }
    return json.dumps(doc, indent=2) + "\n"


def _as_mapping(value: Any, path: str) -> Mapping[str, Any]:
    if not isinstance(value, dict):
        raise SchemaError(f"expected an object, got {type(value).__name__}", path=path)
    return value


def _as_list(value: Any, path: str) -> list[Any]:
    if not isinstance(value, list):
        raise SchemaError(f"expected an array, got {type(value).__name__}", path=path)
    return value


def _take(mapping: Mapping[str, Any], key: str, path: str) -> Any:
    if key not in mapping:
        raise SchemaError("missing required key", path=f"{path}.{key}" if path else key)
    return mapping[key]


def _no_unknown_keys(mapping: Mapping[str, Any], allowed: set[str], path: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise SchemaError(f"unknown key(s) {sorted(unknown)}", path=path)


def _as_int(value: Any, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise SchemaError(f"expected an integer, got {value!r}", path=path)
    return value


def _as_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise SchemaError(f"expected a boolean, got {value!r}", path=path)
    return value


def _as_kernel(value: Any, path: str) -> Kernel3d:
    items = _as_list(value, path)
    if len(items) != 3:
        raise SchemaError(f"kernel must be a 3-element array, got {len(items)} elements", path=path)
    t, h, w = (_as_int(item, f"{path}[{i}]") for i, item in enumerate(items))
    try:
        return Kernel3d(t, h, w)
    except ArchitectureError as exc:
        raise SchemaError(str(exc), path=path) from exc


def _parse_block(value: Any, path: str) -> Block:
    mapping = _as_mapping(value, path)
    _no_unknown_keys(
        mapping,
        {"dw_kernel", "bottleneck_channels", "out_channels", "downsample", "expansion_ratio"},
        path,
    )
    ratio = mapping.get("expansion_ratio")
    if ratio is not None and not isinstance(ratio, (int, float)):
        raise SchemaError(f"expected a number, got {ratio!r}", path=f"{path}.expansion_ratio")
    try:
        return Block(
            dw_kernel=_as_kernel(_take(mapping, "dw_kernel", path), f"{path}.dw_kernel"),
            bottleneck_channels=_as_int(_take(mapping, "bottleneck_channels", path), f"{path}.bottleneck_channels"),
            out_channels=_as_int(_take(mapping, "out_channels", path), f"{path}.out_channels"),
            downsample=_as_bool(_take(mapping, "downsample", path), f"{path}.downsample"),
            expansion_ratio=float(ratio) if ratio is not None else None,
        )
    except SchemaError:
        raise
    except ArchitectureError as exc:
        raise ArchitectureError(str(exc), path=path) from exc


def from_json(text: str) -> NetworkSpec:
    """Parse and validate an architecture document.

    Raises :class:`SchemaError` for malformed documents and
    :class:`ArchitectureError` for well-formed documents that violate an
    invariant; both name the offending field path.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    mapping = _as_mapping(doc, "")
    _no_unknown_keys(
        mapping, {"version", "input", "stem", "stages", "head", "classifier", "annotations"}, ""
    )
    version = _as_int(_take(mapping, "version", ""), "version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema version {version} (expected {SCHEMA_VERSION})", path="version")

    inp = _as_mapping(_take(mapping, "input", ""), "input")
    _no_unknown_keys(inp, {"channels", "frames", "height", "width", "frame_sampling_stride"}, "input")
    stem_doc = _as_mapping(_take(mapping, "stem", ""), "stem")
    _no_unknown_keys(stem_doc, {"kernel", "out_channels", "spatial_stride", "temporal_stride"}, "stem")
    head_doc = _as_mapping(_take(mapping, "head", ""), "head")
    _no_unknown_keys(head_doc, {"out_channels"}, "head")
    cls_doc = _as_mapping(_take(mapping, "classifier", ""), "classifier")
    _no_unknown_keys(cls_doc, {"hidden_channels", "num_classes"}, "classifier")

    annotations_doc = mapping.get("annotations", {})
    annotations = _as_mapping(annotations_doc, "annotations")
    for key, value in annotations.items():
        if not isinstance(value, str):
            raise SchemaError(f"annotation values must be strings, got {value!r}", path=f"annotations.{key}")

    stages: list[Stage] = []
    for si, stage_doc in enumerate(_as_list(_take(mapping, "stages", ""), "stages")):
        stage_path = f"stages[{si}]"
        stage_map = _as_mapping(stage_doc, stage_path)
        _no_unknown_keys(stage_map, {"blocks"}, stage_path)
        blocks = [
            _parse_block(block_doc, f"{stage_path}.blocks[{bi}]")
            for bi, block_doc in enumerate(_as_list(_take(stage_map, "blocks", stage_path), f"{stage_path}.blocks"))
        ]
        try:
            stages.append(Stage(tuple(blocks)))
        except ArchitectureError as exc:
            raise ArchitectureError(str(exc), path=stage_path) from exc

    input_channels = _as_int(_take(inp, "channels", "input"), "input.channels")
    input_shape = Shape3d(
        _as_int(_take(inp, "frames", "input"), "input.frames"),
        _as_int(_take(inp, "height", "input"), "input.height"),
        _as_int(_take(inp, "width", "input"), "input.width"),
    )
    stem = ConvLayer(
        LayerKind.REGULAR,
        _as_kernel(_take(stem_doc, "kernel", "stem"), "stem.kernel"),
        input_channels,
        _as_int(_take(stem_doc, "out_channels", "stem"), "stem.out_channels"),
        spatial_stride=_as_int(_take(stem_doc, "spatial_stride", "stem"), "stem.spatial_stride"),
        temporal_stride=_as_int(_take(stem_doc, "temporal_stride", "stem"), "stem.temporal_stride"),
    )
    return NetworkSpec(
        input_shape=input_shape,
        stem=stem,
        stages=tuple(stages),
        head_channels=_as_int(_take(head_doc, "out_channels", "head"), "head.out_channels"),
        classifier=Classifier(
            hidden_channels=_as_int(_take(cls_doc, "hidden_channels", "classifier"), "classifier.hidden_channels"),
            num_classes=_as_int(_take(cls_doc, "num_classes", "classifier"), "classifier.num_classes"),
        ),
        input_channels=input_channels,
        frame_sampling_stride=_as_int(_take(inp, "frame_sampling_stride", "input"), "input.frame_sampling_stride"),
        annotations=dict(annotations),
    )
