"""Built-in architecture presets.

Compiled-in data, so tests and the CLI never depend on the filesystem.
``init-s`` is the small seed network used to start searches; ``e3d-s``,
``e3d-m`` and ``e3d-l`` are the published family members at roughly
1.9, 4.7 and 18.3 GMACs.
"""

from __future__ import annotations

from .arch import Block, Classifier, ConvLayer, Kernel3d, LayerKind, NetworkSpec, Shape3d, Stage

K133 = Kernel3d(1, 3, 3)
K155 = Kernel3d(1, 5, 5)
K333 = Kernel3d(3, 3, 3)


def _stage(kernel: Kernel3d, bottleneck: int, out: int, blocks: int, downsample: bool = True) -> Stage:
    first = Block(kernel, bottleneck, out, downsample=downsample)
    rest = Block(kernel, bottleneck, out, downsample=False)
    return Stage((first,) + (rest,) * (blocks - 1))


def _net(
    frames: int,
    side: int,
    frame_stride: int,
    stem_out: int,
    stages: tuple[Stage, ...],
    head: int,
    num_classes: int,
) -> NetworkSpec:
    return NetworkSpec(
        input_shape=Shape3d(frames, side, side),
        stem=ConvLayer(LayerKind.REGULAR, K133, 3, stem_out, spatial_stride=2),
        stages=stages,
        head_channels=head,
        classifier=Classifier(hidden_channels=2048, num_classes=num_classes),
        input_channels=3,
        frame_sampling_stride=frame_stride,
    )


def initial_small(num_classes: int = 174) -> NetworkSpec:
    """Seed network for 1.9 GMAC searches: five single-block stages."""
    return _net(
        13, 160, 6, 24,
        (
            _stage(K333, 48, 24, 1),
            _stage(K333, 96, 48, 1),
            _stage(K333, 192, 96, 1),
            _stage(K333, 192, 96, 1, downsample=False),
            _stage(K333, 384, 192, 1),
        ),
        head=512,
        num_classes=num_classes,
    )


def e3d_s(num_classes: int = 174) -> NetworkSpec:
    # Head width follows the M/L pattern: equal to the last stage's bottleneck width.
    return _net(
        13, 160, 6, 24,
        (
            _stage(K155, 32, 24, 3),
            _stage(K333, 96, 48, 6),
            _stage(K333, 176, 120, 6),
            _stage(K333, 176, 120, 6, downsample=False),
            _stage(K333, 384, 256, 6),
        ),
        head=384,
        num_classes=num_classes,
    )


def e3d_m(num_classes: int = 174) -> NetworkSpec:
    return _net(
        16, 224, 5, 24,
        (
            _stage(K155, 32, 24, 3),
            _stage(K333, 96, 64, 6),
            _stage(K333, 176, 120, 6),
            _stage(K333, 176, 120, 6, downsample=False),
            _stage(K333, 464, 184, 6),
        ),
        head=464,
        num_classes=num_classes,
    )


def e3d_l(num_classes: int = 174) -> NetworkSpec:
    return _net(
        16, 312, 5, 24,
        (
            _stage(K155, 32, 24, 3),
            _stage(K333, 120, 48, 13),
            _stage(K333, 176, 120, 13),
            _stage(K333, 176, 120, 13, downsample=False),
            _stage(K333, 480, 192, 13),
        ),
        head=480,
        num_classes=num_classes,
    )


PRESET_BUILDERS = {
    "init-s": initial_small,
    "e3d-s": e3d_s,
    "e3d-m": e3d_m,
    "e3d-l": e3d_l,
}

PRESET_NAMES = tuple(PRESET_BUILDERS)


def get_preset(name: str, num_classes: int = 174) -> NetworkSpec:
    try:
        builder = PRESET_BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    return builder(num_classes=num_classes)
