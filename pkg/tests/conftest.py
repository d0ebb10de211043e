from __future__ import annotations

import numpy as np
import pytest

from e3dnas.arch import Block, Classifier, ConvLayer, Kernel3d, LayerKind, NetworkSpec, Shape3d, Stage
from e3dnas.presets import K133, K155, K333

SEARCH_KERNELS = (K133, K155, K333)


def diagnostic_net(width: int) -> list[ConvLayer]:
    """The three-layer pointwise/3x3x3/pointwise stack used for oracle checks."""
    return [
        ConvLayer(LayerKind.POINTWISE, Kernel3d(1, 1, 1), width, width, layer_id="l1"),
        ConvLayer(LayerKind.REGULAR, Kernel3d(3, 3, 3), width, width, layer_id="l2"),
        ConvLayer(LayerKind.POINTWISE, Kernel3d(1, 1, 1), width, width, layer_id="l3"),
    ]


def fuzz_stack(rng: np.random.Generator) -> tuple[list[ConvLayer], int, Shape3d]:
    """A random 1-3 layer conv stack within the documented fuzz envelope.

    Kernels come from the search space, channels are grid multiples up to
    64, the input fits inside 7x9x9, and kernel extents are resampled
    until the stack supports full-support (valid-mode) outputs.
    """
    n_layers = int(rng.integers(1, 4))
    shape = Shape3d(int(rng.choice([5, 7])), int(rng.choice([7, 9])), int(rng.choice([7, 9])))
    channels = [int(rng.choice([8, 16, 24, 32, 40, 48, 56, 64])) for _ in range(n_layers + 1)]
    while True:
        kinds = [LayerKind.DEPTHWISE if rng.random() < 0.5 else LayerKind.REGULAR for _ in range(n_layers)]
        kernels = [SEARCH_KERNELS[int(rng.integers(3))] for _ in range(n_layers)]
        support = (
            sum(k.t - 1 for k in kernels),
            sum(k.h - 1 for k in kernels),
            sum(k.w - 1 for k in kernels),
        )
        if all(extent > margin for extent, margin in zip(shape.as_tuple(), support)):
            break
    layers = []
    in_ch = channels[0]
    for i, (kind, kernel) in enumerate(zip(kinds, kernels)):
        out_ch = in_ch if kind is LayerKind.DEPTHWISE else channels[i + 1]
        layers.append(ConvLayer(kind, kernel, in_ch, out_ch, layer_id=f"fuzz{i}"))
        in_ch = out_ch
    return layers, channels[0], shape


def tiny_net(
    stage_kernels: tuple[Kernel3d, ...] = (K333,),
    blocks_per_stage: int = 1,
    num_classes: int = 10,
) -> NetworkSpec:
    """A small valid network for search and serialization tests."""
    stages = tuple(
        Stage(
            (Block(k, 32, 24, downsample=True),)
            + tuple(Block(k, 32, 24) for _ in range(blocks_per_stage - 1))
        )
        for k in stage_kernels
    )
    return NetworkSpec(
        input_shape=Shape3d(13, 32, 32),
        stem=ConvLayer(LayerKind.REGULAR, K133, 3, 16, spatial_stride=2),
        stages=stages,
        head_channels=64,
        classifier=Classifier(num_classes=num_classes),
    )


@pytest.fixture(scope="session")
def presets():
    from e3dnas.presets import get_preset

    return {name: get_preset(name) for name in ("init-s", "e3d-s", "e3d-m", "e3d-l")}


# Published per-stage output sizes, used by both the IR tests and the
# acceptance suite.
PRESET_STAGE_SHAPES = {
    "init-s": {
        "stem": (13, 80, 80), "stage2": (13, 40, 40), "stage3": (13, 20, 20),
        "stage4": (13, 10, 10), "stage5": (13, 10, 10), "stage6": (13, 5, 5), "head": (13, 5, 5),
    },
    "e3d-s": {
        "stem": (13, 80, 80), "stage2": (13, 40, 40), "stage3": (13, 20, 20),
        "stage4": (13, 10, 10), "stage5": (13, 10, 10), "stage6": (13, 5, 5), "head": (13, 5, 5),
    },
    "e3d-m": {
        "stem": (16, 112, 112), "stage2": (16, 56, 56), "stage3": (16, 28, 28),
        "stage4": (16, 14, 14), "stage5": (16, 14, 14), "stage6": (16, 7, 7), "head": (16, 7, 7),
    },
    "e3d-l": {
        "stem": (16, 156, 156), "stage2": (16, 78, 78), "stage3": (16, 39, 39),
        "stage4": (16, 20, 20), "stage5": (16, 20, 20), "stage6": (16, 10, 10), "head": (16, 10, 10),
    },
}


ACCEPTANCE_NOTES: dict[str, str] = {}


def record_criterion(name: str, detail: str) -> None:
    ACCEPTANCE_NOTES[name] = detail


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion" in nodeid and report.when == "call":
                name = nodeid.split("::")[-1]
                verdict = "PASS" if status == "passed" else "FAIL"
                detail = ACCEPTANCE_NOTES.get(name, "")
                lines.append((name, f"{verdict} {name}" + (f": {detail}" if detail else "")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
