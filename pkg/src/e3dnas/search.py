"""Maximum-entropy evolutionary search under a MAC budget.

The algorithm keeps a population of candidate networks, repeatedly picks a
random parent, mutates two of its stages, and admits the child if it fits
the inference budget and depth bound.  Whenever the population outgrows
its size limit, the candidate with the smallest spatio-temporal score is
removed (ties evict the youngest, so the best candidate and the oldest
representative of a score level survive).  The highest-scoring candidate
after the final iteration is the search result.

Everything is driven by one seeded Philox generator, so a fixed config
reproduces the search bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable

import numpy as np

from .arch import Kernel3d, NetworkSpec, Stage
from .cost import total_macs
from .entropy import DEFAULT_SCORE_CONFIG, ScoreConfig, st_total
from .presets import K133, K155, K333

MUTATION_TARGETS = ("kernel", "output", "bottleneck", "layers")


class ConfigError(ValueError):
    """A search configuration is unusable."""


@dataclass(frozen=True, slots=True)
class MutationSpaces:
    """Value sets the mutation operator draws from.

    ``targets`` restricts which attributes may mutate; the default is all
    four.  Channel values always land on the searchable grid (multiples of
    ``channel_step`` within [``channel_min``, ``channel_max``]).
    """

    kernels: tuple[Kernel3d, ...] = (K133, K155, K333)
    expansion_ratios: tuple[float, ...] = (1.5, 2.0, 2.5, 3.0, 3.5, 4.0)
    channel_multipliers: tuple[float, ...] = (2.0, 1.5, 1.25, 0.8, 0.6, 0.5)
    depth_deltas: tuple[int, ...] = (-2, -1, 1, 2)
    channel_min: int = 8
    channel_max: int = 640
    channel_step: int = 8
    targets: tuple[str, ...] = MUTATION_TARGETS

    def __post_init__(self) -> None:
        if not self.kernels or not self.expansion_ratios or not self.channel_multipliers or not self.depth_deltas:
            raise ConfigError("mutation spaces must be non-empty")
        if any(m <= 0 for m in self.channel_multipliers) or any(r <= 0 for r in self.expansion_ratios):
            raise ConfigError("multipliers and expansion ratios must be positive")
        unknown = set(self.targets) - set(MUTATION_TARGETS)
        if unknown or not self.targets:
            raise ConfigError(f"targets must be a non-empty subset of {MUTATION_TARGETS}, got {self.targets}")


@dataclass(frozen=True, slots=True)
class SearchConfig:
    budget_macs: int
    initial: NetworkSpec
    seed: int
    max_depth: int = 200
    population_size: int = 512
    iterations: int = 500_000
    spaces: MutationSpaces = MutationSpaces()
    score: ScoreConfig = DEFAULT_SCORE_CONFIG
    mutate_stem_head_channels: bool = True
    stage_selection_with_replacement: bool = True
    warmup_iterations: int = 0
    warmup_budget_fraction: float = 1 / 3
    batch_size: int = 1
    history_every: int = 1

    def __post_init__(self) -> None:
        if self.budget_macs < 1 or self.population_size < 1 or self.max_depth < 1:
            raise ConfigError("budget_macs, population_size and max_depth must be positive")
        if self.iterations < 0 or self.warmup_iterations < 0:
            raise ConfigError("iteration counts must be non-negative")
        if not 0 < self.warmup_budget_fraction <= 1:
            raise ConfigError("warmup_budget_fraction must be in (0, 1]")
        if self.batch_size < 1 or self.history_every < 1:
            raise ConfigError("batch_size and history_every must be positive")


@dataclass(frozen=True, slots=True)
class Candidate:
    net: NetworkSpec
    st_score: float
    macs: int
    birth_iteration: int


@dataclass(frozen=True, slots=True)
class HistoryPoint:
    iteration: int
    best_score: float
    population: int
    accepted: int
    rejected: int


@dataclass(frozen=True, slots=True)
class SearchResult:
    best: Candidate
    history: tuple[HistoryPoint, ...]
    accepted: int
    rejected: int
    iterations_run: int


def _clamp_channels(value: float, spaces: MutationSpaces) -> int:
    stepped = int(round(value / spaces.channel_step)) * spaces.channel_step
    return max(spaces.channel_min, min(spaces.channel_max, stepped))


def _stage_inputs(stem_out: int, stages: Iterable[Stage]) -> list[int]:
    """Input channel count of each stage's first block."""
    inputs = []
    in_ch = stem_out
    for stage in stages:
        inputs.append(in_ch)
        in_ch = stage.blocks[-1].out_channels
    return inputs


def _mutate_stage(stage: Stage, stage_input: int, spaces: MutationSpaces, rng: np.random.Generator) -> Stage:
    target = spaces.targets[int(rng.integers(len(spaces.targets)))]
    blocks = list(stage.blocks)
    if target == "kernel":
        kernel = spaces.kernels[int(rng.integers(len(spaces.kernels)))]
        blocks = [replace(b, dw_kernel=kernel) for b in blocks]
    elif target == "output":
        multiplier = spaces.channel_multipliers[int(rng.integers(len(spaces.channel_multipliers)))]
        new_out = _clamp_channels(blocks[0].out_channels * multiplier, spaces)
        blocks = [replace(b, out_channels=new_out) for b in blocks]
    elif target == "bottleneck":
        ratio = spaces.expansion_ratios[int(rng.integers(len(spaces.expansion_ratios)))]
        in_ch = stage_input
        rebuilt = []
        for b in blocks:
            rebuilt.append(
                replace(b, bottleneck_channels=_clamp_channels(ratio * in_ch, spaces), expansion_ratio=ratio)
            )
            in_ch = b.out_channels
        blocks = rebuilt
    else:  # layers
        delta = spaces.depth_deltas[int(rng.integers(len(spaces.depth_deltas)))]
        depth = max(1, len(blocks) + delta)
        if depth <= len(blocks):
            blocks = blocks[:depth]
        else:
            template = replace(blocks[-1], downsample=False)
            blocks = blocks + [template] * (depth - len(blocks))
    return Stage(tuple(blocks))


def mutate(
    net: NetworkSpec,
    spaces: MutationSpaces,
    rng: np.random.Generator,
    mutate_stem_head_channels: bool = True,
    stage_selection_with_replacement: bool = True,
) -> NetworkSpec:
    """Mutate two uniformly chosen stages of a network.

    Each chosen stage gets one of the enabled mutations: replace its
    depthwise kernel, rescale its output channels, re-derive bottleneck
    widths from a fresh expansion ratio, or add/remove blocks (clamped at
    one block, stages never vanish).  When ``mutate_stem_head_channels``
    is set, the stem and head conv widths are additional selection slots,
    mutated by a channel multiplier.  Every mutation is clamped into
    validity, so the result is always a well-formed network; budget and
    depth screening happen in :func:`evolve`.
    """
    slots = len(net.stages) + (2 if mutate_stem_head_channels else 0)
    if stage_selection_with_replacement or slots < 2:
        picks = [int(rng.integers(slots)) for _ in range(2)]
    else:
        picks = [int(i) for i in rng.choice(slots, size=2, replace=False)]

    stages = list(net.stages)
    stem = net.stem
    head = net.head_channels
    for pick in picks:
        if pick < len(stages):
            inputs = _stage_inputs(stem.out_channels, stages)
            stages[pick] = _mutate_stage(stages[pick], inputs[pick], spaces, rng)
        else:
            multiplier = spaces.channel_multipliers[int(rng.integers(len(spaces.channel_multipliers)))]
            if pick == len(stages):
                stem = replace(stem, out_channels=_clamp_channels(stem.out_channels * multiplier, spaces))
            else:
                head = _clamp_channels(head * multiplier, spaces)
    return replace(net, stages=tuple(stages), stem=stem, head_channels=head)


def _make_candidate(net: NetworkSpec, score_config: ScoreConfig, birth: int) -> Candidate:
    return Candidate(net=net, st_score=st_total(net, score_config), macs=total_macs(net), birth_iteration=birth)


def _cull(population: list[Candidate]) -> Candidate:
    """Remove and return the worst candidate (smallest score, youngest on ties)."""
    worst_index = 0
    worst = population[0]
    for i, cand in enumerate(population[1:], start=1):
        if cand.st_score < worst.st_score or (
            cand.st_score == worst.st_score and cand.birth_iteration > worst.birth_iteration
        ):
            worst = cand
            worst_index = i
    return population.pop(worst_index)


def evolve(
    cfg: SearchConfig,
    progress: Callable[[HistoryPoint], None] | None = None,
) -> SearchResult:
    """Run the evolutionary search and return the best candidate found.

    The population starts as the single initial network.  An optional
    warm-up phase (``warmup_iterations``) runs the same loop against
    ``warmup_budget_fraction`` of the budget first, which grows a diverse
    small-budget population before the main phase; both phases count
    toward the history.  With ``batch_size > 1`` each step mutates and
    scores that many children before inserting and culling them in draw
    order, which keeps results deterministic for a fixed (seed,
    batch_size).
    """
    initial = _make_candidate(cfg.initial, cfg.score, birth=0)
    if initial.macs > cfg.budget_macs:
        raise ConfigError(f"initial network costs {initial.macs} MACs, over the budget {cfg.budget_macs}")
    if cfg.initial.depth > cfg.max_depth:
        raise ConfigError(f"initial network has {cfg.initial.depth} layers, over max_depth {cfg.max_depth}")

    rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    population: list[Candidate] = [initial]
    best = initial
    accepted = 0
    rejected = 0
    history: list[HistoryPoint] = []
    warmup_budget = max(1, int(cfg.budget_macs * cfg.warmup_budget_fraction))

    total_iterations = cfg.warmup_iterations + cfg.iterations
    iteration = 0
    while iteration < total_iterations:
        budget = warmup_budget if iteration < cfg.warmup_iterations else cfg.budget_macs
        batch = min(cfg.batch_size, total_iterations - iteration)
        children: list[NetworkSpec] = []
        for _ in range(batch):
            iteration += 1
            parent = population[int(rng.integers(len(population)))]
            children.append(
                mutate(
                    parent.net,
                    cfg.spaces,
                    rng,
                    cfg.mutate_stem_head_channels,
                    cfg.stage_selection_with_replacement,
                )
            )
        for child in children:
            candidate = _make_candidate(child, cfg.score, birth=iteration)
            if candidate.macs <= budget and candidate.net.depth <= cfg.max_depth:
                population.append(candidate)
                accepted += 1
                if candidate.st_score > best.st_score:
                    best = candidate
            else:
                rejected += 1
            while len(population) > cfg.population_size:
                _cull(population)
        if iteration % cfg.history_every == 0 or iteration == total_iterations:
            point = HistoryPoint(iteration, best.st_score, len(population), accepted, rejected)
            history.append(point)
            if progress is not None:
                progress(point)

    return SearchResult(
        best=best,
        history=tuple(history),
        accepted=accepted,
        rejected=rejected,
        iterations_run=total_iterations,
    )
