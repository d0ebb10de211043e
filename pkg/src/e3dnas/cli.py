"""Command-line front end: score, cost, search, simulate, preset.

Machine-readable payloads (``--json``, architecture documents, history
CSV) are byte-stable for a fixed configuration and go to stdout or
``--out``; subcommands compose through pipes, e.g.::

    e3dnas preset e3d-s | e3dnas score --metric st

Every file artifact is accompanied by a ``<file>.manifest.json`` sidecar
recording the resolved configuration, seed, input/output digests, and
wall-clock duration, so any run can be reproduced from its manifest.
Exit codes: 0 success, 2 usage, 3 unreadable input, 4 schema or invariant
violation, 5 invalid configuration, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from typing import Any, Sequence

from . import __version__
from .arch import ArchitectureError, Kernel3d, NetworkSpec, SchemaError, from_json, to_json
from .backends import BACKENDS
from .cost import cost
from .entropy import LogBase, Metric, ScoreBreakdown, ScoreConfig, homo_score, st_score
from .oracle import SimConfig, SimulationCapError, simulate
from .presets import PRESET_NAMES, get_preset
from .search import (
    ConfigError,
    MutationSpaces,
    SearchConfig,
    SearchResult,
    evolve,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_CONFIG = 5
EXIT_OTHER = 1


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _read_arch(path: str) -> tuple[NetworkSpec, str, bytes]:
    if path == "-":
        text = sys.stdin.read()
        return from_json(text), "<stdin>", text.encode()
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    return from_json(text), path, text.encode()


def _emit(payload: str, out: str | None) -> dict[str, str]:
    """Write a payload to stdout or a file; returns {name: digest}."""
    if out is None:
        sys.stdout.write(payload)
        return {"<stdout>": _sha256(payload.encode())}
    with open(out, "w", encoding="utf-8") as handle:
        handle.write(payload)
    return {out: _sha256(payload.encode())}


def _write_manifest(
    args: argparse.Namespace,
    started: float,
    inputs: dict[str, str],
    outputs: dict[str, str],
    extra: dict[str, Any] | None = None,
) -> None:
    """Write the run manifest to --manifest and beside each file output."""
    config = {k: v for k, v in vars(args).items() if k not in ("func", "manifest") and not k.startswith("_")}
    manifest = {
        "tool": "e3dnas",
        "version": __version__,
        "subcommand": args._subcommand,
        "config": config,
        "seed": getattr(args, "seed", None),
        "duration_s": time.perf_counter() - started,
        "inputs": inputs,
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    paths = [args.manifest] if args.manifest else []
    paths += [name + ".manifest.json" for name in outputs if name not in ("<stdout>",)]
    text = json.dumps(manifest, indent=2) + "\n"
    for path in paths:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)


def _score_config(args: argparse.Namespace) -> ScoreConfig:
    return ScoreConfig(
        log_base=LogBase(args.log_base),
        epsilon=args.epsilon,
        include_classifier=args.include_classifier,
    )


def _breakdown_rows(breakdown: ScoreBreakdown) -> list[dict[str, Any]]:
    return [
        {
            "layer_id": term.layer_id,
            "kernel_volume": term.kernel_volume,
            "effective_in_channels": term.effective_in_channels,
            "refinement": term.refinement,
            "term": term.term,
        }
        for term in breakdown.per_layer
    ]


def _cmd_score(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    net, name, raw = _read_arch(args.arch)
    config = _score_config(args)
    metric = Metric(args.metric)
    breakdown = homo_score(net, config) if metric is Metric.HOMO else st_score(net, config)
    if args.json:
        doc = {
            "metric": breakdown.metric.value,
            "log_base": breakdown.log_base.value,
            "total": breakdown.total,
            "layers": len(breakdown.per_layer),
        }
        if args.breakdown:
            doc["per_layer"] = _breakdown_rows(breakdown)
        payload = json.dumps(doc, indent=2) + "\n"
    elif args.breakdown:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["layer_id", "kernel_volume", "effective_in_channels", "refinement", "term"])
        for row in _breakdown_rows(breakdown):
            writer.writerow([row["layer_id"], row["kernel_volume"], row["effective_in_channels"],
                             repr(row["refinement"]), repr(row["term"])])
        writer.writerow(["total", "", "", "", repr(breakdown.total)])
        payload = buffer.getvalue()
    else:
        payload = (
            f"{breakdown.metric.value} score: {breakdown.total:.6f} "
            f"(log base {breakdown.log_base.value}, {len(breakdown.per_layer)} layers)\n"
        )
    outputs = _emit(payload, args.out)
    _write_manifest(args, started, {name: _sha256(raw)}, outputs)
    return EXIT_OK


def _cmd_cost(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    net, name, raw = _read_arch(args.arch)
    report = cost(net)
    if args.json:
        doc = {
            "total_macs": report.total_macs,
            "gflops": report.gflops,
            "gflops_doubled": report.gflops_doubled,
            "total_params": report.total_params,
            "classifier_params": report.classifier_params,
            "per_layer": [
                {"layer_id": entry.layer_id, "macs": entry.macs, "params": entry.params}
                for entry in report.per_layer
            ],
        }
        payload = json.dumps(doc, indent=2) + "\n"
    else:
        lines = [f"{'layer':<28}{'macs':>16}{'params':>12}"]
        lines += [
            f"{entry.layer_id:<28}{entry.macs:>16}{entry.params:>12}" for entry in report.per_layer
        ]
        lines.append(
            f"{'total':<28}{report.total_macs:>16}{report.total_params:>12}"
        )
        lines.append(
            f"gflops: {report.gflops:.4f} (doubled convention: {report.gflops_doubled:.4f}); "
            f"classifier params: {report.classifier_params}"
        )
        payload = "\n".join(lines) + "\n"
    outputs = _emit(payload, args.out)
    _write_manifest(args, started, {name: _sha256(raw)}, outputs)
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    net, name, raw = _read_arch(args.arch)
    cfg = SimConfig(
        samples=args.samples,
        seed=args.seed,
        weight_std=args.weight_std,
        padding=args.padding,
        pooling=args.pooling,
    )
    report = simulate(net, cfg, backend=args.backend)
    doc = {field: getattr(report, field) for field in (
        "samples_used", "pooled_elements", "empirical_variance", "analytic_variance",
        "empirical_log_variance", "analytic_log_variance", "relative_error",
        "final_mean", "final_mean_stderr", "padding", "pooling", "backend", "rng",
    )}
    doc["log_base"] = report.log_base.value
    if args.json:
        payload = json.dumps(doc, indent=2) + "\n"
    else:
        payload = "".join(f"{key}: {value}\n" for key, value in doc.items())
    outputs = _emit(payload, args.out)
    _write_manifest(args, started, {name: _sha256(raw)}, outputs)
    return EXIT_OK


def _cmd_preset(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    payload = to_json(get_preset(args.name, num_classes=args.num_classes))
    outputs = _emit(payload, args.out)
    _write_manifest(args, started, {}, outputs)
    return EXIT_OK


def _parse_search_config(doc: dict[str, Any], seed_override: int | None) -> SearchConfig:
    if not isinstance(doc, dict):
        raise ConfigError("search config must be a JSON object")
    known = {
        "budget_macs", "max_depth", "population_size", "iterations", "seed", "initial",
        "spaces", "score", "mutate_stem_head_channels", "stage_selection_with_replacement",
        "warmup_iterations", "warmup_budget_fraction", "batch_size", "history_every",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown search config key(s): {sorted(unknown)}")
    for key in ("budget_macs", "initial"):
        if key not in doc:
            raise ConfigError(f"search config missing required key {key!r}")
    if seed_override is None and "seed" not in doc:
        raise ConfigError("search config needs a seed (or pass --seed)")

    initial = doc["initial"]
    if isinstance(initial, str):
        net = get_preset(initial)
    else:
        net = from_json(json.dumps(initial))

    spaces_doc = doc.get("spaces", {})
    if not isinstance(spaces_doc, dict):
        raise ConfigError("spaces must be an object")
    spaces_kwargs: dict[str, Any] = {}
    if "kernels" in spaces_doc:
        spaces_kwargs["kernels"] = tuple(Kernel3d(*k) for k in spaces_doc["kernels"])
    for key in ("expansion_ratios", "channel_multipliers"):
        if key in spaces_doc:
            spaces_kwargs[key] = tuple(float(v) for v in spaces_doc[key])
    if "depth_deltas" in spaces_doc:
        spaces_kwargs["depth_deltas"] = tuple(int(v) for v in spaces_doc["depth_deltas"])
    if "targets" in spaces_doc:
        spaces_kwargs["targets"] = tuple(spaces_doc["targets"])

    score_doc = doc.get("score", {})
    if not isinstance(score_doc, dict):
        raise ConfigError("score must be an object")
    score_kwargs: dict[str, Any] = {}
    if "log_base" in score_doc:
        score_kwargs["log_base"] = LogBase(score_doc["log_base"])
    if "refinement_log_base" in score_doc:
        score_kwargs["refinement_log_base"] = LogBase(score_doc["refinement_log_base"])
    for key in ("epsilon",):
        if key in score_doc:
            score_kwargs[key] = float(score_doc[key])
    for key in ("include_classifier", "refine_pointwise"):
        if key in score_doc:
            score_kwargs[key] = bool(score_doc[key])

    kwargs: dict[str, Any] = {
        "budget_macs": int(doc["budget_macs"]),
        "initial": net,
        "seed": int(seed_override if seed_override is not None else doc["seed"]),
        "spaces": MutationSpaces(**spaces_kwargs),
        "score": ScoreConfig(**score_kwargs),
    }
    for key in ("max_depth", "population_size", "iterations", "warmup_iterations", "batch_size", "history_every"):
        if key in doc:
            kwargs[key] = int(doc[key])
    for key in ("mutate_stem_head_channels", "stage_selection_with_replacement"):
        if key in doc:
            kwargs[key] = bool(doc[key])
    if "warmup_budget_fraction" in doc:
        kwargs["warmup_budget_fraction"] = float(doc["warmup_budget_fraction"])
    return SearchConfig(**kwargs)


def _history_csv(result: SearchResult) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["iteration", "best_score", "pop_size", "accepted", "rejected"])
    for point in result.history:
        writer.writerow([point.iteration, repr(point.best_score), point.population,
                         point.accepted, point.rejected])
    return buffer.getvalue()


def _cmd_search(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if args.threads:
        os.environ.setdefault("NUMBA_NUM_THREADS", str(args.threads))
    with open(args.config, "r", encoding="utf-8") as handle:
        raw = handle.read()
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"search config is not valid JSON: {exc}") from exc
    cfg = _parse_search_config(doc, args.seed)
    result = evolve(cfg)
    outputs = _emit(to_json(result.best.net), args.out)
    if args.history:
        with open(args.history, "w", encoding="utf-8") as handle:
            text = _history_csv(result)
            handle.write(text)
        outputs[args.history] = _sha256(text.encode())
    sys.stderr.write(
        f"best score {result.best.st_score:.6f} at {result.best.macs} MACs "
        f"({result.accepted} accepted, {result.rejected} rejected)\n"
    )
    _write_manifest(
        args, started, {args.config: _sha256(raw.encode())}, outputs,
        extra={"best_score": result.best.st_score, "best_macs": result.best.macs},
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="e3dnas", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"e3dnas {__version__}")
    sub = parser.add_subparsers(dest="_subcommand", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", help="write the payload to this file instead of stdout")
        p.add_argument("--manifest", help="also write the run manifest to this path")

    p = sub.add_parser("score", help="entropy score of an architecture")
    p.add_argument("arch", nargs="?", default="-", help="architecture JSON path, or - for stdin")
    p.add_argument("--metric", choices=[m.value for m in Metric], default=Metric.ST.value)
    p.add_argument("--log-base", choices=[b.value for b in LogBase], default=LogBase.BASE10.value)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--include-classifier", action="store_true")
    p.add_argument("--breakdown", action="store_true", help="emit per-layer terms (CSV, or JSON with --json)")
    p.add_argument("--json", action="store_true")
    add_common(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("cost", help="MACs and parameter counts")
    p.add_argument("arch", nargs="?", default="-")
    p.add_argument("--json", action="store_true")
    add_common(p)
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("simulate", help="Monte-Carlo check of the variance propagation")
    p.add_argument("arch", nargs="?", default="-")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--padding", choices=["same", "valid"], default="same")
    p.add_argument("--pooling", choices=["interior", "all"], default="interior")
    p.add_argument("--weight-std", type=float, default=1.0)
    p.add_argument("--backend", choices=list(BACKENDS), default=None)
    p.add_argument("--json", action="store_true")
    add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("search", help="evolutionary architecture search")
    p.add_argument("--config", required=True, help="search configuration JSON")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--history", help="write a best-so-far history CSV here")
    p.add_argument("--threads", type=int, default=None, help="cap kernel worker threads")
    add_common(p)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("preset", help="emit a built-in architecture")
    p.add_argument("name", choices=list(PRESET_NAMES))
    p.add_argument("--num-classes", type=int, default=174)
    add_common(p)
    p.set_defaults(func=_cmd_preset)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        sys.stderr.write(f"e3dnas: cannot read {exc.filename}: not found\n")
        return EXIT_IO
    except IsADirectoryError as exc:
        sys.stderr.write(f"e3dnas: cannot read {exc.filename}: is a directory\n")
        return EXIT_IO
    except SchemaError as exc:
        sys.stderr.write(f"e3dnas: schema error: {exc}\n")
        return EXIT_SCHEMA
    except ArchitectureError as exc:
        sys.stderr.write(f"e3dnas: invalid architecture: {exc}\n")
        return EXIT_SCHEMA
    except (ConfigError, SimulationCapError) as exc:
        sys.stderr.write(f"e3dnas: {exc}\n")
        return EXIT_CONFIG
    except KeyError as exc:
        sys.stderr.write(f"e3dnas: {exc.args[0] if exc.args else exc}\n")
        return EXIT_CONFIG
    except OSError as exc:
        sys.stderr.write(f"e3dnas: {exc}\n")
        return EXIT_IO


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
