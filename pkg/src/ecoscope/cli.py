"""Command-line entry point: ``ecoscope <subcommand> [options]``.

Settings resolve as flag > config file > default. The config file is YAML
with a ``version`` key and any :class:`RunConfig` field. Exit codes: 0 on
success, 1 on runtime errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from . import __version__
from .copart import DiscoveryStats
from .inference import (
    PipelineConfig,
    predict_dataset,
    prediction_features,
    read_prediction,
    train_memory,
)
from .memory import MemoryFormatError, export_object_features, finalize, load_memory, save_memory
from .metrics import evaluate_dataset, write_report
from .scene_gen import (
    FAMILIES,
    GenerationError,
    generate_dataset,
    read_image,
    read_manifest,
    save_index_png,
    write_dataset,
)
from .segmentation import as_image, felzenszwalb_segment

log = logging.getLogger("ecoscope")

CONFIG_VERSION = 1
THREADS_ENV = "ECOSCOPE_THREADS"


class UsageError(Exception):
    """Bad invocation or configuration; reported with exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    epsilon: float = 0.99
    K: int = 64
    tau: float = 10.0
    min_size: int = 1
    batch_size: int = 2
    seed: int = 0
    threads: int = 1
    magnitude_gate: bool = False
    magnitude_delta: float = 0.1
    shuffle_parts: bool = False
    max_views: int = 8
    color_tolerance: float = 30.0
    min_relative_count: float = 0.1
    log_level: str = "INFO"

    def pipeline(self, amodal: bool = True) -> PipelineConfig:
        return PipelineConfig(
            epsilon=self.epsilon,
            K=self.K,
            tau=self.tau,
            min_size=self.min_size,
            batch_size=self.batch_size,
            rng_seed=self.seed,
            deterministic_order=not self.shuffle_parts,
            magnitude_gate=self.magnitude_gate,
            offset_tolerance=self.magnitude_delta,
            max_views=self.max_views,
            color_tolerance=self.color_tolerance,
            min_relative_count=self.min_relative_count,
            amodal=amodal,
            threads=self.threads,
        )


_CONFIG_FIELDS = {f.name: f for f in fields(RunConfig)}


def load_config_file(path) -> dict:
    """Validated mapping of config-file overrides."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file {path} does not exist") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config file {path} is not valid YAML: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a mapping")
    version = data.pop("version", None)
    if version != CONFIG_VERSION:
        raise UsageError(f"config file {path} has version {version!r}; expected {CONFIG_VERSION}")
    unknown = sorted(set(data) - set(_CONFIG_FIELDS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve_config(flags: dict, file_values: dict | None = None, env: dict | None = None) -> RunConfig:
    """Merge defaults, config file, environment and flags (later wins)."""
    values: dict = {}
    values.update(file_values or {})
    env = os.environ if env is None else env
    if env.get(THREADS_ENV):
        values["threads"] = env[THREADS_ENV]
    values.update({k: v for k, v in flags.items() if k in _CONFIG_FIELDS and v is not None})
    out = {}
    for name, value in values.items():
        default = _CONFIG_FIELDS[name].default
        try:
            if isinstance(default, bool):
                if isinstance(value, str):
                    value = value.strip().lower() in ("1", "true", "yes", "on")
                out[name] = bool(value)
            else:
                out[name] = type(default)(value)
        except (TypeError, ValueError):
            raise UsageError(f"invalid value for {name}: {value!r}") from None
    cfg = RunConfig(**out)
    if cfg.threads < 1:
        raise UsageError("threads must be >= 1")
    if cfg.batch_size < 1:
        raise UsageError("batch_size must be >= 1")
    return cfg


# ---------------------------------------------------------------------------
# subcommands

def _cmd_generate(args, cfg: RunConfig):
    samples = generate_dataset(args.family, args.count, cfg.seed, min_visibility=args.min_visibility,
                               texture=args.texture, num_objects=args.num_objects)
    manifest = write_dataset(samples, args.out, args.family)
    log.info("stage=generate family=%s count=%d out=%s", args.family, len(manifest["samples"]), args.out)


def _cmd_segment(args, cfg: RunConfig):
    image = as_image(np.array(Image.open(args.input).convert("RGB")))
    labeling = felzenszwalb_segment(image, cfg.pipeline().segmentation)
    if labeling.num_parts <= 256:
        save_index_png(labeling.labels, args.out)
    else:
        log.warning("stage=segment parts=%d exceed 256; writing 16-bit labels", labeling.num_parts)
        Image.fromarray(labeling.labels.astype(np.uint16)).save(args.out)
    log.info("stage=segment parts=%d out=%s", labeling.num_parts, args.out)


def _cmd_discover(args, cfg: RunConfig):
    manifest = read_manifest(args.dataset)
    ids = [s["id"] for s in manifest["samples"]]
    pcfg = cfg.pipeline()
    per_batch = []
    dump = open(args.clusters, "w") if args.clusters else None

    def on_batch(b, parts, clusters, stats: DiscoveryStats):
        per_batch.append(stats)
        first = ids[b * pcfg.batch_size]
        if dump is not None:
            record = {
                "batch": b,
                "samples": ids[b * pcfg.batch_size:(b + 1) * pcfg.batch_size],
                "num_parts": len(parts),
                "clusters": [
                    {"id": c.cluster_id, "members": sorted(c.members),
                     "images": sorted({parts[m].image_index for m in c.members})}
                    for c in clusters
                ],
                "stats": stats.as_dict(),
            }
            dump.write(json.dumps(record) + "\n")
        log.debug("stage=discover batch=%d first=%s parts=%d clusters=%d comparisons=%d",
                  b, first, len(parts), len(clusters), stats.pairwise_comparisons)

    try:
        images = (read_image(args.dataset, i) for i in ids)
        memory = finalize(train_memory(images, pcfg, on_batch=on_batch))
    finally:
        if dump is not None:
            dump.close()
    if args.memory:
        save_memory(memory, args.memory)
    total = {
        "batches": len(per_batch),
        "pairwise_comparisons": int(sum(s.pairwise_comparisons for s in per_batch)),
        "merges": int(sum(s.merges for s in per_batch)),
        "wall_time": float(sum(s.wall_time for s in per_batch)),
        "entries": len(memory.entries),
        "objects": memory.total_count,
    }
    if args.stats:
        Path(args.stats).write_text(json.dumps({"total": total, "batches": [s.as_dict() for s in per_batch]},
                                               indent=1))
    log.info("stage=discover batches=%d entries=%d objects=%d comparisons=%d", total["batches"],
             total["entries"], total["objects"], total["pairwise_comparisons"])


def _cmd_infer(args, cfg: RunConfig):
    memory = load_memory(args.memory)
    predict_dataset(args.dataset, memory, args.out, cfg.pipeline(amodal=args.amodal))


def _cmd_evaluate(args, cfg: RunConfig):
    report = evaluate_dataset(args.pred, args.gt, args.mode)
    if args.out:
        write_report(report, args.out)
    summary = " ".join(f"{k}={m:.2f}+-{s:.2f}" for k, (m, s) in report["summary"].items())
    log.info("stage=evaluate mode=%s samples=%d %s", args.mode, len(report["rows"]), summary)
    print(json.dumps({k: list(v) for k, v in report["summary"].items()}))


def _cmd_export(args, cfg: RunConfig):
    if args.memory:
        n = export_object_features(load_memory(args.memory), args.out)
    else:
        if not args.dataset:
            raise UsageError("--pred needs --dataset to read the images")
        rows = []
        for s in read_manifest(args.dataset)["samples"]:
            pred = read_prediction(args.pred, s["id"])
            rows += prediction_features(pred, read_image(args.dataset, s["id"]), cfg.K)
        n = export_object_features(rows, args.out, K=cfg.K)
    log.info("stage=export rows=%d out=%s", n, args.out)


def _cmd_inspect(args, cfg: RunConfig):
    memory = load_memory(args.memory)
    print(f"entries={len(memory.entries)} objects={memory.total_count} K={memory.K} "
          f"finalized={memory.finalized}")
    print("entry_id,count,templates,views,colors")
    for e in sorted(memory.entries, key=lambda e: (-e.occurrence_count, e.entry_id))[:args.limit]:
        colors = " ".join("#%02x%02x%02x" % tuple(int(round(c)) for c in t.color_summary) for t in e.templates)
        print(f"{e.entry_id},{e.occurrence_count},{len(e.templates)},{len(e.views)},{colors}")


# ---------------------------------------------------------------------------
# parser

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="YAML config file")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--threads", type=int, help=f"worker cap (env {THREADS_ENV}; default 1)")
    g.add_argument("--log-level", dest="log_level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


def _algo(p: argparse.ArgumentParser, *names: str):
    opts = {
        "epsilon": dict(type=float, help="similarity threshold (default 0.99)"),
        "K": dict(type=int, help="boundary samples per part (default 64)"),
        "tau": dict(type=float, help="segmentation threshold (default 10)"),
        "min_size": dict(type=int, help="minimum segment size (default 1)"),
        "batch_size": dict(type=int, help="images per discovery batch (default 2)"),
    }
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, **opts[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecoscope", description="Multi-part object discovery on synthetic scenes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common()

    p = sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--count", required=True, type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--min-visibility", dest="min_visibility", type=float)
    p.add_argument("--texture", type=int)
    p.add_argument("--num-objects", dest="num_objects", type=int)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("segment", parents=[common], help="segment one image into parts")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _algo(p, "tau", "min_size")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("discover", parents=[common], help="co-part discovery over a dataset; builds memory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--memory", help="write the finalized memory here")
    p.add_argument("--stats", help="JSON file for discovery statistics")
    p.add_argument("--clusters", help="JSON-lines file with per-batch clusters")
    p.add_argument("--magnitude-gate", dest="magnitude_gate", action="store_const", const=True)
    p.add_argument("--shuffle-parts", dest="shuffle_parts", action="store_const", const=True)
    _algo(p, "epsilon", "K", "tau", "min_size", "batch_size")
    p.set_defaults(func=_cmd_discover)

    p = sub.add_parser("infer", parents=[common], help="discover memorised objects in a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--memory", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--amodal", action="store_true", help="fill in occluded parts")
    _algo(p, "epsilon", "K", "tau", "min_size")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mode", choices=["modal", "amodal"], default="modal")
    p.add_argument("--out", help="CSV report path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("export-features", parents=[common], help="write an object feature table")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--memory")
    src.add_argument("--pred")
    p.add_argument("--dataset", help="dataset the predictions belong to")
    p.add_argument("--out", required=True)
    _algo(p, "K")
    p.set_defaults(func=_cmd_export)

    p = sub.add_parser("inspect-memory", parents=[common], help="list memory entries by count")
    p.add_argument("--memory", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.set_defaults(func=_cmd_inspect)
    return parser


def _setup_logging(level: str):
    root = logging.getLogger("ecoscope")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s level=%(levelname)s %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        file_values = load_config_file(args.config) if args.config else {}
        cfg = resolve_config(vars(args), file_values)
        _setup_logging(cfg.log_level)
        args.func(args, cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ecoscope: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, GenerationError, MemoryFormatError) as exc:
        if not log.handlers:
            _setup_logging("INFO")
        log.error("stage=%s error=%s", args.command, exc)
        return 1
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
