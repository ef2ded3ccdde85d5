"""Command-line entry point.

Subcommands cover the full workflow: gen writes dataset shards, train
produces a run directory with metrics and checkpoints, eval scores a
checkpoint on a shard, interp traces the accuracy along the straight
line between two checkpoints, and bridge-probe runs the two-community
pair test.  Outputs are plain CSV/JSON; plotting stays external.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from . import __version__
from .errors import NarLabError, ParseError
from .graphs import sample_two_community_pair
from .metrics import (bridge_pair_probe, evaluate, interpolate, model_mask_predictor,
                      oracle_mask_predictor, random_mask_predictor, score_set)
from .model import ModelConfig, load_checkpoint
from .rng import Rng
from .shards import read_shard, shard_path, write_shard
from .tasks import PRESETS, TaskId, generate_split, get_preset, oracle_labels
from .train import TrainConfig, train

GEN_DEFAULT_SEED = 20240501


def version_string() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=os.path.dirname(os.path.abspath(__file__)))
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    return f"v{__version__}"


def resolve_threads(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("NAR_LAB_THREADS")
    return max(1, int(env)) if env else 1


def write_manifest(out_dir, command: str, config: dict, seed, artifacts):
    """Record enough to replay the run; written before any work."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "master_seed": seed,
        "artifacts": artifacts,
        "version": version_string(),
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return path


def _add_gen(sub):
    p = sub.add_parser("gen", help="generate dataset shards")
    p.add_argument("--preset", required=True,
                   help=f"one of {sorted(PRESETS)} or 'custom'")
    p.add_argument("--task", default="all", help="task id or 'all'")
    p.add_argument("--out", required=True)
    p.add_argument("--encoding", default="scalar")
    p.add_argument("--seed", type=int, default=GEN_DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--name", default=None, help="dataset directory name (default: preset)")
    p.add_argument("--train-len", type=int, default=None)
    p.add_argument("--test-len", type=int, default=None)
    p.add_argument("--train-size", type=int, default=None)
    p.add_argument("--valtest-size", type=int, default=None)
    p.add_argument("--generator", choices=["er_fixed_p", "k_regular"], default=None)
    p.add_argument("--K", type=int, default=None, help="train-side regular degree")
    p.add_argument("--K-test", type=int, default=None)
    p.add_argument("--p", type=float, default=None)
    return p


def cmd_gen(args) -> int:
    overrides = {}
    for field, flag in [("train_len", "train_len"), ("test_len", "test_len"),
                        ("train_size", "train_size"), ("valtest_size", "valtest_size"),
                        ("generator", "generator"), ("k_train", "K"),
                        ("k_test", "K_test"), ("p", "p")]:
        val = getattr(args, flag)
        if val is not None:
            overrides[field] = val
    if args.preset == "custom":
        config = get_preset("CLRS", **overrides)
        dataset = args.name or "custom"
    else:
        config = get_preset(args.preset, **overrides)
        dataset = args.name or args.preset
    tasks = list(TaskId) if args.task == "all" else [TaskId(args.task)]
    threads = resolve_threads(args.threads)
    artifacts = [str(shard_path(args.out, dataset, t, s))
                 for t in tasks for s in ("train", "val", "test")]
    write_manifest(args.out, "gen",
                   {"preset": args.preset, "dataset": dataset, "encoding": args.encoding,
                    "overrides": overrides, "threads": threads},
                   args.seed, artifacts)
    for task in tasks:
        for split in ("train", "val", "test"):
            instances = generate_split(task, config, split, master_seed=args.seed,
                                       encoding=args.encoding, threads=threads)
            path = shard_path(args.out, dataset, task, split)
            write_shard(instances, path)
            print(f"{path}: {len(instances)} instances "
                  f"(n={config.length(split)}, generator={config.generator})")
    return 0


def _add_train(sub):
    p = sub.add_parser("train", help="train a model on generated shards")
    p.add_argument("--config", default=None, help="JSON file of TrainConfig fields")
    p.add_argument("--task", default=None)
    p.add_argument("--dataset", default=None, help="dataset directory name under --data")
    p.add_argument("--data", required=True, help="root directory holding shards")
    p.add_argument("--out", required=True, help="runs root directory")
    p.add_argument("--run-id", default=None)
    p.add_argument("--processor", default=None)
    p.add_argument("--encoding", default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--clip", type=float, default=None)
    p.add_argument("--T", type=int, default=None, dest="steps_T")
    p.add_argument("--d-h", type=int, default=None, dest="d_h")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eval-interval", type=int, default=None)
    p.add_argument("--eval-batch", type=int, default=None)
    p.add_argument("--desk-scale", action="store_true")
    p.add_argument("--resume", default=None)
    p.add_argument("--quiet", action="store_true")
    return p


def cmd_train(args) -> int:
    fields = {}
    if args.config:
        with open(args.config) as fh:
            fields.update(json.load(fh))
    for key in ("task", "dataset", "processor", "encoding", "steps", "batch", "lr",
                "clip", "steps_T", "d_h", "seed", "eval_interval"):
        val = getattr(args, key)
        if val is not None:
            fields[key] = val
    if args.desk_scale:
        fields["desk_scale"] = True
    # config files written by previous runs store steps_T under "T"
    if "T" in fields:
        fields.setdefault("steps_T", fields.pop("T"))
        fields.pop("T", None)
    fields.pop("config_hash", None)
    if "task" not in fields or "dataset" not in fields:
        raise NarLabError("train needs --task and --dataset (or a --config file)")
    config = TrainConfig(**fields)
    run_id = args.run_id or (
        f"{config.task}_{config.processor.replace(':', '-').replace('+', '-')}"
        f"_{config.encoding}_s{config.seed}")
    run_dir = os.path.join(args.out, run_id)
    write_manifest(run_dir, "train", config.resolved().to_dict(), config.seed,
                   [os.path.join(run_dir, "metrics.csv"),
                    os.path.join(run_dir, "config.json")])
    log = None if args.quiet else print
    result = train(config, args.data, run_dir, resume=args.resume, log=log,
                   eval_batch=args.eval_batch)
    print(f"selected: {result['selected']}")
    return 0


def _add_eval(sub):
    p = sub.add_parser("eval", help="score a checkpoint on a shard")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--shard", required=True)
    p.add_argument("--oracle", action="store_true",
                   help="replay the oracle instead of a model")
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--out", default=None)
    return p


def cmd_eval(args) -> int:
    instances = read_shard(args.shard)
    if args.oracle:
        preds = [
            oracle_labels(
                i.task, i.graph, values=i.sequence_values(),
                start=i.start_node() if "start" in i.node_inputs else None)
            for i in instances
        ]
        node_acc, graph_acc = score_set(preds, [i.labels for i in instances])
        report = {"shard": args.shard, "mode": "oracle",
                  "node_acc": node_acc, "graph_acc": graph_acc, "loss": 0.0}
    else:
        if not args.ckpt:
            raise NarLabError("eval needs --ckpt (or --oracle)")
        params, meta = load_checkpoint(args.ckpt)
        cfg = ModelConfig.from_dict(meta["config"])
        rec, extras = evaluate(cfg, params, instances, split="eval", batch_size=args.batch)
        report = {"shard": args.shard, "ckpt": args.ckpt, "step": meta["step"],
                  "node_acc": rec.node_acc, "graph_acc": rec.graph_acc, "loss": rec.loss}
        report.update(extras)
    blob = json.dumps(report, indent=1, sort_keys=True)
    print(blob)
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(blob + "\n")
    return 0


def _add_interp(sub):
    p = sub.add_parser("interp", help="accuracy along the line between two checkpoints")
    p.add_argument("--ckpt-a", required=True)
    p.add_argument("--ckpt-b", required=True)
    p.add_argument("--grid", type=int, default=11)
    p.add_argument("--id-shard", required=True)
    p.add_argument("--ood-shard", required=True)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--out", default=None)
    return p


def cmd_interp(args) -> int:
    params_a, meta_a = load_checkpoint(args.ckpt_a)
    params_b, meta_b = load_checkpoint(args.ckpt_b)
    if meta_a["config_hash"] != meta_b["config_hash"]:
        raise NarLabError("checkpoints come from different model configs")
    cfg = ModelConfig.from_dict(meta_a["config"])
    id_set = read_shard(args.id_shard)
    ood_set = read_shard(args.ood_shard)
    lambdas = np.linspace(0.0, 1.0, args.grid)
    rows = interpolate(cfg, params_a, params_b, lambdas, id_set, ood_set,
                       batch_size=args.batch)
    lines = ["lambda,id_acc,ood_acc"]
    lines += [f"{lam:.6f},{ida:.6f},{ooda:.6f}" for lam, ida, ooda in rows]
    text = "\n".join(lines)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


def _add_probe(sub):
    p = sub.add_parser("bridge-probe", help="two-community bridge pair test")
    p.add_argument("--ckpt", default=None)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--random-baseline", action="store_true")
    p.add_argument("--pairs", type=int, default=1000)
    p.add_argument("--n-per-side", type=int, default=8)
    p.add_argument("--p-intra", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    return p


def cmd_probe(args) -> int:
    rng = Rng(args.seed)
    pairs = [sample_two_community_pair(args.n_per_side, args.p_intra, rng.child("pair", i))
             for i in range(args.pairs)]
    if args.random_baseline:
        predictor = random_mask_predictor(rng.child("baseline"))
        mode = "random"
    elif args.oracle:
        predictor = oracle_mask_predictor
        mode = "oracle"
    elif args.ckpt:
        params, meta = load_checkpoint(args.ckpt)
        predictor = model_mask_predictor(ModelConfig.from_dict(meta["config"]), params)
        mode = "model"
    else:
        raise NarLabError("bridge-probe needs --ckpt, --oracle, or --random-baseline")
    report = bridge_pair_probe(predictor, pairs)
    report["mode"] = mode
    blob = json.dumps(report, indent=1, sort_keys=True)
    print(blob)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(blob + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nar-lab",
        description="Graph-algorithm learning lab: data generation, training, evaluation.")
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen(sub)
    _add_train(sub)
    _add_eval(sub)
    _add_interp(sub)
    _add_probe(sub)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
                "interp": cmd_interp, "bridge-probe": cmd_probe}
    try:
        return handlers[args.command](args)
    except (NarLabError, ParseError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # pragma: no cover - internal failure path
        print(f"internal error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
