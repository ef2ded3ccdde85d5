"""Training loop: Adam with cosine annealing, gradient clipping,
periodic ID/OOD evaluation, checkpointing, and last-best selection.

Runs are deterministic given the config seed.  Each optimization step
draws its batch through a child generator keyed by the step number, so
resuming from a checkpoint replays the exact remaining stream.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .metrics import MetricRecord, evaluate
from .model import (ModelConfig, config_hash, forward, init_model_params, load_checkpoint,
                    loss_from_logits, make_batch, predict_from_logits, save_checkpoint,
                    wrap_params)
from .optim import AdamState, adam_step, clip_global_norm, cosine_lr, global_norm
from .processors import default_batch_size, parse_processor
from .rng import Rng
from .shards import read_shard, shard_path
from .tasks import SPLIT_BASE, SPLIT_SEED_STRIDE
from . import tensor as T

DESK_D_H = 64
DESK_T = 16
DESK_STEPS = 3000


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters; the defaults are the full-scale settings."""

    task: str
    dataset: str
    processor: str = "mpnn"
    encoding: str = "scalar"
    steps: int = 20000
    batch: int | None = None
    lr: float = 1e-4
    clip: float = 1.0
    schedule: str = "cosine"
    steps_T: int = 32
    d_h: int = 128
    seed: int = 0
    desk_scale: bool = False
    eval_interval: int = 500

    def __post_init__(self):
        if self.schedule not in ("cosine", "constant"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.steps < 1 or self.eval_interval < 1:
            raise ConfigError("steps and eval_interval must be positive")
        parse_processor(self.processor)

    def resolved(self) -> "TrainConfig":
        """Apply the desk-scale overrides, if requested."""
        if not self.desk_scale:
            return self
        return replace(self, d_h=DESK_D_H, steps_T=DESK_T, steps=DESK_STEPS)

    def batch_size(self) -> int:
        if self.batch is not None:
            return self.batch
        return default_batch_size(parse_processor(self.processor))

    def model_config(self) -> ModelConfig:
        return ModelConfig(task=self.task, processor=self.processor, encoding=self.encoding,
                           d_h=self.d_h, steps_T=self.steps_T, seed=self.seed)

    def to_dict(self) -> dict:
        return {
            "task": self.task, "dataset": self.dataset, "processor": self.processor,
            "encoding": self.encoding, "steps": self.steps, "batch": self.batch_size(),
            "lr": self.lr, "clip": self.clip, "schedule": self.schedule,
            "T": self.steps_T, "d_h": self.d_h, "seed": self.seed,
            "desk_scale": self.desk_scale, "eval_interval": self.eval_interval,
        }


def select_model(checkpoints, val_history):
    """Latest checkpoint among those attaining the max validation score."""
    if not val_history:
        raise ConfigError("empty validation history")
    best = max(val_history)
    idx = max(i for i, v in enumerate(val_history) if v == best)
    return checkpoints[idx]


def assert_split_hygiene(split_sets: dict) -> None:
    """Instance seeds must sit in their split's disjoint range."""
    for split, instances in split_sets.items():
        lo = SPLIT_BASE[split] * SPLIT_SEED_STRIDE
        hi = lo + SPLIT_SEED_STRIDE
        for inst in instances:
            if not (lo <= inst.seed < hi):
                raise ConfigError(
                    f"instance seed {inst.seed} outside the {split} range [{lo}, {hi})")


def load_split(data_root, config: TrainConfig, split: str):
    path = shard_path(data_root, config.dataset, config.task, split)
    if not path.exists():
        raise FileNotFoundError(f"missing shard {path}; generate the dataset first")
    return read_shard(path)


def _save_opt(path, state: AdamState, manifest_names):
    flat = []
    for name in manifest_names:
        flat.append(np.asarray(state.m[name], dtype=np.float64).ravel())
    for name in manifest_names:
        flat.append(np.asarray(state.v[name], dtype=np.float64).ravel())
    with open(path, "wb") as fh:
        fh.write(np.concatenate(flat).astype("<f8").tobytes())


def _load_opt(path, params: dict, count: int) -> AdamState:
    vec = np.frombuffer(open(path, "rb").read(), dtype="<f8").astype(np.float64)
    names = sorted(params)
    m, v = {}, {}
    at = 0
    for target in (m, v):
        for name in names:
            size = params[name].size
            target[name] = vec[at:at + size].reshape(params[name].shape)
            at += size
    return AdamState(m=m, v=v, count=count)


class _MetricsWriter:
    """Appends metrics.csv rows; writes the header only once."""

    COLUMNS = ("step", "split", "task", "node_acc", "graph_acc", "loss")

    def __init__(self, path):
        fresh = not os.path.exists(path) or os.path.getsize(path) == 0
        self.fh = open(path, "a", newline="")
        self.writer = csv.writer(self.fh)
        if fresh:
            self.writer.writerow(self.COLUMNS)

    def write(self, rec: MetricRecord):
        self.writer.writerow([rec.step, rec.split, rec.task,
                              f"{rec.node_acc:.6f}", f"{rec.graph_acc:.6f}", f"{rec.loss:.6f}"])
        self.fh.flush()

    def close(self):
        self.fh.close()


def train(config: TrainConfig, data_root, run_dir, resume=None, log=None, eval_batch=None):
    """Run the full loop.

    Returns:
        dict with the selected checkpoint path, its step, the final
        parameters, and the in-memory MetricRecord stream.
    """
    config = config.resolved()
    mcfg = config.model_config()
    proc = parse_processor(config.processor)
    batch_size = config.batch_size()

    splits = {s: load_split(data_root, config, s) for s in ("train", "val", "test")}
    assert_split_hygiene(splits)
    train_set, val_set, test_set = splits["train"], splits["val"], splits["test"]

    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        json.dump({**config.to_dict(), "config_hash": config_hash(mcfg)}, fh, indent=1,
                  sort_keys=True)

    params = init_model_params(mcfg)
    opt = AdamState.init(params)
    start_step = 0
    if resume is not None:
        params, meta = load_checkpoint(resume)
        if meta["config_hash"] != config_hash(mcfg):
            raise ConfigError("checkpoint was trained under a different model config")
        start_step = int(meta["step"])
        opt = _load_opt(str(resume)[:-4] + ".opt.bin", params, int(meta["adam_count"]))

    rng = Rng(config.seed)
    checkpoints = []
    val_history = []
    if resume is not None:
        # recover the evaluation history so selection spans the whole run
        csv_path = os.path.join(run_dir, "metrics.csv")
        if os.path.exists(csv_path):
            with open(csv_path, newline="") as fh:
                for row in csv.DictReader(fh):
                    step = int(row["step"])
                    ckpt = os.path.join(run_dir, f"ckpt_{step}.bin")
                    if row["split"] == "val" and step <= start_step and os.path.exists(ckpt):
                        checkpoints.append(ckpt)
                        val_history.append(float(row["node_acc"]))
    writer = _MetricsWriter(os.path.join(run_dir, "metrics.csv"))
    records = []

    def emit(rec):
        records.append(rec)
        writer.write(rec)
        if log:
            log(rec.row())

    try:
        for s in range(start_step + 1, config.steps + 1):
            if config.schedule == "cosine":
                lr = cosine_lr(s - 1, config.steps, config.lr)
            else:
                lr = config.lr
            batch_rng = rng.child("step", s)
            idx = batch_rng.integers(0, len(train_set), batch_size)
            batch = make_batch([train_set[i] for i in idx], proc)
            params_t = wrap_params(params)
            with T.Tape() as tape:
                logits = forward(mcfg, params_t, batch)
                loss = loss_from_logits(batch.kind, logits, batch.targets)
                tape.backward(loss)
            grads = {k: (t.grad if t.grad is not None else np.zeros(t.shape))
                     for k, t in params_t.items()}
            grads = clip_global_norm(grads, config.clip)
            assert global_norm(grads) <= config.clip + 1e-9
            params, opt = adam_step(params, grads, opt, lr)

            preds = predict_from_logits(batch.kind, logits.data, batch)
            truths = [i.labels for i in batch.instances]
            node = float(np.mean([np.mean(np.asarray(p.values) == np.asarray(t.values))
                                  for p, t in zip(preds, truths)]))
            graph = float(np.mean([float(np.array_equal(p.values, t.values))
                                   for p, t in zip(preds, truths)]))
            emit(MetricRecord(step=s, split="train", task=config.task,
                              node_acc=node, graph_acc=graph, loss=float(loss.data)))

            if s % config.eval_interval == 0 or s == config.steps:
                for split, dataset in (("val", val_set), ("test", test_set)):
                    rec, _extras = evaluate(mcfg, params, dataset, step=s, split=split,
                                            batch_size=eval_batch)
                    rec.task = config.task
                    emit(rec)
                    if split == "val":
                        val_history.append(rec.node_acc)
                ckpt = os.path.join(run_dir, f"ckpt_{s}.bin")
                save_checkpoint(ckpt, params, s, mcfg, extra={"adam_count": opt.count})
                _save_opt(ckpt[:-4] + ".opt.bin", opt, sorted(params))
                checkpoints.append(ckpt)
    finally:
        writer.close()

    selected = select_model(checkpoints, val_history)
    with open(os.path.join(run_dir, "selected.json"), "w") as fh:
        json.dump({"checkpoint": selected, "step": int(os.path.basename(selected)[5:-4]),
                   "val_node_acc": max(val_history)}, fh, indent=1)
    return {"selected": selected, "params": params, "records": records,
            "checkpoints": checkpoints, "val_history": val_history}
