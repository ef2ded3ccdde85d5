"""Shared fixtures.

Fast unit tests get a small pre-generated dataset; the acceptance
module additionally requests full small-preset training runs, which
dominate the suite's wall clock.  Set NAR_LAB_TEST_CACHE to a writable
directory to keep shards and finished runs across pytest invocations;
training is bit-deterministic, so reuse cannot change any outcome.
"""

from __future__ import annotations

import json
import os
import time
from pathlib import Path

import pytest

from nar_lab.model import config_hash
from nar_lab.shards import shard_path, write_shard
from nar_lab.tasks import TaskId, generate_split, get_preset
from nar_lab.train import TrainConfig, train

MINI_SEED = 1301
DESK_SEED = 977


def _cache_root(tmp_path_factory) -> Path:
    env = os.environ.get("NAR_LAB_TEST_CACHE")
    if env:
        root = Path(env)
        root.mkdir(parents=True, exist_ok=True)
        return root
    return tmp_path_factory.mktemp("nar_lab_cache")


@pytest.fixture(scope="session")
def cache_root(tmp_path_factory) -> Path:
    return _cache_root(tmp_path_factory)


def _ensure_shards(root: Path, dataset: str, task: TaskId, config, master_seed: int,
                   encoding: str = "scalar") -> None:
    for split in ("train", "val", "test"):
        path = shard_path(root, dataset, task, split)
        if path.exists():
            continue
        instances = generate_split(task, config, split, master_seed=master_seed,
                                   encoding=encoding)
        write_shard(instances, path)


@pytest.fixture(scope="session")
def mini_data(cache_root) -> Path:
    """Small shards for loop-level tests: n=8 graphs, tiny splits."""
    root = cache_root / "mini_data"
    cfg = get_preset("CLRS", train_len=8, test_len=8, train_size=48, valtest_size=16)
    for task in (TaskId.bfs, TaskId.bellman_ford, TaskId.mst_kruskal, TaskId.minimum):
        _ensure_shards(root, "mini8", task, cfg, MINI_SEED)
    return root


@pytest.fixture(scope="session")
def desk_data(cache_root) -> Path:
    """The small-preset dataset the heavier training criteria run on.

    bfs and bellman_ford shards at n=16 with 2000 training instances,
    plus an n=32 4-regular test shard for the size-generalization check.
    """
    root = cache_root / "desk_data"
    cfg = get_preset("CLRS", train_size=2000, valtest_size=200)
    for task in (TaskId.bfs, TaskId.bellman_ford):
        _ensure_shards(root, "desk16", task, cfg, DESK_SEED)
    ood = get_preset("L-CLRS-Len", train_size=4, valtest_size=200)
    ood_path = shard_path(root, "reg32", TaskId.bfs, "test")
    if not ood_path.exists():
        instances = generate_split(TaskId.bfs, ood, "test", master_seed=DESK_SEED)
        write_shard(instances, ood_path)
    return root


class DeskRuns:
    """Trains small-preset models on demand, one per config, cached."""

    def __init__(self, data_root: Path, runs_root: Path):
        self.data_root = data_root
        self.runs_root = runs_root
        self._done: dict[str, dict] = {}

    def get(self, task: str, encoding: str = "scalar", seed: int = 0) -> dict:
        cfg = TrainConfig(task=task, dataset="desk16", encoding=encoding,
                          seed=seed, desk_scale=True)
        key = config_hash(cfg.resolved().model_config())
        if key in self._done:
            return self._done[key]
        run_dir = self.runs_root / f"{task}_{encoding}_s{seed}"
        marker = run_dir / "result.json"
        if marker.exists():
            result = json.loads(marker.read_text())
        else:
            t0 = time.time()
            out = train(cfg, self.data_root, run_dir, log=None)
            result = {
                "selected": str(out["selected"]),
                "best_val_node_acc": max(out["val_history"]),
                "wall_minutes": (time.time() - t0) / 60.0,
            }
            marker.write_text(json.dumps(result, indent=1, sort_keys=True))
        self._done[key] = result
        return result


@pytest.fixture(scope="session")
def desk_runs(cache_root, desk_data) -> DeskRuns:
    runs_root = cache_root / "desk_runs"
    runs_root.mkdir(parents=True, exist_ok=True)
    return DeskRuns(desk_data, runs_root)
