"""Training loop: config handling, determinism, resume, selection, hygiene."""

import csv
import json
import os
import shutil

import numpy as np
import pytest

from nar_lab.errors import ConfigError
from nar_lab.model import ModelConfig, config_hash, flatten_params, load_checkpoint
from nar_lab.shards import shard_path, write_shard
from nar_lab.tasks import DatasetConfig, TaskId, generate_split, instance_seed
from nar_lab.train import (DESK_D_H, DESK_STEPS, DESK_T, TrainConfig,
                           assert_split_hygiene, select_model, train)

TASK = "bfs"
DATASET = "tiny"


def make_dataset(root, n=6, train_size=8, valtest=4, seed=101):
    cfg = DatasetConfig(
        name=DATASET, train_len=n, test_len=n, train_size=train_size,
        valtest_size=valtest, generator="er_fixed_p", p=0.5,
    )
    for split in ("train", "val", "test"):
        insts = generate_split(TaskId(TASK), cfg, split, master_seed=seed)
        write_shard(insts, shard_path(root, DATASET, TaskId(TASK), split))
    return cfg


def tiny_config(**kw):
    base = dict(task=TASK, dataset=DATASET, steps=6, batch=4, d_h=8, steps_T=2,
                eval_interval=3, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("shards")
    make_dataset(root)
    return root


@pytest.fixture(scope="module")
def full_run(data_root, tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("run_full")
    out = train(tiny_config(), data_root, run_dir)
    return run_dir, out


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            tiny_config(schedule="step_decay")
        with pytest.raises(ConfigError):
            tiny_config(steps=0)
        with pytest.raises(ConfigError):
            tiny_config(eval_interval=0)
        with pytest.raises(ConfigError):
            tiny_config(processor="gin")

    def test_desk_overrides(self):
        cfg = tiny_config(desk_scale=True).resolved()
        assert (cfg.d_h, cfg.steps_T, cfg.steps) == (DESK_D_H, DESK_T, DESK_STEPS)
        plain = tiny_config().resolved()
        assert (plain.d_h, plain.steps_T, plain.steps) == (8, 2, 6)

    def test_default_batch_follows_processor(self):
        assert TrainConfig(task=TASK, dataset=DATASET).batch_size() == 32
        assert TrainConfig(task=TASK, dataset=DATASET, processor="twl").batch_size() == 16
        assert tiny_config().batch_size() == 4

    def test_model_config_mapping(self):
        cfg = tiny_config(encoding="sinusoidal", seed=5)
        m = cfg.model_config()
        assert m == ModelConfig(task=TASK, processor="mpnn", encoding="sinusoidal",
                                d_h=8, steps_T=2, seed=5)


class TestSelectModel:
    def test_latest_among_best(self):
        ckpts = ["c1", "c2", "c3", "c4"]
        assert select_model(ckpts, [0.5, 0.9, 0.9, 0.7]) == "c3"
        assert select_model(ckpts, [0.5, 0.6, 0.7, 0.9]) == "c4"
        assert select_model(ckpts[:1], [0.2]) == "c1"

    def test_empty_history_raises(self):
        with pytest.raises(ConfigError):
            select_model([], [])


class TestSplitHygiene:
    class _Stub:
        def __init__(self, seed):
            self.seed = seed

    def test_accepts_structured_seeds(self):
        sets = {s: [self._Stub(instance_seed(s, i)) for i in range(3)]
                for s in ("train", "val", "test")}
        assert_split_hygiene(sets)

    def test_rejects_cross_split_seed(self):
        sets = {"val": [self._Stub(instance_seed("train", 0))]}
        with pytest.raises(ConfigError):
            assert_split_hygiene(sets)


class TestTrainRun:
    def test_outputs_and_artifacts(self, full_run):
        run_dir, out = full_run
        assert set(out) >= {"selected", "params", "records", "checkpoints", "val_history"}
        assert os.path.exists(out["selected"])
        assert out["checkpoints"] == [os.path.join(run_dir, "ckpt_3.bin"),
                                      os.path.join(run_dir, "ckpt_6.bin")]
        assert len(out["val_history"]) == 2
        cfg_blob = json.load(open(os.path.join(run_dir, "config.json")))
        assert cfg_blob["config_hash"] == config_hash(tiny_config().model_config())
        sel = json.load(open(os.path.join(run_dir, "selected.json")))
        assert sel["checkpoint"] == out["selected"]
        assert sel["step"] in (3, 6)
        assert sel["val_node_acc"] == max(out["val_history"])

    def test_metrics_csv_schema(self, full_run):
        run_dir, out = full_run
        with open(os.path.join(run_dir, "metrics.csv"), newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows and set(rows[0]) == {"step", "split", "task", "node_acc",
                                         "graph_acc", "loss"}
        splits = {r["split"] for r in rows}
        assert splits == {"train", "val", "test"}
        for r in rows:
            assert r["task"] == TASK
            float(r["loss"]); float(r["node_acc"]); float(r["graph_acc"])
        train_rows = [r for r in rows if r["split"] == "train"]
        assert [int(r["step"]) for r in train_rows] == list(range(1, 7))

    def test_records_match_csv_stream(self, full_run):
        _, out = full_run
        recs = out["records"]
        assert len([r for r in recs if r.split == "train"]) == 6
        assert len([r for r in recs if r.split == "val"]) == 2
        assert len([r for r in recs if r.split == "test"]) == 2
        assert all(np.isfinite(r.loss) for r in recs)

    def test_checkpoint_sidecars_complete(self, full_run):
        run_dir, out = full_run
        for ckpt in out["checkpoints"]:
            assert os.path.exists(ckpt[:-4] + ".json")
            assert os.path.exists(ckpt[:-4] + ".opt.bin")
            params, meta = load_checkpoint(ckpt)
            assert meta["adam_count"] == meta["step"]

    def test_deterministic_rerun(self, data_root, full_run, tmp_path):
        _, out = full_run
        out2 = train(tiny_config(), data_root, tmp_path / "rerun")
        v1, m1 = flatten_params(out["params"])
        v2, m2 = flatten_params(out2["params"])
        assert m1 == m2
        np.testing.assert_array_equal(v1, v2)

    def test_seed_changes_trajectory(self, data_root, full_run, tmp_path):
        _, out = full_run
        out2 = train(tiny_config(seed=1), data_root, tmp_path / "seed1")
        v1, _ = flatten_params(out["params"])
        v2, _ = flatten_params(out2["params"])
        assert not np.array_equal(v1, v2)

    def test_missing_shard_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            train(tiny_config(), tmp_path / "empty", tmp_path / "run")


class TestResume:
    def test_bit_identical_to_uninterrupted_run(self, data_root, full_run, tmp_path):
        src_dir, out = full_run
        dst = tmp_path / "resumed"
        dst.mkdir()
        for name in ("ckpt_3.bin", "ckpt_3.json", "ckpt_3.opt.bin", "metrics.csv"):
            shutil.copy(os.path.join(src_dir, name), dst / name)
        out2 = train(tiny_config(), data_root, dst, resume=dst / "ckpt_3.bin")
        v1, _ = flatten_params(out["params"])
        v2, _ = flatten_params(out2["params"])
        np.testing.assert_array_equal(v1, v2)
        assert os.path.basename(out2["selected"]) == os.path.basename(out["selected"])
        assert out2["val_history"] == out["val_history"]

    def test_config_mismatch_rejected(self, data_root, full_run, tmp_path):
        src_dir, _ = full_run
        dst = tmp_path / "wrongcfg"
        dst.mkdir()
        for name in ("ckpt_3.bin", "ckpt_3.json", "ckpt_3.opt.bin"):
            shutil.copy(os.path.join(src_dir, name), dst / name)
        with pytest.raises(ConfigError):
            train(tiny_config(d_h=16), data_root, dst, resume=dst / "ckpt_3.bin")


class TestHygieneInTrain:
    def test_mis_seeded_shard_rejected(self, tmp_path):
        root = tmp_path / "poisoned"
        cfg = make_dataset(root)
        # overwrite the val shard with training-range seeds
        insts = generate_split(TaskId(TASK), cfg, "train", master_seed=101)[:4]
        write_shard(insts, shard_path(root, DATASET, TaskId(TASK), "val"))
        with pytest.raises(ConfigError):
            train(tiny_config(), root, tmp_path / "run")
