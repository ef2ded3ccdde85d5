"""NDJSON shard round-trips, byte stability, and malformed-line errors."""

import json

import numpy as np
import pytest

from nar_lab.errors import ParseError
from nar_lab.rng import Rng
from nar_lab.shards import (instance_to_record, read_shard, record_to_instance,
                            shard_path, write_shard)
from nar_lab.tasks import DatasetConfig, TaskId, generate_split

CFG = DatasetConfig(
    name="io", train_len=6, test_len=8, train_size=5, valtest_size=3,
    generator="er_fixed_p", p=0.5,
)


def sample_instances(task=TaskId.bellman_ford, encoding="scalar"):
    return generate_split(task, CFG, "train", master_seed=31, encoding=encoding)


def assert_instances_equal(a, b):
    assert a.task is b.task and a.seed == b.seed
    assert a.graph.n == b.graph.n and a.graph.directed == b.graph.directed
    assert a.graph.edges == b.graph.edges
    assert set(a.node_inputs) == set(b.node_inputs)
    for k in a.node_inputs:
        np.testing.assert_array_equal(a.node_inputs[k], b.node_inputs[k])
    assert set(a.edge_inputs) == set(b.edge_inputs)
    for k in a.edge_inputs:
        np.testing.assert_array_equal(a.edge_inputs[k], b.edge_inputs[k])
    assert a.labels == b.labels


class TestRoundTrip:
    @pytest.mark.parametrize("task,encoding", [
        (TaskId.bellman_ford, "scalar"),
        (TaskId.dfs, "sinusoidal"),
        (TaskId.floyd_warshall, "scalar"),
        (TaskId.mst_prim, "scalar"),
        (TaskId.find_maximum_subarray_kadane, "edge_position"),
        (TaskId.minimum, "random_scalar"),
    ])
    def test_exact_field_recovery(self, task, encoding, tmp_path):
        insts = generate_split(task, CFG, "train", master_seed=13, encoding=encoding)
        p = tmp_path / "x.ndjson"
        write_shard(insts, p)
        back = read_shard(p)
        assert len(back) == len(insts)
        for a, b in zip(insts, back):
            assert_instances_equal(a, b)

    def test_write_read_write_byte_stable(self, tmp_path):
        insts = sample_instances()
        p1 = tmp_path / "a.ndjson"
        p2 = tmp_path / "b.ndjson"
        write_shard(insts, p1)
        write_shard(read_shard(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_full_float_precision(self):
        insts = sample_instances()
        rec = instance_to_record(insts[0])
        back = record_to_instance(json.loads(json.dumps(rec)))
        for (u, v, w), (u2, v2, w2) in zip(insts[0].graph.edges, back.graph.edges):
            assert (u, v) == (u2, v2) and w == w2

    def test_creates_parent_dirs(self, tmp_path):
        p = tmp_path / "deep" / "nested" / "train.ndjson"
        write_shard(sample_instances(), p)
        assert p.exists()

    def test_one_line_per_instance(self, tmp_path):
        insts = sample_instances()
        p = tmp_path / "lines.ndjson"
        write_shard(insts, p)
        lines = [ln for ln in p.read_text().splitlines() if ln.strip()]
        assert len(lines) == len(insts)
        for ln in lines:
            rec = json.loads(ln)
            assert set(rec) == {"task", "seed", "n", "directed", "edges",
                                "node_inputs", "edge_inputs", "labels"}


class TestShardPath:
    def test_layout(self, tmp_path):
        p = shard_path(tmp_path, "CLRS", TaskId.bfs, "val")
        assert p == tmp_path / "CLRS" / "bfs" / "val.ndjson"

    def test_accepts_task_name_string(self, tmp_path):
        assert shard_path(tmp_path, "d", "bfs", "test").name == "test.ndjson"


class TestErrors:
    def test_invalid_json_line_number(self, tmp_path):
        p = tmp_path / "bad.ndjson"
        insts = sample_instances()
        good = json.dumps(instance_to_record(insts[0]), separators=(",", ":"))
        p.write_text(good + "\n{not json\n")
        with pytest.raises(ParseError) as exc:
            read_shard(p)
        assert "2" in str(exc.value)

    def test_missing_field(self, tmp_path):
        rec = instance_to_record(sample_instances()[0])
        del rec["labels"]
        p = tmp_path / "missing.ndjson"
        p.write_text(json.dumps(rec) + "\n")
        with pytest.raises(ParseError):
            read_shard(p)

    def test_malformed_labels(self, tmp_path):
        rec = instance_to_record(sample_instances()[0])
        rec["labels"] = {"values": [0, 1]}
        p = tmp_path / "labkind.ndjson"
        p.write_text(json.dumps(rec) + "\n")
        with pytest.raises(ParseError):
            read_shard(p)

    def test_bad_task_name(self, tmp_path):
        rec = instance_to_record(sample_instances()[0])
        rec["task"] = "alpha_beta_pruning"
        p = tmp_path / "task.ndjson"
        p.write_text(json.dumps(rec) + "\n")
        with pytest.raises(ParseError):
            read_shard(p)

    def test_blank_lines_skipped(self, tmp_path):
        insts = sample_instances()
        p = tmp_path / "blank.ndjson"
        body = json.dumps(instance_to_record(insts[0]), separators=(",", ":"))
        p.write_text("\n" + body + "\n\n")
        assert len(read_shard(p)) == 1

    def test_record_missing_field_direct(self):
        with pytest.raises(ValueError):
            record_to_instance({"task": "bfs"})
