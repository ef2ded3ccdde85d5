"""Task schemas, input channels, instance sampling, and split generation."""

import numpy as np
import pytest

from nar_lab.errors import ParameterError
from nar_lab.oracles import Labels, OutputKind
from nar_lab.rng import Rng
from nar_lab.tasks import (ENCODINGS, PRESETS, RANDOM_FEATURE_DIM, SINUSOIDAL_DIM,
                           SPLIT_SEED_STRIDE, TASK_SCHEMAS, DatasetConfig, TaskId,
                           TaskInstance, channel_spec, check_instance, encode_positions,
                           generate_split, get_preset, instance_seed,
                           make_compressed_index_instance, make_instance, order_flags,
                           scalar_positions, seed_split, sinusoidal_positions)

SMALL = DatasetConfig(
    name="small", train_len=7, test_len=9, train_size=6, valtest_size=4,
    generator="er_fixed_p", p=0.5,
)


class TestSchemas:
    def test_all_tasks_have_schemas(self):
        assert set(TASK_SCHEMAS) == set(TaskId)
        assert len(TaskId) == 13

    def test_flag_spot_checks(self):
        s = TASK_SCHEMAS
        bf = s[TaskId.bellman_ford]
        assert (bf.directed, bf.weighted, bf.has_start) == (False, True, True)
        dag = s[TaskId.dag_shortest_paths]
        assert dag.directed and dag.is_dag and dag.weighted and dag.has_start
        fw = s[TaskId.floyd_warshall]
        assert fw.kind is OutputKind.pair_pointer and fw.directed and fw.weighted
        assert s[TaskId.mst_prim].has_start and not s[TaskId.mst_kruskal].has_start
        assert s[TaskId.find_maximum_subarray_kadane].slots == 2
        assert s[TaskId.minimum].slots == 1
        for t in (TaskId.quicksort, TaskId.find_maximum_subarray_kadane, TaskId.minimum):
            assert s[t].is_sequence
        for t in (TaskId.dfs, TaskId.topological_sort,
                  TaskId.strongly_connected_components, TaskId.floyd_warshall):
            assert s[t].directed
        assert not s[TaskId.bridges].directed

    def test_encodings_tuple(self):
        assert ENCODINGS == ("scalar", "random_scalar", "sinusoidal", "edge_position")


class TestPositions:
    def test_scalar_positions(self):
        np.testing.assert_array_equal(scalar_positions(4), [0.0, 0.25, 0.5, 0.75])

    def test_sinusoidal_shape_and_first_row(self):
        pe = sinusoidal_positions(5)
        assert pe.shape == (5, SINUSOIDAL_DIM)
        np.testing.assert_array_equal(pe[0, 0::2], np.zeros(SINUSOIDAL_DIM // 2))
        np.testing.assert_array_equal(pe[0, 1::2], np.ones(SINUSOIDAL_DIM // 2))

    def test_order_flags_exact(self):
        rows = order_flags(3)
        expect = np.array([
            [0, 1, 1], [0, 2, 1],
            [1, 0, 0], [1, 2, 1],
            [2, 0, 0], [2, 1, 0],
        ], dtype=np.float64)
        np.testing.assert_array_equal(rows, expect)

    def test_encode_random_scalar_sorted(self):
        node, edge = encode_positions(30, "random_scalar", Rng(7))
        pos = node["pos"]
        assert edge == {}
        assert pos.shape == (30,)
        assert np.all(np.diff(pos) >= 0)
        assert pos.min() >= 0.0 and pos.max() < 1.0

    def test_encode_edge_position(self):
        node, edge = encode_positions(4, "edge_position", Rng(8))
        assert node["rand"].shape == (4, RANDOM_FEATURE_DIM)
        assert edge["precedes"].shape == (12, 3)

    def test_bad_inputs(self):
        with pytest.raises(ParameterError):
            encode_positions(0, "scalar", Rng(1))
        with pytest.raises(ParameterError):
            encode_positions(3, "fourier", Rng(1))


class TestChannelSpec:
    def test_spot_checks(self):
        assert channel_spec(TaskId.bfs, "scalar") == ({"pos": 1, "start": 1}, {})
        assert channel_spec(TaskId.bellman_ford, "sinusoidal") == (
            {"pos": SINUSOIDAL_DIM, "start": 1}, {"weight": 1}
        )
        assert channel_spec(TaskId.find_maximum_subarray_kadane, "edge_position") == (
            {"rand": RANDOM_FEATURE_DIM, "value": 1}, {"precedes": 1}
        )

    def test_bad_encoding(self):
        with pytest.raises(ParameterError):
            channel_spec(TaskId.bfs, "learned")

    @pytest.mark.parametrize("task", list(TaskId))
    @pytest.mark.parametrize("encoding", ENCODINGS)
    def test_agrees_with_make_instance(self, task, encoding):
        node_spec, edge_spec = channel_spec(task, encoding)
        inst = make_instance(task, SMALL, "val", Rng(91), encoding=encoding)
        assert set(inst.node_inputs) == set(node_spec)
        assert set(inst.edge_inputs) == set(edge_spec)
        for name, width in node_spec.items():
            arr = inst.node_inputs[name]
            got = 1 if arr.ndim == 1 else arr.shape[1]
            assert got == width, f"{name}: {got} != {width}"
        for name in edge_spec:
            assert inst.edge_inputs[name].shape[1] == 3


class TestPresets:
    def test_golden_table(self):
        rows = {
            name: (c.train_len, c.test_len, c.train_size, c.valtest_size,
                   c.generator, c.k_train, c.k_test)
            for name, c in PRESETS.items()
        }
        assert rows == {
            "CLRS": (16, 64, 1000, 32, "er_fixed_p", None, None),
            "L-CLRS": (16, 64, 100000, 32, "er_fixed_p", None, None),
            "L-CLRS-Len": (16, 32, 100000, 1000, "k_regular", 4, 4),
            "L-CLRS-Deg": (32, 32, 100000, 1000, "k_regular", 4, 8),
            "L-CLRS-Len-Deg": (16, 32, 100000, 1000, "k_regular", 4, 8),
        }
        assert all(c.p == 0.5 for c in PRESETS.values())

    def test_get_preset_copies(self):
        a = get_preset("CLRS")
        a.train_size = 5
        assert PRESETS["CLRS"].train_size == 1000

    def test_get_preset_overrides(self):
        c = get_preset("L-CLRS-Len", train_size=8, valtest_size=2)
        assert (c.train_size, c.valtest_size) == (8, 2)
        assert c.generator == "k_regular" and c.k_test == 4

    def test_unknown_preset(self):
        with pytest.raises(ParameterError):
            get_preset("CLRS-XL")

    def test_config_validation(self):
        with pytest.raises(ParameterError):
            DatasetConfig("x", 8, 8, 4, 4, "barabasi_albert")
        with pytest.raises(ParameterError):
            DatasetConfig("x", 8, 8, 4, 4, "k_regular")

    def test_split_sizing(self):
        c = get_preset("L-CLRS-Deg")
        assert (c.length("train"), c.length("val"), c.length("test")) == (32, 32, 32)
        assert (c.size("train"), c.size("val"), c.size("test")) == (100000, 1000, 1000)
        d = get_preset("CLRS")
        assert (d.length("train"), d.length("val"), d.length("test")) == (16, 16, 64)


class TestMakeInstance:
    def test_deterministic_per_stream(self):
        a = make_instance(TaskId.bellman_ford, SMALL, "train", Rng(55))
        b = make_instance(TaskId.bellman_ford, SMALL, "train", Rng(55))
        assert a.graph.edges == b.graph.edges
        assert a.labels == b.labels
        for k in a.node_inputs:
            np.testing.assert_array_equal(a.node_inputs[k], b.node_inputs[k])
        c = make_instance(TaskId.bellman_ford, SMALL, "train", Rng(56))
        assert a.graph.edges != c.graph.edges or a.start_node() != c.start_node()

    def test_start_is_one_hot(self):
        inst = make_instance(TaskId.bfs, SMALL, "train", Rng(3))
        flag = inst.node_inputs["start"]
        assert flag.sum() == 1.0 and set(np.unique(flag)) <= {0.0, 1.0}
        assert inst.start_node() == int(np.argmax(flag))

    def test_weight_channel_matches_edges(self):
        inst = make_instance(TaskId.mst_kruskal, SMALL, "train", Rng(4))
        rows = inst.edge_inputs["weight"]
        assert rows.shape == (inst.graph.m, 3)
        for (u, v, w), row in zip(inst.graph.edges, rows):
            assert (row[0], row[1]) == (u, v) and row[2] == w

    def test_dag_edges_point_low_to_high(self):
        inst = make_instance(TaskId.topological_sort, SMALL, "train", Rng(5))
        assert inst.graph.directed
        assert all(u < v for u, v, _ in inst.graph.edges)

    def test_sequence_uses_complete_graph(self):
        inst = make_instance(TaskId.minimum, SMALL, "train", Rng(6))
        n = SMALL.train_len
        assert inst.graph.m == n * (n - 1) // 2
        assert not inst.graph.directed
        assert inst.sequence_values().shape == (n,)

    def test_test_split_uses_test_len(self):
        inst = make_instance(TaskId.bfs, SMALL, "test", Rng(7))
        assert inst.n == SMALL.test_len
        val = make_instance(TaskId.bfs, SMALL, "val", Rng(7))
        assert val.n == SMALL.train_len

    def test_unknown_split(self):
        with pytest.raises(ParameterError):
            make_instance(TaskId.bfs, SMALL, "dev", Rng(1))

    def test_labels_pass_check_instance(self):
        for task in TaskId:
            inst = make_instance(task, SMALL, "train", Rng(11))
            assert check_instance(inst), task.value

    def test_check_instance_catches_corruption(self):
        inst = make_instance(TaskId.bfs, SMALL, "train", Rng(12))
        vals = inst.labels.values.copy()
        vals[0] = (vals[0] + 1) % inst.n
        bad = TaskInstance(inst.task, inst.graph, inst.node_inputs, inst.edge_inputs,
                           Labels(inst.labels.kind, vals), seed=inst.seed)
        if not np.array_equal(vals, inst.labels.values):
            assert not check_instance(bad)


class TestRandomScalarMixing:
    def test_train_mixes_val_stays_deterministic(self):
        n = SMALL.train_len
        base = scalar_positions(n)
        kept = 0
        draws = 200
        for i in range(draws):
            inst = make_instance(TaskId.bfs, SMALL, "train", Rng(900).child(i),
                                 encoding="random_scalar")
            if np.array_equal(inst.node_inputs["pos"], base):
                kept += 1
        assert 70 <= kept <= 130, kept
        for i in range(20):
            inst = make_instance(TaskId.bfs, SMALL, "val", Rng(901).child(i),
                                 encoding="random_scalar")
            np.testing.assert_array_equal(inst.node_inputs["pos"], base)


class TestSplitSeeds:
    def test_structured_seeds(self):
        assert instance_seed("train", 7) == 7
        assert instance_seed("val", 7) == SPLIT_SEED_STRIDE + 7
        assert instance_seed("test", 7) == 2 * SPLIT_SEED_STRIDE + 7
        for s in ("train", "val", "test"):
            assert seed_split(instance_seed(s, 123)) == s
        with pytest.raises(ParameterError):
            seed_split(5 * SPLIT_SEED_STRIDE)


class TestGenerateSplit:
    def test_sizes_and_seeds(self):
        out = generate_split(TaskId.bfs, SMALL, "val", master_seed=77)
        assert len(out) == SMALL.valtest_size
        assert [i.seed for i in out] == [instance_seed("val", k) for k in range(len(out))]
        assert all(i.n == SMALL.train_len for i in out)

    def test_reproducible(self):
        a = generate_split(TaskId.mst_kruskal, SMALL, "train", master_seed=5)
        b = generate_split(TaskId.mst_kruskal, SMALL, "train", master_seed=5)
        for x, y in zip(a, b):
            assert x.graph.edges == y.graph.edges and x.labels == y.labels

    def test_master_seed_matters(self):
        a = generate_split(TaskId.bfs, SMALL, "train", master_seed=5)
        b = generate_split(TaskId.bfs, SMALL, "train", master_seed=6)
        assert any(x.graph.edges != y.graph.edges for x, y in zip(a, b))

    def test_thread_count_invariant(self):
        a = generate_split(TaskId.bellman_ford, SMALL, "train", master_seed=9, threads=1)
        b = generate_split(TaskId.bellman_ford, SMALL, "train", master_seed=9, threads=3)
        for x, y in zip(a, b):
            assert x.graph.edges == y.graph.edges and x.labels == y.labels
            for k in x.node_inputs:
                np.testing.assert_array_equal(x.node_inputs[k], y.node_inputs[k])

    def test_splits_draw_distinct_streams(self):
        tr = generate_split(TaskId.bfs, SMALL, "train", master_seed=4)
        va = generate_split(TaskId.bfs, SMALL, "val", master_seed=4)
        assert tr[0].graph.edges != va[0].graph.edges


class TestCompressedIndexInstances:
    def test_positions_stay_on_big_graph_scale(self):
        inst = make_compressed_index_instance(TaskId.bfs, Rng(41))
        assert inst.n == 16
        pos = inst.node_inputs["pos"]
        np.testing.assert_array_equal(pos, np.arange(16) / 64.0)
        assert pos.max() < 0.25

    def test_small_instances_verify(self):
        for trial in range(10):
            inst = make_compressed_index_instance(
                TaskId.bfs, Rng(42).child(trial), n_total=24, keep=6
            )
            assert check_instance(inst), trial

    def test_reproducible(self):
        a = make_compressed_index_instance(TaskId.bridges, Rng(43))
        b = make_compressed_index_instance(TaskId.bridges, Rng(43))
        assert a.graph.edges == b.graph.edges and a.labels == b.labels

    def test_rejects_unsupported_tasks(self):
        for task in (TaskId.bellman_ford, TaskId.dfs, TaskId.minimum):
            with pytest.raises(ParameterError):
                make_compressed_index_instance(task, Rng(44))

    def test_rejects_bad_keep(self):
        with pytest.raises(ParameterError):
            make_compressed_index_instance(TaskId.bfs, Rng(45), n_total=8, keep=9)
