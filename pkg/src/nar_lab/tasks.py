"""Task definitions and instance generation.

A task instance bundles a graph (or a sequence carried on a fully
connected graph), named input feature channels, and oracle labels.
Instance generation is deterministic: the tuple (master seed, task,
split, index) fixes every random draw, so shards are reproducible
regardless of generation order or worker count.

Instance seeds are structured as split_base + index with disjoint
per-split ranges; the trainer later asserts this partition as its
split-hygiene check.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ParameterError
from .graphs import Graph, induced_subgraph, sample_er, sample_k_regular
from .oracles import (
    Labels,
    OutputKind,
    bfs_parents,
    dfs_forest,
    mst,
    sequence_oracle,
    shortest_paths,
    structure,
)
from .reference import brute_force_check
from .rng import Rng

SINUSOIDAL_DIM = 16
RANDOM_FEATURE_DIM = 16

# Instance seeds: split_base + index, giving each split a disjoint range.
SPLIT_SEED_STRIDE = 1 << 40
SPLIT_BASE = {"train": 0, "val": 1, "test": 2}
SPLITS = ("train", "val", "test")


class TaskId(str, Enum):
    bfs = "bfs"
    dfs = "dfs"
    bellman_ford = "bellman_ford"
    dag_shortest_paths = "dag_shortest_paths"
    floyd_warshall = "floyd_warshall"
    mst_prim = "mst_prim"
    mst_kruskal = "mst_kruskal"
    topological_sort = "topological_sort"
    strongly_connected_components = "strongly_connected_components"
    bridges = "bridges"
    quicksort = "quicksort"
    find_maximum_subarray_kadane = "find_maximum_subarray_kadane"
    minimum = "minimum"


@dataclass(frozen=True)
class TaskSchema:
    """Static per-task properties driving sampling, channels, and decoding."""

    kind: OutputKind
    directed: bool = False  # sampled graphs are directed
    is_dag: bool = False  # edges oriented low -> high index
    weighted: bool = False  # uniform [0,1] edge weights + weight channel
    is_sequence: bool = False  # values on a fully connected graph
    has_start: bool = False  # one-hot start/source node channel
    slots: int = 1  # graph_pointer output slots


TASK_SCHEMAS: dict[TaskId, TaskSchema] = {
    TaskId.bfs: TaskSchema(OutputKind.node_pointer, has_start=True),
    TaskId.dfs: TaskSchema(OutputKind.node_pointer, directed=True),
    TaskId.bellman_ford: TaskSchema(OutputKind.node_pointer, weighted=True, has_start=True),
    TaskId.dag_shortest_paths: TaskSchema(
        OutputKind.node_pointer, directed=True, is_dag=True, weighted=True, has_start=True
    ),
    TaskId.floyd_warshall: TaskSchema(OutputKind.pair_pointer, directed=True, weighted=True),
    TaskId.mst_prim: TaskSchema(OutputKind.edge_mask, weighted=True, has_start=True),
    TaskId.mst_kruskal: TaskSchema(OutputKind.edge_mask, weighted=True),
    TaskId.topological_sort: TaskSchema(OutputKind.node_pointer, directed=True, is_dag=True),
    TaskId.strongly_connected_components: TaskSchema(OutputKind.node_pointer, directed=True),
    TaskId.bridges: TaskSchema(OutputKind.edge_mask),
    TaskId.quicksort: TaskSchema(OutputKind.node_pointer, is_sequence=True),
    TaskId.find_maximum_subarray_kadane: TaskSchema(
        OutputKind.graph_pointer, is_sequence=True, slots=2
    ),
    TaskId.minimum: TaskSchema(OutputKind.graph_pointer, is_sequence=True, slots=1),
}

ENCODINGS = ("scalar", "random_scalar", "sinusoidal", "edge_position")


@dataclass
class TaskInstance:
    """One labelled problem instance.

    node_inputs values are (n,) or (n, d) float arrays; edge_inputs
    values are (k, 3) float arrays of [u, v, value] rows (k need not
    equal the graph's edge count: order flags cover all ordered pairs).
    """

    task: TaskId
    graph: Graph
    node_inputs: dict[str, np.ndarray]
    edge_inputs: dict[str, np.ndarray]
    labels: Labels
    seed: int = 0

    @property
    def n(self) -> int:
        return self.graph.n

    def start_node(self) -> int | None:
        if "start" in self.node_inputs:
            return int(np.argmax(self.node_inputs["start"]))
        return None

    def sequence_values(self) -> np.ndarray | None:
        return self.node_inputs.get("value")


@dataclass
class DatasetConfig:
    """Sizes and generator of one dataset configuration.

    The named presets (see PRESETS) pin every field; ``custom`` takes
    whatever the caller supplies.
    """

    name: str
    train_len: int
    test_len: int
    train_size: int
    valtest_size: int
    generator: str  # "er_fixed_p" | "k_regular"
    k_train: int | None = None
    k_test: int | None = None
    p: float = 0.5
    tasks: list[TaskId] = field(default_factory=lambda: list(TaskId))

    def __post_init__(self):
        if self.generator not in ("er_fixed_p", "k_regular"):
            raise ParameterError(f"unknown generator {self.generator!r}")
        if self.generator == "k_regular" and (self.k_train is None or self.k_test is None):
            raise ParameterError("k_regular generator needs k_train and k_test")

    def size(self, split: str) -> int:
        return self.train_size if split == "train" else self.valtest_size

    def length(self, split: str) -> int:
        # val shares the training length; only test shifts size.
        return self.test_len if split == "test" else self.train_len


PRESETS: dict[str, DatasetConfig] = {
    "CLRS": DatasetConfig("CLRS", 16, 64, 1000, 32, "er_fixed_p"),
    "L-CLRS": DatasetConfig("L-CLRS", 16, 64, 100000, 32, "er_fixed_p"),
    "L-CLRS-Len": DatasetConfig("L-CLRS-Len", 16, 32, 100000, 1000, "k_regular", 4, 4),
    "L-CLRS-Deg": DatasetConfig("L-CLRS-Deg", 32, 32, 100000, 1000, "k_regular", 4, 8),
    "L-CLRS-Len-Deg": DatasetConfig("L-CLRS-Len-Deg", 16, 32, 100000, 1000, "k_regular", 4, 8),
}


def get_preset(name: str, **overrides) -> DatasetConfig:
    """A copy of a named preset, optionally overridden field by field."""
    if name not in PRESETS:
        raise ParameterError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides) if overrides else replace(PRESETS[name])


def scalar_positions(n: int) -> np.ndarray:
    """Node i gets i/n; the canonical deterministic index channel."""
    return np.arange(n, dtype=np.float64) / n


def sinusoidal_positions(n: int) -> np.ndarray:
    """Fixed-width sin/cos table over the raw index."""
    pe = np.zeros((n, SINUSOIDAL_DIM), dtype=np.float64)
    i = np.arange(n, dtype=np.float64)[:, None]
    k = np.arange(SINUSOIDAL_DIM // 2, dtype=np.float64)[None, :]
    angle = i / np.power(10000.0, 2.0 * k / SINUSOIDAL_DIM)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


def order_flags(n: int) -> np.ndarray:
    """(i, j, 1[i<j]) rows for every ordered pair i != j."""
    rows = []
    for i in range(n):
        for j in range(n):
            if i != j:
                rows.append((float(i), float(j), 1.0 if i < j else 0.0))
    return np.array(rows, dtype=np.float64)


def encode_positions(n: int, strategy: str, rng: Rng):
    """Position channels for one instance.

    Returns:
        (node_channels, edge_channels) dicts.  scalar/random_scalar/
        sinusoidal fill node channel "pos"; edge_position instead
        provides random node features "rand" plus the ordered-pair
        order flags as edge channel "precedes".
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if strategy == "scalar":
        return {"pos": scalar_positions(n)}, {}
    if strategy == "random_scalar":
        return {"pos": np.sort(rng.uniform(0.0, 1.0, n))}, {}
    if strategy == "sinusoidal":
        return {"pos": sinusoidal_positions(n)}, {}
    if strategy == "edge_position":
        rand = rng.random((n, RANDOM_FEATURE_DIM))
        return {"rand": rand}, {"precedes": order_flags(n)}
    raise ParameterError(f"unknown position strategy {strategy!r}; have {ENCODINGS}")


def channel_spec(task, encoding: str):
    """Names and widths of the input channels an instance will carry.

    Returns:
        (node_channels, edge_channels) dicts mapping channel name to
        feature dimension.  Encoders are sized from this, so it must
        agree with make_instance for every task/encoding combination.
    """
    schema = TASK_SCHEMAS[TaskId(task)]
    node: dict = {}
    edge: dict = {}
    if encoding in ("scalar", "random_scalar"):
        node["pos"] = 1
    elif encoding == "sinusoidal":
        node["pos"] = SINUSOIDAL_DIM
    elif encoding == "edge_position":
        node["rand"] = RANDOM_FEATURE_DIM
        edge["precedes"] = 1
    else:
        raise ParameterError(f"unknown position strategy {encoding!r}; have {ENCODINGS}")
    if schema.has_start:
        node["start"] = 1
    if schema.is_sequence:
        node["value"] = 1
    if schema.weighted:
        edge["weight"] = 1
    return node, edge


def complete_graph(n: int) -> Graph:
    return Graph(n, [(u, v, 1.0) for u in range(n) for v in range(u + 1, n)])


def _orient_low_high(g: Graph) -> Graph:
    return Graph(g.n, [(u, v, w) for u, v, w in g.edges], directed=True)


def _orient_by_coin(g: Graph, rng: Rng) -> Graph:
    flips = rng.random(g.m)
    edges = [
        (u, v, w) if flip < 0.5 else (v, u, w) for (u, v, w), flip in zip(g.edges, flips)
    ]
    return Graph(g.n, edges, directed=True)


def _sample_task_graph(schema: TaskSchema, config: DatasetConfig, split: str, rng: Rng) -> Graph:
    n = config.length(split)
    if config.generator == "er_fixed_p":
        if schema.directed and not schema.is_dag:
            return sample_er(n, config.p, rng, directed=True)
        g = sample_er(n, config.p, rng)
    else:
        k = config.k_train if split != "test" else config.k_test
        g = sample_k_regular(n, k, rng)
        if schema.directed and not schema.is_dag:
            # K-regular draws are undirected; directed tasks get a coin
            # flip per edge.
            return _orient_by_coin(g, rng)
    if schema.is_dag:
        return _orient_low_high(g)
    return g


def oracle_labels(task: TaskId, g: Graph, values=None, start: int | None = None) -> Labels:
    """Recompute the ground-truth labels for an instance's raw pieces.

    ``start`` defaults to node 0 for tasks that use one.
    """
    start = 0 if start is None else int(start)
    if task is TaskId.bfs:
        return bfs_parents(g, start)
    if task is TaskId.dfs:
        return dfs_forest(g)
    if task is TaskId.bellman_ford:
        return shortest_paths(g, "bellman_ford", start)
    if task is TaskId.dag_shortest_paths:
        return shortest_paths(g, "dag", start)
    if task is TaskId.floyd_warshall:
        return shortest_paths(g, "floyd_warshall")
    if task is TaskId.mst_prim:
        return mst(g, "prim", start)
    if task is TaskId.mst_kruskal:
        return mst(g, "kruskal")
    if task is TaskId.topological_sort:
        return structure(g, "topological")
    if task is TaskId.strongly_connected_components:
        return structure(g, "scc")
    if task is TaskId.bridges:
        return structure(g, "bridges")
    if task is TaskId.quicksort:
        return sequence_oracle(values, "sort")
    if task is TaskId.find_maximum_subarray_kadane:
        return sequence_oracle(values, "kadane")
    if task is TaskId.minimum:
        return sequence_oracle(values, "minimum")
    raise ParameterError(f"unknown task {task!r}")


def make_instance(
    task: TaskId,
    config: DatasetConfig,
    split: str,
    rng: Rng,
    encoding: str = "scalar",
    seed: int = 0,
) -> TaskInstance:
    """Sample one labelled instance.

    Weights and sequence values draw Uniform[0,1].  Under the
    random_scalar encoding, training instances keep the deterministic
    scalar with probability 1/2 and otherwise get the sorted random
    index; val/test instances always use the deterministic scalar.
    """
    if split not in SPLITS:
        raise ParameterError(f"unknown split {split!r}")
    task = TaskId(task)
    schema = TASK_SCHEMAS[task]
    n = config.length(split)

    if schema.is_sequence:
        graph = complete_graph(n)
        values = rng.uniform(0.0, 1.0, n)
        start = None
    else:
        graph = _sample_task_graph(schema, config, split, rng)
        if schema.weighted:
            graph = graph.with_weights(rng.uniform(0.0, 1.0, graph.m))
        values = None
        start = int(rng.integers(0, n)) if schema.has_start else None

    effective = encoding
    if encoding == "random_scalar" and (split != "train" or rng.coin(0.5)):
        effective = "scalar"
    node_inputs, edge_inputs = encode_positions(n, effective, rng)

    if start is not None:
        flag = np.zeros(n, dtype=np.float64)
        flag[start] = 1.0
        node_inputs["start"] = flag
    if values is not None:
        node_inputs["value"] = values
    if schema.weighted:
        edge_inputs["weight"] = np.array(
            [(float(u), float(v), w) for u, v, w in graph.edges], dtype=np.float64
        ).reshape(-1, 3)

    labels = oracle_labels(task, graph, values, start)
    return TaskInstance(task, graph, node_inputs, edge_inputs, labels, seed=seed)


def instance_seed(split: str, index: int) -> int:
    return SPLIT_BASE[split] * SPLIT_SEED_STRIDE + index


def seed_split(seed: int) -> str:
    """Which split a structured instance seed belongs to."""
    base = seed // SPLIT_SEED_STRIDE
    for name, b in SPLIT_BASE.items():
        if b == base:
            return name
    raise ParameterError(f"seed {seed} outside every split range")


def generate_split(
    task: TaskId,
    config: DatasetConfig,
    split: str,
    master_seed: int,
    encoding: str = "scalar",
    threads: int = 1,
) -> list[TaskInstance]:
    """All instances of one (task, split), reproducible from master_seed.

    Generation is parallel across instances; each instance derives its
    own stream from (master_seed, task, structured seed), so the result
    is identical for any thread count.
    """
    count = config.size(split)
    task = TaskId(task)

    def build(index: int) -> TaskInstance:
        iseed = instance_seed(split, index)
        rng = Rng(master_seed).child(task.value, iseed)
        return make_instance(task, config, split, rng, encoding=encoding, seed=iseed)

    if threads <= 1:
        return [build(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(build, range(count)))


def check_instance(inst: TaskInstance) -> bool:
    """Run the brute-force reference check on one (small) instance."""
    schema = TASK_SCHEMAS[inst.task]
    subject = inst.sequence_values() if schema.is_sequence else inst.graph
    return brute_force_check(inst.task, subject, inst.labels, start=inst.start_node())


def make_compressed_index_instance(
    task: TaskId,
    rng: Rng,
    n_total: int = 64,
    keep: int = 16,
    p: float = 0.5,
    seed: int = 0,
) -> TaskInstance:
    """An index-shift evaluation instance.

    Samples a larger graph, keeps the induced subgraph on its first
    `keep` nodes, and leaves the position channel at the original
    index scale, so the kept nodes carry indices compressed into
    [0, keep/n_total) instead of spanning [0, 1).  Connectivity of the
    subgraph matches an ER draw at the same p, so only the position
    distribution shifts.
    """
    task = TaskId(task)
    schema = TASK_SCHEMAS[task]
    if schema.is_sequence or schema.directed or schema.weighted:
        raise ParameterError("compressed-index instances cover undirected unweighted tasks")
    if not (1 <= keep <= n_total):
        raise ParameterError(f"keep={keep} outside [1, {n_total}]")
    big = sample_er(n_total, p, rng.child("graph"))
    graph = induced_subgraph(big, range(keep))
    node_inputs = {"pos": scalar_positions(n_total)[:keep].copy()}
    start = int(rng.child("start").integers(0, keep)) if schema.has_start else None
    if start is not None:
        flag = np.zeros(keep, dtype=np.float64)
        flag[start] = 1.0
        node_inputs["start"] = flag
    labels = oracle_labels(task, graph, start=start)
    return TaskInstance(task, graph, node_inputs, {}, labels, seed=seed)
