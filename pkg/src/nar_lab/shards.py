"""NDJSON shard IO.

One instance per line:

    {"task": str, "seed": u64, "n": int, "directed": bool,
     "edges": [[u, v, w], ...],
     "node_inputs": {channel: [f64, ...]},
     "edge_inputs": {channel: [[u, v, f64], ...]},
     "labels": {"kind": str, "values": [...]}}

Vector-valued node channels (sinusoidal positions, random features)
store one list per node.  Reals are written with full round-trip
precision (shortest repr, up to 17 significant digits), so
read(write(x)) reproduces every field exactly.

Shards live at <root>/<dataset>/<task>/<split>.ndjson.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ParseError
from .graphs import Graph
from .oracles import Labels, OutputKind
from .tasks import TaskId, TaskInstance

_REQUIRED = ("task", "seed", "n", "directed", "edges", "node_inputs", "edge_inputs", "labels")


def shard_path(root, dataset: str, task: TaskId, split: str) -> Path:
    return Path(root) / dataset / TaskId(task).value / f"{split}.ndjson"


def instance_to_record(inst: TaskInstance) -> dict:
    g = inst.graph
    return {
        "task": inst.task.value,
        "seed": int(inst.seed),
        "n": g.n,
        "directed": g.directed,
        "edges": [[u, v, float(w)] for u, v, w in g.edges],
        "node_inputs": {k: v.tolist() for k, v in inst.node_inputs.items()},
        "edge_inputs": {
            k: [[int(r[0]), int(r[1]), float(r[2])] for r in v]
            for k, v in inst.edge_inputs.items()
        },
        "labels": {"kind": inst.labels.kind.value, "values": inst.labels.values.tolist()},
    }


def record_to_instance(rec: dict) -> TaskInstance:
    """Rebuild a TaskInstance; raises KeyError/ValueError style issues as-is.

    Callers wanting path/line context should go through read_shard.
    """
    for key in _REQUIRED:
        if key not in rec:
            raise ValueError(f"missing field {key!r}")
    edges = [(int(u), int(v), float(w)) for u, v, w in rec["edges"]]
    graph = Graph(int(rec["n"]), edges, bool(rec["directed"]))
    node_inputs = {
        k: np.asarray(v, dtype=np.float64) for k, v in rec["node_inputs"].items()
    }
    edge_inputs = {
        k: np.asarray(v, dtype=np.float64).reshape(-1, 3)
        for k, v in rec["edge_inputs"].items()
    }
    lab = rec["labels"]
    if "kind" not in lab or "values" not in lab:
        raise ValueError("labels must carry 'kind' and 'values'")
    labels = Labels(OutputKind(lab["kind"]), np.asarray(lab["values"], dtype=np.int64))
    return TaskInstance(
        task=TaskId(rec["task"]),
        graph=graph,
        node_inputs=node_inputs,
        edge_inputs=edge_inputs,
        labels=labels,
        seed=int(rec["seed"]),
    )


def write_shard(instances, path) -> None:
    """Write instances as NDJSON, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), separators=(",", ":")))
            fh.write("\n")


def read_shard(path) -> list[TaskInstance]:
    """Read an NDJSON shard; malformed lines raise ParseError with the line number."""
    path = Path(path)
    out: list[TaskInstance] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(str(path), lineno, f"invalid JSON: {e.msg}") from e
            try:
                out.append(record_to_instance(rec))
            except Exception as e:  # field-level validation
                raise ParseError(str(path), lineno, str(e)) from e
    return out
