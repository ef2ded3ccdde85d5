"""Golden fixture shards: small labelled instances, frozen in-repo.

Fixtures are generated once by the samplers and oracles, cross-checked
against the brute-force reference at creation time, and then committed;
verify_fixtures re-derives every label and reports any drift.  They
exist so that oracle regressions show up as concrete named mismatches
rather than statistical noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .oracles import OutputKind
from .reference import brute_force_check
from .rng import Rng
from .shards import read_shard, write_shard
from .tasks import (TASK_SCHEMAS, TaskId, get_preset, instance_seed, make_instance,
                    oracle_labels)

FIXTURES_PER_TASK = 3
FIXTURE_SIZES = (5, 6, 7)
FIXTURE_SEED = 20240601


def default_root() -> Path:
    """The in-repo fixtures directory (two levels above the package)."""
    return Path(__file__).resolve().parent.parent.parent / "fixtures"


def fixture_path(task, root=None) -> Path:
    root = Path(root) if root else default_root()
    return root / f"{TaskId(task).value}.ndjson"


@dataclass
class GoldenFixture:
    task: TaskId
    line: str
    expected: object
    origin: str


def generate_fixtures(root=None, seed=FIXTURE_SEED) -> dict:
    """Write one small shard per task; every record brute-checked first."""
    root = Path(root) if root else default_root()
    root.mkdir(parents=True, exist_ok=True)
    rng = Rng(seed)
    counts = {}
    for task in TaskId:
        schema = TASK_SCHEMAS[task]
        instances = []
        for i, n in zip(range(FIXTURES_PER_TASK), FIXTURE_SIZES):
            config = get_preset("CLRS", train_len=n, test_len=n)
            inst = make_instance(task, config, "train", rng.child(task.value, i),
                                 seed=instance_seed("train", i))
            subject = inst.sequence_values() if schema.is_sequence else inst.graph
            start = inst.start_node() if schema.has_start else None
            if not brute_force_check(task, subject, inst.labels, start=start):
                raise AssertionError(f"fixture candidate failed brute check: {task}")
            instances.append(inst)
        write_shard(instances, fixture_path(task, root))
        counts[task.value] = len(instances)
    manifest = {
        "origin": "sampled by the package generators, labelled by the oracles, "
                  "cross-checked against the brute-force reference, then frozen",
        "seed": seed,
        "sizes": list(FIXTURE_SIZES),
        "counts": counts,
    }
    with open(root / "MANIFEST.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def load_fixtures(task, root=None):
    path = fixture_path(task, root)
    instances = read_shard(path)
    lines = path.read_text().splitlines()
    origin = "unknown"
    mpath = (Path(root) if root else default_root()) / "MANIFEST.json"
    if mpath.exists():
        origin = json.loads(mpath.read_text()).get("origin", origin)
    return [GoldenFixture(task=TaskId(task), line=line, expected=inst.labels, origin=origin)
            for line, inst in zip(lines, instances)]


def verify_fixtures(root=None) -> dict:
    """Re-run every oracle over every fixture.

    Returns:
        {"checked": n, "mismatches": [names], "coverage": {task: count},
         "kind_counts": {kind: count}} — mismatches must be empty.
    """
    root = Path(root) if root else default_root()
    checked = 0
    mismatches = []
    coverage = {}
    kind_counts = {k.value: 0 for k in OutputKind}
    for task in TaskId:
        path = fixture_path(task, root)
        if not path.exists():
            mismatches.append(f"{task.value}: fixture shard missing")
            continue
        instances = read_shard(path)
        coverage[task.value] = len(instances)
        schema = TASK_SCHEMAS[task]
        for idx, inst in enumerate(instances):
            checked += 1
            kind_counts[inst.labels.kind.value] += 1
            start = inst.start_node() if schema.has_start else None
            fresh = oracle_labels(task, inst.graph, values=inst.sequence_values(), start=start)
            if fresh != inst.labels:
                mismatches.append(f"{task.value}[{idx}]: stored labels diverge from oracle")
                continue
            subject = inst.sequence_values() if schema.is_sequence else inst.graph
            if inst.graph.n <= 8 and not brute_force_check(task, subject, inst.labels,
                                                           start=start):
                mismatches.append(f"{task.value}[{idx}]: labels fail the brute-force check")
    return {"checked": checked, "mismatches": mismatches, "coverage": coverage,
            "kind_counts": kind_counts}
