"""Scoring, the two-community bridge-pair probe, and weight interpolation.

Node-level scores are exact-match fractions over a label's elements;
the graph-level score is the stricter all-or-nothing version.  Edge
masks additionally get a micro-F1, reported separately because the two
communities of mask users (accuracy tables, F1 tables) disagree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError
from .graphs import Graph, ProbePair
from .model import ModelConfig, flatten_params, run_model, unflatten_params
from .oracles import Labels, OutputKind, structure
from .rng import Rng
from .tasks import TaskId, TaskInstance, encode_positions


@dataclass
class MetricRecord:
    step: int
    split: str
    task: str
    node_acc: float
    graph_acc: float
    loss: float

    def row(self) -> str:
        return (f"{self.step},{self.split},{self.task},"
                f"{self.node_acc:.6f},{self.graph_acc:.6f},{self.loss:.6f}")


def node_level_score(pred: Labels, truth: Labels) -> float:
    """Fraction of exactly matching elements."""
    if pred.kind != truth.kind:
        raise InputError(f"kind mismatch: {pred.kind} vs {truth.kind}")
    a = np.asarray(pred.values)
    b = np.asarray(truth.values)
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 1.0
    return float(np.mean(a == b))


def graph_level_score(pred: Labels, truth: Labels) -> int:
    """1 iff every element matches."""
    return int(node_level_score(pred, truth) == 1.0)


def mask_micro_f1(preds, truths) -> float:
    """Micro-averaged F1 over all mask elements of a prediction set."""
    tp = fp = fn = 0
    for p, t in zip(preds, truths):
        if p.kind != OutputKind.edge_mask or t.kind != OutputKind.edge_mask:
            raise InputError("micro-F1 is defined for edge masks")
        a = np.asarray(p.values)
        b = np.asarray(t.values)
        tp += int(np.sum((a == 1) & (b == 1)))
        fp += int(np.sum((a == 1) & (b == 0)))
        fn += int(np.sum((a == 0) & (b == 1)))
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


def score_set(preds, truths):
    """(mean node-level, mean graph-level) over aligned label lists."""
    if len(preds) != len(truths):
        raise InputError("prediction/truth count mismatch")
    node = [node_level_score(p, t) for p, t in zip(preds, truths)]
    graph = [graph_level_score(p, t) for p, t in zip(preds, truths)]
    return float(np.mean(node)), float(np.mean(graph))


def evaluate(cfg: ModelConfig, params: dict, instances, step=0, split="val", batch_size=None):
    """Run the model over a shard and score it.

    Returns:
        (MetricRecord, extras) where extras carries mask_f1 for
        edge-mask tasks.
    """
    preds, loss = run_model(cfg, params, instances, batch_size=batch_size)
    truths = [i.labels for i in instances]
    node_acc, graph_acc = score_set(preds, truths)
    rec = MetricRecord(step=step, split=split, task=str(cfg.task),
                       node_acc=node_acc, graph_acc=graph_acc, loss=loss)
    extras = {}
    if truths and truths[0].kind == OutputKind.edge_mask:
        extras["mask_f1"] = mask_micro_f1(preds, truths)
    return rec, extras


def probe_instance(graph: Graph, encoding="scalar", rng=None) -> TaskInstance:
    """Wrap a bare graph as a bridges instance the model can consume."""
    node_inputs, edge_inputs = encode_positions(graph.n, encoding, rng or Rng(0))
    labels = structure(graph, "bridges")
    return TaskInstance(TaskId.bridges, graph, node_inputs, edge_inputs, labels, seed=0)


def model_mask_predictor(cfg: ModelConfig, params: dict):
    def predict(graph: Graph) -> np.ndarray:
        inst = probe_instance(graph, encoding=cfg.encoding)
        preds, _loss = run_model(cfg, params, [inst])
        return np.asarray(preds[0].values)
    return predict


def oracle_mask_predictor(graph: Graph) -> np.ndarray:
    return np.asarray(structure(graph, "bridges").values)


def random_mask_predictor(rng: Rng):
    def predict(graph: Graph) -> np.ndarray:
        return rng.integers(0, 2, graph.m).astype(np.int64)
    return predict


def bridge_pair_probe(predict_mask, pairs) -> dict:
    """Pair accuracy of a mask predictor on two-community pairs.

    A pair counts iff the probe edge is flagged 1 on the single-bridge
    graph and 0 on the double-bridge graph; all other edges ignored.

    Returns:
        {"pairs": N, "correct": k, "accuracy": k / N}
    """
    correct = 0
    for pair in pairs:
        row_s = pair.single.edge_index()[pair.probe_edge]
        row_d = pair.double.edge_index()[pair.probe_edge]
        mask_s = np.asarray(predict_mask(pair.single))
        mask_d = np.asarray(predict_mask(pair.double))
        if mask_s[row_s] == 1 and mask_d[row_d] == 0:
            correct += 1
    n = len(pairs)
    return {"pairs": n, "correct": correct, "accuracy": correct / n if n else 0.0}


def interpolate(cfg: ModelConfig, params_a: dict, params_b: dict, lambdas,
                id_set, ood_set, batch_size=None):
    """Node accuracy along the straight line between two weight vectors.

    Returns:
        list of (lambda, id_node_acc, ood_node_acc) rows; endpoints are
        evaluated with exactly the original vectors.
    """
    vec_a, man_a = flatten_params(params_a)
    vec_b, man_b = flatten_params(params_b)
    if man_a != man_b:
        raise ShapeError("parameter sets differ in names or shapes")
    rows = []
    for lam in lambdas:
        lam = float(lam)
        if lam == 0.0:
            vec = vec_a.copy()
        elif lam == 1.0:
            vec = vec_b.copy()
        else:
            vec = (1.0 - lam) * vec_a + lam * vec_b
        params = unflatten_params(vec, man_a)
        accs = []
        for group in (id_set, ood_set):
            preds, _ = run_model(cfg, params, group, batch_size=batch_size)
            acc, _g = score_set(preds, [i.labels for i in group])
            accs.append(acc)
        rows.append((lam, accs[0], accs[1]))
    return rows
