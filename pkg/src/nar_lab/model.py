"""Encode-process-decode assembly around the recurrent processors.

The model is three learned pieces: per-channel linear encoders whose
outputs sum into node/edge input embeddings Z, a processor applied T
times to hidden states that start at zero and see Z re-concatenated on
every step, and an output decoder per label kind.  Parameters live in a
flat name-to-array dict so that checkpointing, interpolation and the
optimizer all operate on the same structure.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, ShapeError
from .oracles import Labels, OutputKind
from .processors import (BatchStructure, ProcessorConfig, build_structure, default_batch_size,
                         glorot, init_processor_params, parse_processor, processor_step)
from .rng import Rng
from .tasks import TASK_SCHEMAS, TaskId, TaskInstance, channel_spec
from . import tensor as T

DECODER_SCOPE = {
    OutputKind.node_pointer: "dec.node_pointer",
    OutputKind.edge_mask: "dec.edge_mask",
    OutputKind.graph_pointer: "dec.graph_pointer",
    OutputKind.pair_pointer: "dec.pair_pointer",
}

# rows per decoder chunk; keeps pair-pointer activations bounded
PAIR_CHUNK_ROWS = 8192


@dataclass(frozen=True)
class ModelConfig:
    task: str
    processor: str = "mpnn"
    encoding: str = "scalar"
    d_h: int = 128
    steps_T: int = 32
    seed: int = 0

    def __post_init__(self):
        TaskId(self.task)
        parse_processor(self.processor)
        if self.d_h < 1 or self.steps_T < 1:
            raise ConfigError("d_h and steps_T must be positive")

    def proc(self) -> ProcessorConfig:
        return parse_processor(self.processor)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "processor": self.processor,
            "encoding": self.encoding,
            "d_h": self.d_h,
            "T": self.steps_T,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(task=d["task"], processor=d["processor"], encoding=d["encoding"],
                   d_h=int(d["d_h"]), steps_T=int(d["T"]), seed=int(d["seed"]))


def config_hash(cfg: ModelConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def init_model_params(cfg: ModelConfig) -> dict:
    """Deterministic fresh parameters for the full model."""
    rng = Rng(cfg.seed).child("init")
    d_h = cfg.d_h
    node_ch, edge_ch = channel_spec(cfg.task, cfg.encoding)
    params: dict = {}
    for ch in sorted(node_ch):
        params[f"enc.node.{ch}.w"] = glorot(rng.child("n", ch), node_ch[ch], d_h)
    for ch in sorted(edge_ch):
        params[f"enc.edge.{ch}.w"] = glorot(rng.child("e", ch), edge_ch[ch], d_h)
    params["enc.node.bias"] = np.zeros(d_h)
    params["enc.edge.bias"] = np.zeros(d_h)

    params.update(init_processor_params(cfg.proc(), d_h, rng.child("proc")))

    schema = TASK_SCHEMAS[TaskId(cfg.task)]
    kind = schema.kind
    scope = DECODER_SCOPE[kind]
    drng = rng.child("dec")
    if kind == OutputKind.node_pointer:
        _decoder_mlp(params, drng, scope, 2 * d_h, d_h)
    elif kind == OutputKind.edge_mask:
        _decoder_mlp(params, drng, scope, 3 * d_h, d_h)
    elif kind == OutputKind.pair_pointer:
        _decoder_mlp(params, drng, scope, 3 * d_h, d_h)
    else:
        for s in range(schema.slots):
            _decoder_mlp(params, drng.child(s), f"{scope}.s{s}", 2 * d_h, d_h)
    return params


def _decoder_mlp(params, rng, scope, fan_in, width):
    params[f"{scope}.h.w"] = glorot(rng.child("h"), fan_in, width)
    params[f"{scope}.h.b"] = np.zeros(width)
    params[f"{scope}.o.w"] = glorot(rng.child("o"), width, 1)
    params[f"{scope}.o.b"] = np.zeros(1)


def _mlp(params, scope, x):
    h = T.relu(T.linear(x, params[f"{scope}.h.w"], params[f"{scope}.h.b"]))
    return T.linear(h, params[f"{scope}.o.w"], params[f"{scope}.o.b"])


@dataclass
class Batch:
    """A fixed-size group of same-shaped instances, ready to run."""

    instances: list
    struct: BatchStructure
    node_feats: dict
    edge_feats: dict
    pair_feats: dict
    targets: np.ndarray
    kind: OutputKind
    slots: int = 1
    edges_per_graph: list = field(default_factory=list)


def make_batch(instances, proc_cfg: ProcessorConfig) -> Batch:
    if not instances:
        raise ShapeError("empty batch")
    task = instances[0].task
    if any(i.task != task for i in instances):
        raise InputError("batch mixes tasks")
    schema = TASK_SCHEMAS[task]
    struct = build_structure([i.graph for i in instances], proc_cfg)

    keys = sorted(instances[0].node_inputs)
    node_feats = {}
    for ch in keys:
        cols = [np.atleast_2d(i.node_inputs[ch].T).T.astype(np.float64) for i in instances]
        node_feats[ch] = np.concatenate(cols, axis=0)

    edge_keys = sorted(instances[0].edge_inputs)
    directed = instances[0].graph.directed
    B = len(instances)
    n = struct.nodes_per_graph
    # dense per-graph ordered-pair tables: value plus presence
    table_v = {ch: np.zeros((B, n, n)) for ch in edge_keys}
    table_p = {ch: np.zeros((B, n, n), dtype=bool) for ch in edge_keys}
    for ch in edge_keys:
        for gi, inst in enumerate(instances):
            rows = inst.edge_inputs[ch]
            if not len(rows):
                continue
            arr = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
            a = arr[:, 0].astype(np.int64)
            b = arr[:, 1].astype(np.int64)
            table_v[ch][gi, a, b] = arr[:, 2]
            table_p[ch][gi, a, b] = True

    edge_feats = {}
    if struct.num_edges:
        egi = struct.edge_src // n
        eu = struct.edge_src % n
        ev = struct.edge_dst % n
    for ch in edge_keys:
        if not struct.num_edges:
            edge_feats[ch] = np.zeros((0, 1))
            continue
        fwd = table_v[ch][egi, eu, ev]
        rev = table_v[ch][egi, ev, eu]
        if directed:
            vals = np.where(table_p[ch][egi, eu, ev], fwd, rev)
        else:
            # undirected rows must not depend on storage orientation:
            # channels defined per ordered pair contribute the mean
            cnt = table_p[ch][egi, eu, ev].astype(np.int64) + table_p[ch][egi, ev, eu]
            vals = (fwd + rev) / np.maximum(cnt, 1)
        edge_feats[ch] = vals.reshape(-1, 1)

    pair_feats = {}
    for mode, src in struct.msg_src.items():
        dst = struct.msg_dst[mode]
        gi_of = src // n
        mu = src % n
        mv = dst % n
        per_ch = {}
        for ch in edge_keys:
            fwd = table_v[ch][gi_of, mu, mv]
            if directed:
                vals = fwd
            else:
                vals = np.where(table_p[ch][gi_of, mu, mv], fwd,
                                table_v[ch][gi_of, mv, mu])
            per_ch[ch] = vals.reshape(-1, 1)
        pair_feats[mode] = per_ch

    targets = _stack_targets(instances, schema.kind)
    return Batch(
        instances=list(instances),
        struct=struct,
        node_feats=node_feats,
        edge_feats=edge_feats,
        pair_feats=pair_feats,
        targets=targets,
        kind=schema.kind,
        slots=schema.slots,
        edges_per_graph=[i.graph.m for i in instances],
    )


def _stack_targets(instances, kind: OutputKind) -> np.ndarray:
    if kind == OutputKind.node_pointer:
        return np.concatenate([i.labels.values for i in instances])
    if kind == OutputKind.edge_mask:
        return np.concatenate([i.labels.values for i in instances]) if any(
            i.graph.m for i in instances) else np.zeros(0, dtype=np.int64)
    if kind == OutputKind.pair_pointer:
        return np.concatenate([i.labels.values.reshape(-1) for i in instances])
    # graph_pointer: slot-major rows, one per (slot, graph)
    vals = np.stack([i.labels.values for i in instances])
    return vals.T.reshape(-1)


def wrap_params(params: dict, requires_grad=True) -> dict:
    return {k: T.Tensor(v, requires_grad=requires_grad) for k, v in params.items()}


def encode(params_t, batch: Batch, d_h: int):
    """Input channels -> summed embeddings for nodes, edges, messages."""
    N = batch.struct.num_nodes
    M = batch.struct.num_edges
    z_n = T.broadcast_to(params_t["enc.node.bias"], (N, d_h))
    for ch, x in sorted(batch.node_feats.items()):
        w = params_t.get(f"enc.node.{ch}.w")
        if w is None:
            raise InputError(f"no encoder for node channel {ch!r}")
        z_n = z_n + T.matmul(T.as_tensor(x), w)
    z_e = T.broadcast_to(params_t["enc.edge.bias"], (max(M, 0), d_h))
    for ch, x in sorted(batch.edge_feats.items()):
        w = params_t.get(f"enc.edge.{ch}.w")
        if w is None:
            raise InputError(f"no encoder for edge channel {ch!r}")
        z_e = z_e + T.matmul(T.as_tensor(x), w)
    z_msg = {}
    for mode, per_ch in batch.pair_feats.items():
        E = batch.struct.msg_src[mode].size
        zm = T.broadcast_to(params_t["enc.edge.bias"], (E, d_h))
        for ch, x in sorted(per_ch.items()):
            zm = zm + T.matmul(T.as_tensor(x), params_t[f"enc.edge.{ch}.w"])
        z_msg[mode] = zm
    return z_n, z_e, z_msg


def process(cfg: ModelConfig, params_t, z_n, z_e, z_msg, struct):
    proc = cfg.proc()
    H_n = T.as_tensor(np.zeros((struct.num_nodes, cfg.d_h)))
    H_e = T.as_tensor(np.zeros((struct.num_edges, cfg.d_h)))
    cache: dict = {}  # step-invariant tensors, valid for this one unroll
    for _ in range(cfg.steps_T):
        H_n, H_e = processor_step(proc, params_t, H_n, H_e, z_n, z_e, struct,
                                  z_msg=z_msg, cache=cache)
    return H_n, H_e


def decode(params_t, batch: Batch, H_n, H_e):
    """Final states -> logits, shaped per output kind.

    node_pointer / pair_pointer: (rows, n) pointer logits per row.
    graph_pointer: (slots * graphs, n).  edge_mask: (edges,).
    """
    st = batch.struct
    n = st.nodes_per_graph
    B = st.num_graphs
    kind = batch.kind
    if kind == OutputKind.node_pointer:
        offs = np.repeat(np.arange(B) * n, n * n)
        I = offs + np.tile(np.repeat(np.arange(n), n), B)
        J = offs + np.tile(np.tile(np.arange(n), n), B)
        # project per node first; the pairwise hidden layer is then a
        # gather-and-add instead of a matmul over n^2 rows
        scope = DECODER_SCOPE[kind]
        w = params_t[f"{scope}.h.w"]
        d = H_n.shape[1]
        proj_i = H_n @ T.slice_(w, slice(0, d))
        proj_j = H_n @ T.slice_(w, slice(d, 2 * d))
        hid = T.relu(T.gather_rows(proj_i, I, plan=st.seg_plan("dec_i", I))
                     + T.gather_rows(proj_j, J, plan=st.seg_plan("dec_j", J))
                     + params_t[f"{scope}.h.b"])
        out = T.linear(hid, params_t[f"{scope}.o.w"], params_t[f"{scope}.o.b"])
        return T.reshape(out, (B * n, n))
    if kind == OutputKind.edge_mask:
        if st.num_edges == 0:
            return T.as_tensor(np.zeros(0))
        h_u = T.gather_rows(H_n, st.edge_src)
        h_v = T.gather_rows(H_n, st.edge_dst)
        if not st.directed:
            # sort endpoint states elementwise: the flag for an
            # undirected edge must not depend on storage orientation
            h_u, h_v = T.minimum(h_u, h_v), T.maximum(h_u, h_v)
        x = T.concat([h_u, h_v, H_e], axis=1)
        out = _mlp(params_t, DECODER_SCOPE[kind], x)
        return T.reshape(out, (st.num_edges,))
    if kind == OutputKind.pair_pointer:
        offs = np.repeat(np.arange(B) * n, n * n * n)
        I = offs + np.tile(np.repeat(np.arange(n), n * n), B)
        J = offs + np.tile(np.tile(np.repeat(np.arange(n), n), n), B)
        K = offs + np.tile(np.tile(np.arange(n), n * n), B)
        scope = DECODER_SCOPE[kind]
        w = params_t[f"{scope}.h.w"]
        d = H_n.shape[1]
        projs = [H_n @ T.slice_(w, slice(a * d, (a + 1) * d)) for a in range(3)]
        chunks = []
        step = max(n, (PAIR_CHUNK_ROWS // n) * n)
        for lo in range(0, I.size, step):
            sl = slice(lo, min(lo + step, I.size))
            hid = T.relu(T.gather_rows(projs[0], I[sl]) + T.gather_rows(projs[1], J[sl])
                         + T.gather_rows(projs[2], K[sl]) + params_t[f"{scope}.h.b"])
            chunks.append(T.linear(hid, params_t[f"{scope}.o.w"], params_t[f"{scope}.o.b"]))
        out = chunks[0] if len(chunks) == 1 else T.concat(chunks, axis=0)
        return T.reshape(out, (B * n * n, n))
    # graph_pointer: node state next to its graph's mean-pooled state
    pooled = T.mean_reduce(T.reshape(H_n, (B, n, H_n.shape[1])), axis=1)
    x = T.concat([H_n, T.gather_rows(pooled, st.node_graph)], axis=1)
    slot_logits = []
    for s in range(batch.slots):
        out = _mlp(params_t, f"{DECODER_SCOPE[kind]}.s{s}", x)
        slot_logits.append(T.reshape(out, (B, n)))
    out = slot_logits[0] if batch.slots == 1 else T.concat(slot_logits, axis=0)
    return T.reshape(out, (batch.slots * B, n))


def forward(cfg: ModelConfig, params_t, batch: Batch):
    z_n, z_e, z_msg = encode(params_t, batch, cfg.d_h)
    H_n, H_e = process(cfg, params_t, z_n, z_e, z_msg, batch.struct)
    return decode(params_t, batch, H_n, H_e)


def loss_from_logits(kind: OutputKind, logits, targets: np.ndarray):
    """Mean cross-entropy over pointer rows, mean BCE over edge flags."""
    if kind == OutputKind.edge_mask:
        if logits.shape[0] == 0:
            return T.as_tensor(0.0)
        z = T.as_tensor(targets.astype(np.float64))
        per_edge = T.softplus(logits) - logits * z
        return T.mean_reduce(per_edge)
    rows = logits.shape[0]
    lse = T.logsumexp(logits, axis=-1)
    picked = T.slice_(logits, (np.arange(rows), targets.astype(np.int64)))
    return T.mean_reduce(lse - picked)


def predict_from_logits(kind: OutputKind, logits: np.ndarray, batch: Batch):
    """Hard predictions per graph; argmax ties go to the lowest index."""
    st = batch.struct
    n = st.nodes_per_graph
    B = st.num_graphs
    out = []
    if kind == OutputKind.node_pointer:
        ptr = np.argmax(logits, axis=-1).reshape(B, n)
        return [Labels(kind, row) for row in ptr]
    if kind == OutputKind.pair_pointer:
        ptr = np.argmax(logits, axis=-1).reshape(B, n, n)
        return [Labels(kind, tbl) for tbl in ptr]
    if kind == OutputKind.edge_mask:
        flags = (logits > 0.0).astype(np.int64)
        at = 0
        for m in batch.edges_per_graph:
            out.append(Labels(kind, flags[at:at + m]))
            at += m
        return out
    picks = np.argmax(logits, axis=-1).reshape(batch.slots, B)
    return [Labels(kind, picks[:, g].copy()) for g in range(B)]


def run_model(cfg: ModelConfig, params: dict, instances, batch_size=None):
    """Forward-only evaluation.

    Returns:
        (predictions, mean loss) where predictions align with instances.
    """
    proc = cfg.proc()
    if batch_size is None:
        batch_size = default_batch_size(proc)
    params_t = wrap_params(params, requires_grad=False)
    preds = []
    total = 0.0
    for lo in range(0, len(instances), batch_size):
        group = instances[lo:lo + batch_size]
        batch = make_batch(group, proc)
        logits = forward(cfg, params_t, batch)
        total += float(loss_from_logits(batch.kind, logits, batch.targets).data) * len(group)
        preds.extend(predict_from_logits(batch.kind, logits.data, batch))
    return preds, total / len(instances) if instances else 0.0


def flatten_params(params: dict):
    """Concatenate arrays in name order; manifest allows exact round-trip."""
    names = sorted(params)
    manifest = [(k, tuple(params[k].shape)) for k in names]
    if names:
        vec = np.concatenate([np.asarray(params[k], dtype=np.float64).ravel() for k in names])
    else:
        vec = np.zeros(0)
    return vec, manifest


def unflatten_params(vec: np.ndarray, manifest):
    params = {}
    at = 0
    for name, shape in manifest:
        size = int(np.prod(shape)) if shape else 1
        params[name] = np.asarray(vec[at:at + size], dtype=np.float64).reshape(shape)
        at += size
    if at != vec.size:
        raise ShapeError(f"flat vector has {vec.size} entries, manifest expects {at}")
    return params


def save_checkpoint(path, params: dict, step: int, cfg: ModelConfig, extra=None):
    """Flat little-endian float64 buffer plus a JSON sidecar."""
    vec, manifest = flatten_params(params)
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(vec.astype("<f8").tobytes())
    meta = {
        "names": [m[0] for m in manifest],
        "shapes": [list(m[1]) for m in manifest],
        "step": int(step),
        "config_hash": config_hash(cfg),
        "config": cfg.to_dict(),
    }
    if extra:
        meta.update(extra)
    with open(_sidecar(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_checkpoint(path):
    """Returns (params, meta); meta carries step/config/config_hash."""
    path = str(path)
    with open(_sidecar(path)) as fh:
        meta = json.load(fh)
    vec = np.frombuffer(open(path, "rb").read(), dtype="<f8").astype(np.float64)
    manifest = [(n, tuple(s)) for n, s in zip(meta["names"], meta["shapes"])]
    params = unflatten_params(vec, manifest)
    return params, meta


def _sidecar(path: str) -> str:
    return path[:-4] + ".json" if path.endswith(".bin") else path + ".json"
