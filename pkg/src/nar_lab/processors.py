"""Recurrent processor steps operating on batched hidden states.

Three families share one calling convention: message passing over the
given topology or over all ordered pairs, a line-graph attention
processor, and two-way hybrids that blend a pair of sub-processors.
Every step maps (node states, edge states) -> (node states, edge states)
with the encoded inputs re-concatenated on entry, so the recurrence can
be iterated without re-encoding.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .graphs import Graph, line_graph
from .rng import Rng
from . import tensor as T

ATTENTION_HEADS = 4

PROCESSOR_KINDS = ("mpnn", "mpnn_fc", "twl")
HYBRID_MIXES = ("average", "sigmoid")


@dataclass(frozen=True)
class ProcessorConfig:
    """Which step function runs inside the recurrence.

    kind "hybrid" blends pair[0] and pair[1]; mix picks the blend rule.
    Sub-processor kinds may repeat ("mpnn"+"mpnn" is legal).
    """

    kind: str
    mix: str = "average"
    pair: tuple = ("mpnn", "twl")

    def __post_init__(self):
        if self.kind in PROCESSOR_KINDS:
            return
        if self.kind != "hybrid":
            raise ConfigError(f"unknown processor kind {self.kind!r}")
        if self.mix not in HYBRID_MIXES:
            raise ConfigError(f"unknown hybrid mix {self.mix!r}")
        if len(self.pair) != 2 or any(k not in PROCESSOR_KINDS for k in self.pair):
            raise ConfigError(f"hybrid pair must name two sub-processors, got {self.pair!r}")

    @property
    def sub_kinds(self) -> tuple:
        return self.pair if self.kind == "hybrid" else (self.kind,)

    @property
    def needs_line_graph(self) -> bool:
        return "twl" in self.sub_kinds

    def spec_string(self) -> str:
        if self.kind != "hybrid":
            return self.kind
        return f"hybrid_{self.mix}:{self.pair[0]}+{self.pair[1]}"


def parse_processor(spec: str) -> ProcessorConfig:
    """Parse a processor name like "mpnn" or "hybrid_sigmoid:mpnn+twl"."""
    spec = spec.strip()
    if spec in PROCESSOR_KINDS:
        return ProcessorConfig(kind=spec)
    for mix in HYBRID_MIXES:
        head = f"hybrid_{mix}"
        if spec == head:
            return ProcessorConfig(kind="hybrid", mix=mix)
        if spec.startswith(head + ":"):
            parts = spec[len(head) + 1:].split("+")
            if len(parts) != 2:
                raise ConfigError(f"bad hybrid pair in {spec!r}")
            return ProcessorConfig(kind="hybrid", mix=mix, pair=(parts[0], parts[1]))
    raise ConfigError(f"unknown processor {spec!r}")


def default_batch_size(cfg: ProcessorConfig) -> int:
    # plain message passing trains at 32, anything heavier at 16
    return 32 if cfg.kind in ("mpnn", "mpnn_fc") else 16


@dataclass
class BatchStructure:
    """Flat index arrays describing a batch of same-size graphs.

    Node/edge state rows for all graphs are concatenated; every array
    below addresses those global rows.  msg_* arrays enumerate the
    directed messages a step computes: for "mpnn" one per stored edge
    direction, for "mpnn_fc" one per ordered node pair.  msg_edge maps
    each message to the stored edge row it updates, with num_edges as
    the sentinel for pairs that have no stored edge.
    """

    num_graphs: int
    nodes_per_graph: int
    num_nodes: int
    num_edges: int
    node_graph: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_graph: np.ndarray
    directed: bool
    msg_src: dict = field(default_factory=dict)
    msg_dst: dict = field(default_factory=dict)
    msg_edge: dict = field(default_factory=dict)
    line_mask: np.ndarray | None = None
    inc_edge: np.ndarray | None = None
    inc_node: np.ndarray | None = None
    isolated: np.ndarray | None = None
    _plans: dict = field(default_factory=dict, repr=False, compare=False)

    def seg_plan(self, key: str, index: np.ndarray) -> T.SegmentPlan:
        """Memoized SegmentPlan for one of this batch's index arrays."""
        plan = self._plans.get(key)
        if plan is None:
            plan = T.SegmentPlan(index)
            self._plans[key] = plan
        return plan


def _message_arrays(graphs, mode: str, struct: "BatchStructure"):
    """Directed message lists plus the stored-edge row each one feeds.

    Given mode lays messages out as every stored edge's forward direction
    followed (for undirected batches) by every reverse direction, so the
    two rows feeding one edge sit exactly num_edges apart.
    """
    if mode == "given":
        if struct.directed or struct.num_edges == 0:
            src, dst = struct.edge_src, struct.edge_dst
            rows = np.arange(struct.num_edges, dtype=np.int64)
        else:
            src = np.concatenate([struct.edge_src, struct.edge_dst])
            dst = np.concatenate([struct.edge_dst, struct.edge_src])
            rows = np.tile(np.arange(struct.num_edges, dtype=np.int64), 2)
        return src, dst, rows
    src, dst, rows = [], [], []
    edge_base = 0
    node_base = 0
    total_edges = sum(g.m for g in graphs)
    for g in graphs:
        index = {}
        for r, (u, v, _w) in enumerate(g.edges):
            index[(u, v)] = edge_base + r
            if not g.directed:
                index[(v, u)] = edge_base + r
        pairs = [(u, v) for u in range(g.n) for v in range(g.n) if u != v]
        for (u, v) in pairs:
            src.append(node_base + u)
            dst.append(node_base + v)
            rows.append(index.get((u, v), total_edges))
        edge_base += g.m
        node_base += g.n
    return (np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64),
            np.asarray(rows, dtype=np.int64))


def build_structure(graphs, cfg: ProcessorConfig) -> BatchStructure:
    if not graphs:
        raise ShapeError("empty batch")
    n = graphs[0].n
    if any(g.n != n for g in graphs):
        raise ShapeError("batch graphs must share node count")
    if any(g.directed != graphs[0].directed for g in graphs):
        raise ShapeError("batch graphs must share directedness")

    node_graph = np.repeat(np.arange(len(graphs), dtype=np.int64), n)
    edge_src, edge_dst, edge_graph = [], [], []
    for gi, g in enumerate(graphs):
        for (u, v, _w) in g.edges:
            edge_src.append(gi * n + u)
            edge_dst.append(gi * n + v)
            edge_graph.append(gi)
    struct = BatchStructure(
        num_graphs=len(graphs),
        nodes_per_graph=n,
        num_nodes=len(graphs) * n,
        num_edges=len(edge_src),
        node_graph=node_graph,
        edge_src=np.asarray(edge_src, dtype=np.int64),
        edge_dst=np.asarray(edge_dst, dtype=np.int64),
        edge_graph=np.asarray(edge_graph, dtype=np.int64),
        directed=graphs[0].directed,
    )
    for kind in cfg.sub_kinds:
        if kind in ("mpnn", "mpnn_fc"):
            mode = "given" if kind == "mpnn" else "fully_connected"
            if mode not in struct.msg_src:
                s, d, r = _message_arrays(graphs, mode, struct)
                struct.msg_src[mode] = s
                struct.msg_dst[mode] = d
                struct.msg_edge[mode] = r
    if cfg.needs_line_graph:
        _attach_line_graph(struct, graphs)
    return struct


def _attach_line_graph(struct: BatchStructure, graphs):
    m_total = struct.num_edges
    mask = np.zeros((m_total, m_total), dtype=bool)
    inc_edge, inc_node = [], []
    base = 0
    node_base = 0
    for g in graphs:
        lg = line_graph(g)
        np.fill_diagonal(mask[base:base + g.m, base:base + g.m], True)
        for (a, b) in lg.edges:
            mask[base + a, base + b] = True
            mask[base + b, base + a] = True
        for r, (u, v, _w) in enumerate(g.edges):
            inc_edge.append(base + r)
            inc_node.append(node_base + u)
            inc_edge.append(base + r)
            inc_node.append(node_base + v)
        base += g.m
        node_base += g.n
    struct.line_mask = mask
    struct.inc_edge = np.asarray(inc_edge, dtype=np.int64)
    struct.inc_node = np.asarray(inc_node, dtype=np.int64)
    touched = np.zeros(struct.num_nodes, dtype=bool)
    if struct.inc_node.size:
        touched[struct.inc_node] = True
    struct.isolated = ~touched


def glorot(rng: Rng, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _linear_params(params, rng, scope, fan_in, fan_out):
    params[f"{scope}.w"] = glorot(rng, fan_in, fan_out)
    params[f"{scope}.b"] = np.zeros(fan_out)


def init_processor_params(cfg: ProcessorConfig, d_h: int, rng: Rng, scope="proc") -> dict:
    """Fresh parameter arrays for one processor, keyed under scope."""
    params: dict = {}
    if cfg.kind == "hybrid":
        _init_sub(params, ProcessorConfig(kind=cfg.pair[0]), d_h, rng.child("a"), f"{scope}.a")
        _init_sub(params, ProcessorConfig(kind=cfg.pair[1]), d_h, rng.child("b"), f"{scope}.b")
        if cfg.mix == "sigmoid":
            params[f"{scope}.gate.w"] = np.zeros((d_h, 1))
    else:
        _init_sub(params, cfg, d_h, rng, scope)
    return params


def _init_sub(params, cfg, d_h, rng, scope):
    if cfg.kind in ("mpnn", "mpnn_fc"):
        _linear_params(params, rng.child("msg"), f"{scope}.msg", 6 * d_h, d_h)
        _linear_params(params, rng.child("upd"), f"{scope}.upd", 2 * d_h, d_h)
        return
    if d_h % ATTENTION_HEADS:
        raise ConfigError(f"d_h={d_h} not divisible by {ATTENTION_HEADS} heads")
    _linear_params(params, rng.child("line"), f"{scope}.line", 3 * d_h, d_h)
    _linear_params(params, rng.child("in"), f"{scope}.in", 2 * d_h, d_h)
    for name in ("wq", "wk", "wv", "wo"):
        _linear_params(params, rng.child(name), f"{scope}.attn.{name}", d_h, d_h)
    _linear_params(params, rng.child("ff1"), f"{scope}.ff1", d_h, 2 * d_h)
    _linear_params(params, rng.child("ff2"), f"{scope}.ff2", 2 * d_h, d_h)
    _linear_params(params, rng.child("self"), f"{scope}.self", d_h, d_h)
    for ln in ("ln1", "ln2"):
        params[f"{scope}.{ln}.g"] = np.ones(d_h)
        params[f"{scope}.{ln}.b"] = np.zeros(d_h)


def _pad_rows(x, d_h):
    """Append one zero row so a sentinel index gathers zeros."""
    zero = T.as_tensor(np.zeros((1, d_h)))
    return T.concat([x, zero], axis=0)


def _mpnn_setup(params, scope, Z_n, Z_e, struct, mode, z_msg, cache):
    """Per-forward constants: weight slices and the encoded-input term.

    The message linear sees [h_src, h_dst, h_e, z_src, z_dst, z_msg]; the
    z half never changes across recurrence steps, so its projection (plus
    the bias) is computed once and re-added each step.
    """
    key = (scope, mode)
    got = cache.get(key)
    if got is not None:
        return got
    d_h = Z_n.shape[1]
    w = params[f"{scope}.msg.w"]
    w_hu, w_hv, w_he, w_zu, w_zv, w_ze = (
        T.slice_(w, slice(i * d_h, (i + 1) * d_h)) for i in range(6)
    )
    uw = params[f"{scope}.upd.w"]
    u_h = T.slice_(uw, slice(0, d_h))
    u_a = T.slice_(uw, slice(d_h, 2 * d_h))
    z_part = None
    src = struct.msg_src[mode]
    if src.size:
        dst = struct.msg_dst[mode]
        erow = struct.msg_edge[mode]
        if z_msg is None:
            # fall back to the stored-edge encodings; absent pairs read zeros
            z_msg = T.gather_rows(_pad_rows(Z_e, d_h), erow,
                                  plan=struct.seg_plan(f"erow:{mode}", erow))
        z_part = (
            T.gather_rows(Z_n @ w_zu, src, plan=struct.seg_plan(f"src:{mode}", src))
            + T.gather_rows(Z_n @ w_zv, dst, plan=struct.seg_plan(f"dst:{mode}", dst))
            + z_msg @ w_ze
            + params[f"{scope}.msg.b"]
        )
    got = (w_hu, w_hv, w_he, u_h, u_a, z_part)
    cache[key] = got
    return got


def _mpnn_sub(params, scope, H_n, H_e, Z_n, Z_e, struct, mode, z_msg=None, cache=None):
    d_h = H_n.shape[1]
    if cache is None:
        cache = {}
    w_hu, w_hv, w_he, u_h, u_a, z_part = _mpnn_setup(
        params, scope, Z_n, Z_e, struct, mode, z_msg, cache)
    upd_b = params[f"{scope}.upd.b"]
    src = struct.msg_src[mode]
    if src.size == 0:
        # no messages at all: nodes aggregate a zero vector
        H_n2 = T.relu(H_n @ u_h + upd_b)
        return H_n2, H_e
    dst = struct.msg_dst[mode]
    erow = struct.msg_edge[mode]
    p_dst = struct.seg_plan(f"dst:{mode}", dst)
    p_erow = struct.seg_plan(f"erow:{mode}", erow)
    # project at node/edge rows, then gather: message rows outnumber nodes
    h_e_proj = _pad_rows(H_e @ w_he, d_h)
    pre = (
        T.gather_rows(H_n @ w_hu, src, plan=struct.seg_plan(f"src:{mode}", src))
        + T.gather_rows(H_n @ w_hv, dst, plan=p_dst)
        + T.gather_rows(h_e_proj, erow, plan=p_erow)
        + z_part
    )
    msgs = T.relu(pre)
    # nodes with no incoming message aggregate a zero vector
    agg = T.segment_max(msgs, dst, struct.num_nodes, plan=p_dst)
    H_n2 = T.relu(H_n @ u_h + agg @ u_a + upd_b)
    # stored edges keep their message; undirected edges take the
    # elementwise max of the two directions
    m = struct.num_edges
    if mode == "given":
        # given-mode layout is [all forward rows, all reverse rows]
        if struct.directed:
            H_e2 = msgs
        else:
            H_e2 = T.maximum(T.slice_(msgs, slice(0, m)), T.slice_(msgs, slice(m, 2 * m)))
    else:
        H_e2 = T.segment_max(msgs, erow, m + 1, plan=p_erow)
        H_e2 = T.slice_(H_e2, slice(0, m))
    return H_n2, H_e2


def _attention(params, scope, x, mask):
    m, d_h = x.shape
    dk = d_h // ATTENTION_HEADS
    q = T.linear(x, params[f"{scope}.attn.wq.w"], params[f"{scope}.attn.wq.b"])
    k = T.linear(x, params[f"{scope}.attn.wk.w"], params[f"{scope}.attn.wk.b"])
    v = T.linear(x, params[f"{scope}.attn.wv.w"], params[f"{scope}.attn.wv.b"])

    def split(t):
        return T.transpose(T.reshape(t, (m, ATTENTION_HEADS, dk)), (1, 0, 2))

    q, k, v = split(q), split(k), split(v)
    logits = T.matmul(q, T.transpose(k, (0, 2, 1))) * T.as_tensor(1.0 / np.sqrt(dk))
    forbid = np.broadcast_to(~mask, (ATTENTION_HEADS, m, m))
    logits = T.masked_fill(logits, forbid, -np.inf)
    attn = T.softmax(logits, axis=-1)
    out = T.matmul(attn, v)
    out = T.reshape(T.transpose(out, (1, 0, 2)), (m, d_h))
    return T.linear(out, params[f"{scope}.attn.wo.w"], params[f"{scope}.attn.wo.b"])


def _twl_setup(params, scope, Z_n, Z_e, struct, cache):
    """Per-forward constants: the encoded line-node inputs, pre-projected.

    x0 = Linear([H_e, z_line]) splits into an H_e part (changes per step)
    and a z_line part (fixed), so the latter is projected once.
    """
    key = (scope, "line")
    got = cache.get(key)
    if got is not None:
        return got
    d_h = Z_n.shape[1]
    # line-node inputs: both endpoint encodings plus the edge's own;
    # undirected edges feed the endpoints sorted elementwise so the
    # result cannot depend on which orientation got stored
    z_u = T.gather_rows(Z_n, struct.edge_src)
    z_v = T.gather_rows(Z_n, struct.edge_dst)
    if not struct.directed:
        z_u, z_v = T.minimum(z_u, z_v), T.maximum(z_u, z_v)
    z_line = T.linear(
        T.concat([z_u, z_v, Z_e], axis=1),
        params[f"{scope}.line.w"], params[f"{scope}.line.b"],
    )
    in_w = params[f"{scope}.in.w"]
    in_h = T.slice_(in_w, slice(0, d_h))
    z_in = z_line @ T.slice_(in_w, slice(d_h, 2 * d_h)) + params[f"{scope}.in.b"]
    got = (in_h, z_in)
    cache[key] = got
    return got


def _twl_sub(params, scope, H_n, H_e, Z_n, Z_e, struct, cache=None):
    d_h = H_n.shape[1]
    if struct.line_mask is None:
        raise ShapeError("structure lacks line-graph arrays")
    if cache is None:
        cache = {}
    iso = struct.isolated.astype(np.float64)[:, None]
    self_upd = H_n + T.linear(H_n, params[f"{scope}.self.w"], params[f"{scope}.self.b"])
    if struct.num_edges == 0:
        return self_upd, H_e
    in_h, z_in = _twl_setup(params, scope, Z_n, Z_e, struct, cache)
    x = H_e @ in_h + z_in
    x = x + _attention(params, scope, T.layer_norm(x, params[f"{scope}.ln1.g"], params[f"{scope}.ln1.b"]), struct.line_mask)
    h = T.layer_norm(x, params[f"{scope}.ln2.g"], params[f"{scope}.ln2.b"])
    h = T.linear(T.relu(T.linear(h, params[f"{scope}.ff1.w"], params[f"{scope}.ff1.b"])),
                 params[f"{scope}.ff2.w"], params[f"{scope}.ff2.b"])
    H_line = x + h
    # node states refresh as the max over incident line-node states;
    # isolated nodes keep their state plus a learned self-update
    p_inc = struct.seg_plan("inc", struct.inc_node)
    gathered = T.gather_rows(H_line, struct.inc_edge, plan=struct.seg_plan("inc_edge", struct.inc_edge))
    readout = T.segment_max(gathered, struct.inc_node, struct.num_nodes, plan=p_inc)
    iso_t = T.as_tensor(iso)
    one_minus = T.as_tensor(1.0 - iso)
    H_n2 = iso_t * self_upd + one_minus * readout
    return H_n2, H_line


def _run_sub(kind, params, scope, H_n, H_e, Z_n, Z_e, struct, z_msg, cache):
    if kind == "mpnn":
        zm = None if z_msg is None else z_msg.get("given")
        return _mpnn_sub(params, scope, H_n, H_e, Z_n, Z_e, struct, "given", zm, cache)
    if kind == "mpnn_fc":
        zm = None if z_msg is None else z_msg.get("fully_connected")
        return _mpnn_sub(params, scope, H_n, H_e, Z_n, Z_e, struct, "fully_connected", zm, cache)
    return _twl_sub(params, scope, H_n, H_e, Z_n, Z_e, struct, cache)


def processor_step(cfg: ProcessorConfig, params, H_nodes, H_edges, Z_nodes, Z_edges,
                   struct: BatchStructure, scope="proc", z_msg=None, cache=None):
    """One recurrent update; params maps names to tensors.

    z_msg optionally maps a message mode to per-message edge encodings
    (ordered-pair channels); without it messages read the stored-edge
    encodings, zeros for pairs with no stored edge.

    cache, a dict the caller keeps for the whole unrolled forward pass,
    holds step-invariant tensors (weight slices, projected encodings).
    Callers must pass a fresh dict whenever params, encodings, or the
    batch change; omitting it just recomputes the constants each step.
    """
    if cache is None:
        cache = {}
    if cfg.kind != "hybrid":
        return _run_sub(cfg.kind, params, scope, H_nodes, H_edges, Z_nodes, Z_edges, struct, z_msg, cache)
    na, ea = _run_sub(cfg.pair[0], params, f"{scope}.a", H_nodes, H_edges, Z_nodes, Z_edges, struct, z_msg, cache)
    nb, eb = _run_sub(cfg.pair[1], params, f"{scope}.b", H_nodes, H_edges, Z_nodes, Z_edges, struct, z_msg, cache)
    if cfg.mix == "average":
        half = T.as_tensor(0.5)
        return (na + nb) * half, (ea + eb) * half
    gate_w = params[f"{scope}.gate.w"]
    g_node = T.sigmoid(T.matmul(H_nodes, gate_w))
    one = T.as_tensor(1.0)
    H_n2 = g_node * na + (one - g_node) * nb
    if struct.num_edges:
        g_edge = T.sigmoid(T.matmul(H_edges, gate_w))
        H_e2 = g_edge * ea + (one - g_edge) * eb
    else:
        H_e2 = ea
    return H_n2, H_e2
