"""Exact label generators for every task.

Each oracle is a pure deterministic function of its input.  Wherever a
task admits several valid answers (BFS parents, shortest-path
predecessors, equal-weight spanning trees, ...), the canonical answer
takes the lowest admissible index, so labels are unique and tests can
compare exactly.

Conventions, applied uniformly:
- roots, sources, unreachable nodes, and maximum elements point to
  themselves, keeping pointer outputs total functions over nodes;
- the Floyd-Warshall table stores, for each ordered pair (i, j), the
  predecessor of j on the canonical shortest i->j path; entry (i, i) is
  i, and an unreachable (i, j) stores j (the pair-level self-pointer).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InputError, ParameterError
from .graphs import Graph


class OutputKind(str, Enum):
    """What a task's output attaches to."""

    node_pointer = "node_pointer"
    edge_mask = "edge_mask"
    graph_pointer = "graph_pointer"
    pair_pointer = "pair_pointer"


@dataclass
class Labels:
    """Task output in canonical form.

    values is int64 with kind-dependent shape: (n,) node targets for
    node_pointer, (m,) 0/1 flags aligned with the edge list for
    edge_mask, (slots,) selected nodes for graph_pointer (one slot for
    an argmin, start/end slots for the max-subarray task), and (n, n)
    predecessor targets for pair_pointer.
    """

    kind: OutputKind
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Labels)
            and self.kind == other.kind
            and np.array_equal(self.values, other.values)
        )


def _in_neighbors(g: Graph) -> list[list[tuple[int, float]]]:
    """Per node: (u, w) for every edge u->v; both directions when undirected."""
    inn: list[list[tuple[int, float]]] = [[] for _ in range(g.n)]
    for u, v, w in g.edges:
        inn[v].append((u, w))
        if not g.directed:
            inn[u].append((v, w))
    for lst in inn:
        lst.sort()
    return inn


def bfs_parents(g: Graph, start: int) -> Labels:
    """BFS tree parents from ``start``.

    Parent of a node at depth d is its lowest-index neighbor at depth
    d-1; start and unreachable nodes self-point.
    """
    if not 0 <= start < g.n:
        raise ParameterError(f"start {start} out of range for n={g.n}")
    nbr = g.out_neighbors()
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[start] = 0
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            for v in nbr[u]:
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    parent = np.arange(g.n, dtype=np.int64)
    inn = _in_neighbors(g)
    for v in range(g.n):
        if v == start or dist[v] < 0:
            continue
        parent[v] = min(u for u, _ in inn[v] if dist[u] == dist[v] - 1)
    return Labels(OutputKind.node_pointer, parent)


def dfs_forest(g: Graph) -> Labels:
    """DFS forest parents; lowest-index root first, lowest-index neighbor expanded first."""
    nbr = g.out_neighbors()
    parent = np.arange(g.n, dtype=np.int64)
    seen = [False] * g.n
    for root in range(g.n):
        if seen[root]:
            continue
        seen[root] = True
        stack = [(root, iter(nbr[root]))]
        while stack:
            u, it = stack[-1]
            advanced = False
            for v in it:
                if not seen[v]:
                    seen[v] = True
                    parent[v] = u
                    stack.append((v, iter(nbr[v])))
                    advanced = True
                    break
            if not advanced:
                stack.pop()
    return Labels(OutputKind.node_pointer, parent)


def _dijkstra(g: Graph, source: int) -> np.ndarray:
    """Exact shortest-path costs from source; +inf where unreachable.

    Costs accumulate left to right along the path (dist[u] + w), so they
    are bit-identical to summing the winning path's weights in order.
    """
    out: list[list[tuple[int, float]]] = [[] for _ in range(g.n)]
    for u, v, w in g.edges:
        if w < 0:
            raise InputError(f"negative weight {w} on edge ({u},{v})")
        out[u].append((v, w))
        if not g.directed:
            out[v].append((u, w))
    dist = np.full(g.n, np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = [False] * g.n
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for v, w in out[u]:
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _predecessors(g: Graph, dist: np.ndarray, source: int) -> np.ndarray:
    """Lowest-index predecessor attaining dist[v] = dist[u] + w(u, v)."""
    inn = _in_neighbors(g)
    pred = np.arange(g.n, dtype=np.int64)
    for v in range(g.n):
        if v == source or not np.isfinite(dist[v]):
            continue
        pred[v] = min(u for u, w in inn[v] if np.isfinite(dist[u]) and dist[u] + w == dist[v])
    return pred


def _topological_order(g: Graph) -> list[int] | None:
    """Kahn's algorithm with a lowest-index-first queue; None on a cycle."""
    indeg = np.zeros(g.n, dtype=np.int64)
    out: list[list[int]] = [[] for _ in range(g.n)]
    for u, v, _ in g.edges:
        out[u].append(v)
        indeg[v] += 1
    ready = [int(v) for v in np.flatnonzero(indeg == 0)]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for v in out[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(ready, v)
    return order if len(order) == g.n else None


def shortest_paths(g: Graph, mode: str, source: int | None = None) -> Labels:
    """Shortest-path predecessor labels.

    Modes:
        bellman_ford: single-source predecessors (node_pointer).
        dag: same, but requires acyclic input.
        floyd_warshall: all-pairs predecessor table (pair_pointer);
            ``source`` is ignored.

    Weights must be nonnegative; ties take the lowest predecessor index;
    unreachable nodes (or pairs) self-point.
    """
    if mode in ("bellman_ford", "dag"):
        src = 0 if source is None else int(source)
        if not 0 <= src < g.n:
            raise ParameterError(f"source {src} out of range for n={g.n}")
        if mode == "dag" and _topological_order(g) is None:
            raise InputError("dag mode requires an acyclic graph")
        dist = _dijkstra(g, src)
        return Labels(OutputKind.node_pointer, _predecessors(g, dist, src))
    if mode == "floyd_warshall":
        table = np.empty((g.n, g.n), dtype=np.int64)
        for i in range(g.n):
            dist = _dijkstra(g, i)
            row = _predecessors(g, dist, i)
            unreachable = ~np.isfinite(dist)
            row[unreachable] = np.flatnonzero(unreachable)
            row[i] = i
            table[i] = row
        return Labels(OutputKind.pair_pointer, table)
    raise ParameterError(f"unknown shortest-path mode {mode!r}")


def mst(g: Graph, mode: str, start: int = 0) -> Labels:
    """Minimum spanning forest as an edge mask.

    Ties take the lowest (u, v) pair lexicographically, so prim and
    kruskal agree whenever weights are distinct.
    """
    if g.directed:
        raise ParameterError("mst requires an undirected graph")
    if not 0 <= start < g.n:
        raise ParameterError(f"start {start} out of range for n={g.n}")
    mask = np.zeros(g.m, dtype=np.int64)
    if mode == "kruskal":
        parent = list(range(g.n))

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        order = sorted(range(g.m), key=lambda i: (g.edges[i][2], g.edges[i][0], g.edges[i][1]))
        for i in order:
            u, v, _ = g.edges[i]
            ru, rv = find(u), find(v)
            if ru != rv:
                parent[ru] = rv
                mask[i] = 1
        return Labels(OutputKind.edge_mask, mask)
    if mode == "prim":
        incident: list[list[int]] = [[] for _ in range(g.n)]
        for i, (u, v, _) in enumerate(g.edges):
            incident[u].append(i)
            incident[v].append(i)
        visited = [False] * g.n
        heap: list[tuple[float, int, int, int]] = []

        def absorb(node: int) -> None:
            visited[node] = True
            for i in incident[node]:
                u, v, w = g.edges[i]
                heapq.heappush(heap, (w, u, v, i))

        # Grow from `start`, then restart from the lowest unvisited
        # node once a component is exhausted (spanning forest).
        pending = [v for v in range(g.n) if v != start]
        pending.reverse()
        absorb(start)
        while True:
            while heap:
                _, _, _, i = heapq.heappop(heap)
                u, v, _ = g.edges[i]
                if visited[u] and visited[v]:
                    continue
                mask[i] = 1
                absorb(v if visited[u] else u)
            while pending and visited[pending[-1]]:
                pending.pop()
            if not pending:
                break
            absorb(pending.pop())
        return Labels(OutputKind.edge_mask, mask)
    raise ParameterError(f"unknown mst mode {mode!r}")


def _tarjan_sccs(g: Graph) -> np.ndarray:
    """Lowest-index member of each node's strongly connected component."""
    out: list[list[int]] = [[] for _ in range(g.n)]
    for u, v, _ in g.edges:
        out[u].append(v)
    index = [-1] * g.n
    low = [0] * g.n
    on_stack = [False] * g.n
    comp_stack: list[int] = []
    rep = np.arange(g.n, dtype=np.int64)
    counter = 0
    for root in range(g.n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            u, ei = work[-1]
            if ei == 0:
                index[u] = low[u] = counter
                counter += 1
                comp_stack.append(u)
                on_stack[u] = True
            if ei < len(out[u]):
                work[-1] = (u, ei + 1)
                v = out[u][ei]
                if index[v] == -1:
                    work.append((v, 0))
                elif on_stack[v]:
                    low[u] = min(low[u], index[v])
            else:
                work.pop()
                if work:
                    p = work[-1][0]
                    low[p] = min(low[p], low[u])
                if low[u] == index[u]:
                    members = []
                    while True:
                        w = comp_stack.pop()
                        on_stack[w] = False
                        members.append(w)
                        if w == u:
                            break
                    rep[members] = min(members)
    return rep


def _bridges_mask(g: Graph) -> np.ndarray:
    """Tarjan low-link bridge detection on an undirected graph."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(g.n)]
    for i, (u, v, _) in enumerate(g.edges):
        adj[u].append((v, i))
        adj[v].append((u, i))
    disc = [-1] * g.n
    low = [0] * g.n
    mask = np.zeros(g.m, dtype=np.int64)
    timer = 0
    for root in range(g.n):
        if disc[root] != -1:
            continue
        disc[root] = low[root] = timer
        timer += 1
        stack = [(root, -1, iter(adj[root]))]
        while stack:
            u, pe, it = stack[-1]
            advanced = False
            for v, e in it:
                if e == pe:
                    continue
                if disc[v] == -1:
                    disc[v] = low[v] = timer
                    timer += 1
                    stack.append((v, e, iter(adj[v])))
                    advanced = True
                    break
                low[u] = min(low[u], disc[v])
            if not advanced:
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > disc[p]:
                        mask[pe] = 1
    return mask


def structure(g: Graph, mode: str) -> Labels:
    """Structural tasks: topological order, SCC membership, bridges.

    topological: node_pointer to the node just before it in the
        canonical (lowest-index-first Kahn) order; the first node
        self-points.  Raises InputError on a cycle.
    scc: node_pointer to the lowest-index member of the node's SCC.
    bridges: edge_mask flagging bridge edges; undirected input only.
    """
    if mode == "topological":
        order = _topological_order(g)
        if order is None:
            raise InputError("topological mode requires an acyclic graph")
        ptr = np.empty(g.n, dtype=np.int64)
        ptr[order[0]] = order[0]
        for k in range(1, g.n):
            ptr[order[k]] = order[k - 1]
        return Labels(OutputKind.node_pointer, ptr)
    if mode == "scc":
        return Labels(OutputKind.node_pointer, _tarjan_sccs(g))
    if mode == "bridges":
        if g.directed:
            raise ParameterError("bridges requires an undirected graph")
        return Labels(OutputKind.edge_mask, _bridges_mask(g))
    raise ParameterError(f"unknown structure mode {mode!r}")


def sequence_oracle(values, mode: str) -> Labels:
    """Sequence tasks on a list of reals.

    sort: node_pointer to each element's successor in ascending order
        (ties by index); the maximum self-points.
    kadane: graph pointers (start, end) of the maximum-sum contiguous
        subarray; ties prefer the smallest start, then smallest end.
    minimum: one graph pointer to the argmin (lowest index on ties).
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 1 or vals.size == 0:
        raise InputError(f"need a non-empty 1-d sequence, got shape {vals.shape}")
    n = vals.size
    if mode == "sort":
        order = np.argsort(vals, kind="stable")
        ptr = np.empty(n, dtype=np.int64)
        for k in range(n - 1):
            ptr[order[k]] = order[k + 1]
        ptr[order[-1]] = order[-1]
        return Labels(OutputKind.node_pointer, ptr)
    if mode == "kadane":
        best = -np.inf
        best_span = (0, 0)
        for s in range(n):
            acc = 0.0
            for e in range(s, n):
                acc += vals[e]
                if acc > best:
                    best = acc
                    best_span = (s, e)
        return Labels(OutputKind.graph_pointer, np.array(best_span, dtype=np.int64))
    if mode == "minimum":
        return Labels(OutputKind.graph_pointer, np.array([int(np.argmin(vals))], dtype=np.int64))
    raise ParameterError(f"unknown sequence mode {mode!r}")
