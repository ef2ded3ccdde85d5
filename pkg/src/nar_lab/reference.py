"""Brute-force reference checks for oracle labels.

These are *independent* implementations: where the oracles run the
classical algorithms, the checks here enumerate (simple paths, edge
subsets, subarrays, permutations) or recompute from first principles
(hop distances by matrix powers, bridge detection by removal and
recount).  They exist to catch a wrong oracle, so they must not share
its logic.

Everything here is exponential and guarded to n <= 8 nodes.
"""

from __future__ import annotations

import sys
from itertools import combinations, permutations

import numpy as np

from .errors import ParameterError
from .graphs import Graph
from .oracles import Labels, OutputKind

MAX_BRUTE_NODES = 8


def _hop_distances(g: Graph, start: int) -> np.ndarray:
    """Shortest hop counts from start via boolean matrix powers."""
    a = g.adjacency()
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[start] = 0
    reach = np.zeros(g.n, dtype=np.int64)
    reach[start] = 1
    for k in range(1, g.n):
        reach = np.minimum(reach @ a, 1)
        newly = (reach > 0) & (dist < 0)
        dist[newly] = k
    return dist


def _check_bfs(g: Graph, labels: Labels, start: int) -> bool:
    if labels.kind is not OutputKind.node_pointer or labels.values.shape != (g.n,):
        return False
    dist = _hop_distances(g, start)
    a = g.adjacency().astype(bool)
    for v in range(g.n):
        p = labels.values[v]
        if v == start or dist[v] < 0:
            if p != v:
                return False
            continue
        candidates = [u for u in range(g.n) if a[u, v] and dist[u] == dist[v] - 1]
        if not candidates or p != min(candidates):
            return False
    return True


def _check_dfs(g: Graph, labels: Labels) -> bool:
    # Independent recursive restatement of the traversal.
    nbr = g.out_neighbors()
    parent = list(range(g.n))
    seen = set()
    sys.setrecursionlimit(max(1000, 10 * g.n))

    def visit(u: int) -> None:
        seen.add(u)
        for v in nbr[u]:
            if v not in seen:
                parent[v] = u
                visit(v)

    for root in range(g.n):
        if root not in seen:
            visit(root)
    return labels.kind is OutputKind.node_pointer and np.array_equal(
        labels.values, np.array(parent)
    )


def _enumerate_path_costs(g: Graph, source: int):
    """All simple paths from source, costs summed left to right.

    Returns (best_cost per node, valid predecessor set per node), where
    a predecessor is valid if some cost-minimal simple path arrives
    through it.
    """
    out: list[list[tuple[int, float]]] = [[] for _ in range(g.n)]
    for u, v, w in g.edges:
        out[u].append((v, w))
        if not g.directed:
            out[v].append((u, w))
    best = np.full(g.n, np.inf)
    best[source] = 0.0
    arrivals: list[list[tuple[float, int]]] = [[] for _ in range(g.n)]
    visited = [False] * g.n
    visited[source] = True

    def walk(u: int, cost: float) -> None:
        for v, w in out[u]:
            if visited[v]:
                continue
            c = cost + w
            arrivals[v].append((c, u))
            if c < best[v]:
                best[v] = c
            visited[v] = True
            walk(v, c)
            visited[v] = False

    walk(source, 0.0)
    preds = [{u for c, u in arrivals[v] if c == best[v]} for v in range(g.n)]
    return best, preds


def _check_sssp(g: Graph, labels: Labels, source: int) -> bool:
    if labels.kind is not OutputKind.node_pointer or labels.values.shape != (g.n,):
        return False
    best, preds = _enumerate_path_costs(g, source)
    for v in range(g.n):
        p = labels.values[v]
        if v == source or not np.isfinite(best[v]):
            if p != v:
                return False
            continue
        if not preds[v] or p != min(preds[v]):
            return False
    return True


def _check_floyd_warshall(g: Graph, labels: Labels) -> bool:
    if labels.kind is not OutputKind.pair_pointer or labels.values.shape != (g.n, g.n):
        return False
    for i in range(g.n):
        best, preds = _enumerate_path_costs(g, i)
        for j in range(g.n):
            p = labels.values[i, j]
            if j == i or not np.isfinite(best[j]):
                if p != j:
                    return False
                continue
            if not preds[j] or p != min(preds[j]):
                return False
    return True


def _component_count(n: int, edge_pairs) -> int:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    groups = n
    for u, v in edge_pairs:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            groups -= 1
    return groups


def _is_spanning_forest(g: Graph, rows) -> bool:
    """Selected rows are acyclic and connect every component of g."""
    parent = list(range(g.n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i in rows:
        u, v, _ = g.edges[i]
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    groups = len({find(v) for v in range(g.n)})
    return groups == _component_count(g.n, [(u, v) for u, v, _ in g.edges])


def _check_mst(g: Graph, labels: Labels) -> bool:
    if labels.kind is not OutputKind.edge_mask or labels.values.shape != (g.m,):
        return False
    rows = [i for i in range(g.m) if labels.values[i] == 1]
    if set(labels.values.tolist()) - {0, 1}:
        return False
    c = _component_count(g.n, [(u, v) for u, v, _ in g.edges])
    if len(rows) != g.n - c or not _is_spanning_forest(g, rows):
        return False
    # Minimality over every same-size edge subset; sums run over sorted
    # weights so equal multisets compare exactly.
    chosen = sum(sorted(g.edges[i][2] for i in rows))
    best = min(
        sum(sorted(g.edges[i][2] for i in subset))
        for subset in combinations(range(g.m), len(rows))
        if _is_spanning_forest(g, subset)
    )
    return chosen == best


def _pointer_chain_order(labels: Labels, n: int) -> list[int] | None:
    """Recover the total order encoded by predecessor pointers, or None."""
    if labels.values.shape != (n,):
        return None
    starts = [v for v in range(n) if labels.values[v] == v]
    if len(starts) != 1:
        return None
    succ: dict[int, int] = {}
    for v in range(n):
        p = int(labels.values[v])
        if v == starts[0]:
            continue
        if p in succ:
            return None
        succ[p] = v
    order = [starts[0]]
    while order[-1] in succ:
        order.append(succ[order[-1]])
    return order if len(order) == n else None


def _check_topological(g: Graph, labels: Labels) -> bool:
    if labels.kind is not OutputKind.node_pointer:
        return False
    order = _pointer_chain_order(labels, g.n)
    if order is None:
        return False
    forward = {(u, v) for u, v, _ in g.edges}

    def valid(p) -> bool:
        pos = {v: k for k, v in enumerate(p)}
        return all(pos[u] < pos[v] for u, v in forward)

    # permutations() yields in lexicographic order, so the first valid
    # one is the canonical (lowest-index-first Kahn) order.
    lex_first = next((list(p) for p in permutations(range(g.n)) if valid(p)), None)
    return lex_first is not None and order == lex_first


def _check_scc(g: Graph, labels: Labels) -> bool:
    if labels.kind is not OutputKind.node_pointer or labels.values.shape != (g.n,):
        return False
    a = g.adjacency()
    reach = np.eye(g.n, dtype=np.int64)
    for _ in range(g.n):
        reach = np.minimum(reach + reach @ a, 1)
    together = (reach > 0) & (reach.T > 0)
    expected = np.array([int(np.flatnonzero(together[v]).min()) for v in range(g.n)])
    return np.array_equal(labels.values, expected)


def _check_bridges(g: Graph, labels: Labels) -> bool:
    if labels.kind is not OutputKind.edge_mask or labels.values.shape != (g.m,):
        return False
    pairs = [(u, v) for u, v, _ in g.edges]
    base = _component_count(g.n, pairs)
    for i in range(g.m):
        without = _component_count(g.n, pairs[:i] + pairs[i + 1 :])
        if labels.values[i] != int(without > base):
            return False
    return True


def _check_sort(values, labels: Labels) -> bool:
    n = len(values)
    if labels.kind is not OutputKind.node_pointer or labels.values.shape != (n,):
        return False
    order = sorted(range(n), key=lambda i: (values[i], i))
    ptr = list(range(n))
    for a, b in zip(order, order[1:]):
        ptr[a] = b
    ptr[order[-1]] = order[-1]
    return np.array_equal(labels.values, np.array(ptr))


def _check_kadane(values, labels: Labels) -> bool:
    n = len(values)
    if labels.kind is not OutputKind.graph_pointer or labels.values.shape != (2,):
        return False
    best = -np.inf
    span = None
    for s in range(n):
        acc = 0.0
        for e in range(s, n):
            acc += float(values[e])
            if acc > best:
                best = acc
                span = (s, e)
    return span == tuple(labels.values.tolist())


def _check_minimum(values, labels: Labels) -> bool:
    n = len(values)
    if labels.kind is not OutputKind.graph_pointer or labels.values.shape != (1,):
        return False
    arg = 0
    for i in range(1, n):
        if values[i] < values[arg]:
            arg = i
    return int(labels.values[0]) == arg


_SEQUENCE_TASKS = {"quicksort", "find_maximum_subarray_kadane", "minimum"}


def brute_force_check(task, g_or_seq, labels: Labels, start: int | None = None) -> bool:
    """True iff ``labels`` satisfy ``task``'s definition on this instance.

    Args:
        task: task name (or anything whose str() is one).
        g_or_seq: the Graph, or the raw value sequence for sequence tasks.
        labels: candidate labels to verify.
        start: start/source node for tasks that have one (default 0).

    Raises:
        ParameterError: instance has more than MAX_BRUTE_NODES nodes.
    """
    name = str(getattr(task, "value", task))
    if name in _SEQUENCE_TASKS:
        seq = np.asarray(g_or_seq, dtype=np.float64)
        if seq.ndim != 1:
            seq = np.asarray(getattr(g_or_seq, "values", g_or_seq))
        n = seq.size
    else:
        n = g_or_seq.n
    if n > MAX_BRUTE_NODES:
        raise ParameterError(f"brute-force check limited to n <= {MAX_BRUTE_NODES}, got {n}")
    s = 0 if start is None else int(start)

    if name == "bfs":
        return _check_bfs(g_or_seq, labels, s)
    if name == "dfs":
        return _check_dfs(g_or_seq, labels)
    if name in ("bellman_ford", "dag_shortest_paths"):
        return _check_sssp(g_or_seq, labels, s)
    if name == "floyd_warshall":
        return _check_floyd_warshall(g_or_seq, labels)
    if name in ("mst_prim", "mst_kruskal"):
        return _check_mst(g_or_seq, labels)
    if name == "topological_sort":
        return _check_topological(g_or_seq, labels)
    if name == "strongly_connected_components":
        return _check_scc(g_or_seq, labels)
    if name == "bridges":
        return _check_bridges(g_or_seq, labels)
    if name == "quicksort":
        return _check_sort(np.asarray(g_or_seq, dtype=np.float64), labels)
    if name == "find_maximum_subarray_kadane":
        return _check_kadane(np.asarray(g_or_seq, dtype=np.float64), labels)
    if name == "minimum":
        return _check_minimum(np.asarray(g_or_seq, dtype=np.float64), labels)
    raise ParameterError(f"unknown task {name!r}")
