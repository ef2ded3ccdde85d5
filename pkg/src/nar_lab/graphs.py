"""Graph containers, random samplers, and structural transforms.

Graphs are small (tens of nodes) and dense enough that adjacency
matrices are cheap, so the representation favours clarity: an explicit
edge list plus on-demand dense views.  Undirected edges are stored once
with ``u < v``; directed edges keep their orientation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError, ParameterError
from .rng import Rng

# Rejection samplers give up after this many attempts; failure is a bug
# in the requested parameters, not something to retry forever.
RETRY_CAP = 1000


@dataclass
class Graph:
    """A simple graph: no self-loops, no duplicate edges.

    Attributes:
        n: number of nodes, labelled 0..n-1.
        edges: list of (u, v, weight) triples; u < v when undirected.
        directed: orientation flag for the whole graph.
    """

    n: int
    edges: list[tuple[int, int, float]]
    directed: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"graph needs at least one node, got n={self.n}")
        seen = set()
        for u, v, w in self.edges:
            if u == v:
                raise ParameterError(f"self-loop at node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ParameterError(f"edge ({u},{v}) out of range for n={self.n}")
            if not self.directed and u > v:
                raise ParameterError(f"undirected edge ({u},{v}) must be stored with u < v")
            if (u, v) in seen:
                raise ParameterError(f"duplicate edge ({u},{v})")
            if not np.isfinite(w):
                raise ParameterError(f"edge ({u},{v}) has non-finite weight {w}")
            seen.add((u, v))

    @property
    def m(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency; symmetric when undirected."""
        a = np.zeros((self.n, self.n), dtype=np.int64)
        for u, v, _ in self.edges:
            a[u, v] = 1
            if not self.directed:
                a[v, u] = 1
        return a

    def weight_matrix(self, absent: float = np.inf) -> np.ndarray:
        """Dense weights with ``absent`` where there is no edge; 0 on the diagonal."""
        w = np.full((self.n, self.n), absent, dtype=np.float64)
        np.fill_diagonal(w, 0.0)
        for u, v, wt in self.edges:
            w[u, v] = wt
            if not self.directed:
                w[v, u] = wt
        return w

    def out_neighbors(self) -> list[list[int]]:
        """Sorted out-neighbor lists; for undirected graphs both endpoints see each other."""
        nbr: list[list[int]] = [[] for _ in range(self.n)]
        for u, v, _ in self.edges:
            nbr[u].append(v)
            if not self.directed:
                nbr[v].append(u)
        for lst in nbr:
            lst.sort()
        return nbr

    def degrees(self) -> np.ndarray:
        """Number of incident edges per node (in + out for directed graphs)."""
        d = np.zeros(self.n, dtype=np.int64)
        for u, v, _ in self.edges:
            d[u] += 1
            d[v] += 1
        return d

    def edge_index(self) -> dict[tuple[int, int], int]:
        """Map endpoints to their row in ``edges``; undirected pairs map both ways."""
        idx: dict[tuple[int, int], int] = {}
        for i, (u, v, _) in enumerate(self.edges):
            idx[(u, v)] = i
            if not self.directed:
                idx[(v, u)] = i
        return idx

    def has_edge(self, u: int, v: int) -> bool:
        return (u, v) in self.edge_index()

    def with_weights(self, weights: np.ndarray) -> "Graph":
        """Copy of this graph with edge weights replaced positionally."""
        if len(weights) != self.m:
            raise ParameterError(f"need {self.m} weights, got {len(weights)}")
        edges = [(u, v, float(w)) for (u, v, _), w in zip(self.edges, weights)]
        return Graph(self.n, edges, self.directed)


@dataclass
class LineGraph:
    """The line graph: one node per original edge, adjacency by shared endpoint.

    Attributes:
        node_pairs: endpoints of the original edges, aligned with Graph.edges.
        edges: pairs (i, j), i < j, of line-node indices sharing >= 1 endpoint.
        n_original: node count of the source graph.
    """

    node_pairs: list[tuple[int, int]]
    edges: list[tuple[int, int]]
    n_original: int

    @property
    def m(self) -> int:
        return len(self.node_pairs)


@dataclass
class ProbePair:
    """A bridge-probe pair: two graphs differing in exactly one cross edge.

    ``single`` has exactly one edge between the two communities (the
    probe edge, necessarily a bridge); ``double`` adds a second,
    distinct cross edge, which demotes the probe edge to a non-bridge.
    """

    single: Graph
    double: Graph
    probe_edge: tuple[int, int]
    communities: np.ndarray = field(repr=False)


def sample_er(n: int, p: float, rng: Rng, directed: bool = False) -> Graph:
    """Erdos-Renyi G(n, p) with unit weights.

    Args:
        n: node count.
        p: independent inclusion probability per (ordered, when directed) pair.
        rng: stream to draw from.
        directed: sample each ordered pair independently when True.

    Returns:
        A simple Graph; weights are 1.0 (weighted tasks reassign them).
    """
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must be in [0,1], got {p}")
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    edges = []
    if directed:
        draws = rng.random((n, n))
        for u in range(n):
            for v in range(n):
                if u != v and draws[u, v] < p:
                    edges.append((u, v, 1.0))
    else:
        draws = rng.random(n * (n - 1) // 2)
        k = 0
        for u in range(n):
            for v in range(u + 1, n):
                if draws[k] < p:
                    edges.append((u, v, 1.0))
                k += 1
    return Graph(n, edges, directed)


def _pair_stubs(n: int, k: int, rng: Rng) -> list[tuple[int, int, float]] | None:
    """One pairing-model attempt with stub repair; None on a dead end.

    Pairs up k stubs per node; incompatible pairs (self-loops,
    duplicates) return their stubs to the pool and the pool is
    reshuffled until it empties or no valid pair can exist.
    """
    edges: set[tuple[int, int]] = set()
    stubs = list(np.repeat(np.arange(n), k))
    while stubs:
        leftover: dict[int, int] = {}
        arr = np.array(stubs)
        rng.shuffle(arr)
        for u, v in zip(arr[::2], arr[1::2]):
            u, v = int(u), int(v)
            if u > v:
                u, v = v, u
            if u != v and (u, v) not in edges:
                edges.add((u, v))
            else:
                leftover[u] = leftover.get(u, 0) + 1
                leftover[v] = leftover.get(v, 0) + 1
        if not leftover:
            return [(u, v, 1.0) for u, v in sorted(edges)]
        # Dead end unless two leftover stubs sit on distinct, non-adjacent nodes.
        nodes = sorted(leftover)
        ok = any(
            (u, v) not in edges for i, u in enumerate(nodes) for v in nodes[i + 1 :]
        )
        if not ok:
            return None
        stubs = [node for node, count in leftover.items() for _ in range(count)]
    return [(u, v, 1.0) for u, v in sorted(edges)]


def sample_k_regular(n: int, k: int, rng: Rng) -> Graph:
    """Random k-regular simple graph via the pairing model.

    Each attempt pairs node stubs uniformly and repairs collisions by
    re-shuffling the leftover stubs; attempts that dead-end are
    restarted, up to RETRY_CAP times.

    Raises:
        ParameterError: if n*k is odd or k >= n.
        GenerationError: if no simple pairing is found within the cap.
    """
    if k < 0 or k >= n:
        raise ParameterError(f"need 0 <= k < n, got k={k}, n={n}")
    if (n * k) % 2 != 0:
        raise ParameterError(f"n*k must be even, got n={n}, k={k}")
    if k == 0:
        return Graph(n, [])
    for _ in range(RETRY_CAP):
        edges = _pair_stubs(n, k, rng)
        if edges is not None:
            return Graph(n, edges)
    raise GenerationError(f"no simple {k}-regular pairing on {n} nodes after {RETRY_CAP} attempts")


def is_connected(g: Graph) -> bool:
    """Connectivity ignoring edge orientation."""
    if g.n == 1:
        return True
    nbr: list[list[int]] = [[] for _ in range(g.n)]
    for u, v, _ in g.edges:
        nbr[u].append(v)
        nbr[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in nbr[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == g.n


def sample_two_community_pair(n_per_side: int, p_intra: float, rng: Rng) -> ProbePair:
    """Sample a bridge-probe pair of two-community graphs.

    Each community is a connected ER(n_per_side, p_intra) graph
    (resampled until connected, up to RETRY_CAP draws).  One uniform
    cross pair becomes the probe edge; the double graph adds a second,
    distinct cross pair.

    Returns:
        ProbePair with nodes 0..n_per_side-1 in community 0 and the
        rest in community 1.
    """
    if n_per_side < 2:
        raise ParameterError(f"need n_per_side >= 2, got {n_per_side}")

    def connected_er() -> Graph:
        for _ in range(RETRY_CAP):
            g = sample_er(n_per_side, p_intra, rng)
            if is_connected(g):
                return g
        raise GenerationError(
            f"no connected ER({n_per_side}, {p_intra}) draw in {RETRY_CAP} attempts"
        )

    left = connected_er()
    right = connected_er()
    n = 2 * n_per_side
    base = [(u, v, 1.0) for u, v, _ in left.edges]
    base += [(u + n_per_side, v + n_per_side, 1.0) for u, v, _ in right.edges]

    u1 = int(rng.integers(0, n_per_side))
    v1 = int(rng.integers(n_per_side, n))
    probe = (u1, v1)
    single = Graph(n, sorted(base + [(u1, v1, 1.0)]))

    while True:
        u2 = int(rng.integers(0, n_per_side))
        v2 = int(rng.integers(n_per_side, n))
        if (u2, v2) != probe:
            break
    double = Graph(n, sorted(base + [(u1, v1, 1.0), (u2, v2, 1.0)]))

    communities = np.repeat(np.array([0, 1]), n_per_side)
    return ProbePair(single=single, double=double, probe_edge=probe, communities=communities)


def induced_subgraph(g: Graph, nodes) -> Graph:
    """Subgraph on ``nodes``, relabelled by their position in ``nodes``.

    Keeps exactly the edges with both endpoints in ``nodes``; weights
    and orientation carry over.
    """
    nodes = [int(v) for v in nodes]
    if len(set(nodes)) != len(nodes):
        raise ParameterError("nodes must be distinct")
    if not nodes:
        raise ParameterError("nodes must be non-empty")
    for v in nodes:
        if not 0 <= v < g.n:
            raise ParameterError(f"node {v} out of range for n={g.n}")
    relabel = {v: i for i, v in enumerate(nodes)}
    edges = []
    for u, v, w in g.edges:
        if u in relabel and v in relabel:
            a, b = relabel[u], relabel[v]
            if not g.directed and a > b:
                a, b = b, a
            edges.append((a, b, w))
    return Graph(len(nodes), sorted(edges) if not g.directed else edges, g.directed)


def line_graph(g: Graph) -> LineGraph:
    """Line graph of ``g``: line-nodes are edges, adjacency is a shared endpoint.

    For undirected simple graphs the line-edge count is
    sum_v C(deg(v), 2).  Directed edges are treated as endpoint sets,
    so an antiparallel pair shares both endpoints but contributes a
    single line edge.
    """
    pairs = [(u, v) for u, v, _ in g.edges]
    incident: list[list[int]] = [[] for _ in range(g.n)]
    for i, (u, v) in enumerate(pairs):
        incident[u].append(i)
        incident[v].append(i)
    line_edges: set[tuple[int, int]] = set()
    for ids in incident:
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                i, j = ids[a], ids[b]
                line_edges.add((min(i, j), max(i, j)))
    return LineGraph(node_pairs=pairs, edges=sorted(line_edges), n_original=g.n)
