"""Undirected graphs and the precision matrices built on top of them.

A :class:`Graph` is a node count plus a set of undirected edges stored
as ``(j, k)`` with ``j < k``.  The generator pair below reproduces the
two-network simulation design: draw a sparse power-law graph, then
"knock out" some of its best-connected nodes to form the second graph,
keeping the edge count fixed.  :func:`build_pair` turns such a pair of
graphs into a pair of positive definite precision matrices that share
entry values on shared edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InfeasibleDegreeSequence, ParseError
from .numerics import extreme_eigenvalues, invert_spd, rng_stream

# Retry budget for realizing a sampled degree sequence as a simple graph.
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes ``0 .. p-1``."""

    p: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not isinstance(self.p, (int, np.integer)) or self.p < 1:
            raise DomainError(f"node count must be a positive integer, got {self.p!r}")
        normalized = set()
        for edge in self.edges:
            a, b = int(edge[0]), int(edge[1])
            if a == b:
                raise DomainError(f"self-loop at node {a}")
            if a > b:
                a, b = b, a
            if not 0 <= a < b < self.p:
                raise DomainError(f"edge {edge} out of range for p={self.p}")
            normalized.add((a, b))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "edges", frozenset(normalized))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.p, dtype=np.int64)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg

    def has_edge(self, j: int, k: int) -> bool:
        a, b = (j, k) if j < k else (k, j)
        return (a, b) in self.edges


def neighborhood(g: Graph, j: int) -> frozenset:
    """Set of nodes adjacent to ``j`` in ``g``."""
    if not 0 <= j < g.p:
        raise DomainError(f"node {j} out of range for p={g.p}")
    out = set()
    for a, b in g.edges:
        if a == j:
            out.add(b)
        elif b == j:
            out.add(a)
    return frozenset(out)


@dataclass(frozen=True, eq=False)
class PrecisionModel:
    """A graph with a matching precision matrix and its inverse.

    ``omega`` is positive definite, its off-diagonal support equals the
    graph's edge set, and ``sigma`` is its inverse (so ``omega @ sigma``
    is the identity up to roundoff).
    """

    graph: Graph
    omega: np.ndarray
    sigma: np.ndarray


def _sample_degrees(p: int, edge_count: int, power: float, rng) -> np.ndarray:
    values = np.arange(1, p, dtype=np.float64)
    pmf = values ** (-power)
    pmf /= pmf.sum()
    raw = rng.choice(np.arange(1, p), size=p, p=pmf).astype(np.float64)
    target = 2 * edge_count
    deg = np.floor(raw * (target / raw.sum()) + 0.5).astype(np.int64)
    deg = np.clip(deg, 0, p - 1)
    # Nudge entries until the stub count is exact, visiting nodes in a
    # seeded random order so no node index is systematically favored.
    order = rng.permutation(p)
    pos = 0
    guard = 0
    while deg.sum() != target:
        guard += 1
        if guard > 100 * p:
            break
        i = order[pos % p]
        pos += 1
        if deg.sum() < target and deg[i] < p - 1:
            deg[i] += 1
        elif deg.sum() > target and deg[i] > 0:
            deg[i] -= 1
    return deg


def _match_stubs(deg: np.ndarray, p: int, rng):
    """Pair stubs uniformly, then repair collisions by edge swaps."""
    stubs = np.repeat(np.arange(p), deg)
    rng.shuffle(stubs)
    edges = set()
    bad = []
    for i in range(0, len(stubs), 2):
        a, b = int(stubs[i]), int(stubs[i + 1])
        if a > b:
            a, b = b, a
        if a == b or (a, b) in edges:
            bad.append((a, b))
        else:
            edges.add((a, b))
    budget = 200 * (len(bad) + 1)
    while bad and budget > 0:
        a, b = bad.pop()
        placed = False
        pool = sorted(edges)
        for _ in range(50):
            budget -= 1
            if budget <= 0 or not pool:
                break
            c, d = pool[rng.integers(len(pool))]
            if rng.integers(2):
                c, d = d, c
            e1 = (min(a, c), max(a, c))
            e2 = (min(b, d), max(b, d))
            if a == c or b == d or e1 in edges or e2 in edges or e1 == e2:
                continue
            edges.remove((min(c, d), max(c, d)))
            edges.add(e1)
            edges.add(e2)
            placed = True
            break
        if not placed:
            return None
    if bad:
        return None
    return edges


def gen_power_law_graph(p: int, edge_count: int, power: float, seed: int) -> Graph:
    """Random simple graph with a power-law-ish degree sequence.

    Node degrees are drawn i.i.d. from ``P(d) proportional to d**-power``
    on ``1 .. p-1``, rescaled so they sum to ``2 * edge_count``, and the
    sequence is realized by configuration-model stub matching.  Self
    loops and duplicate edges are repaired by random degree-preserving
    edge swaps; if a draw cannot be repaired the whole attempt restarts,
    up to ``MAX_ATTEMPTS`` times.

    Returns a graph with exactly ``edge_count`` edges.
    """
    if p < 2:
        raise DomainError(f"need at least two nodes, got p={p}")
    if not 1 <= edge_count <= p * (p - 1) // 2:
        raise DomainError(f"edge_count={edge_count} out of range for p={p}")
    if power <= 1.0:
        raise DomainError(f"power must exceed 1, got {power}")
    rng = rng_stream(seed)
    for _ in range(MAX_ATTEMPTS):
        deg = _sample_degrees(p, edge_count, power, rng)
        if deg.sum() != 2 * edge_count:
            continue
        edges = _match_stubs(deg, p, rng)
        if edges is not None and len(edges) == edge_count:
            return Graph(p, frozenset(edges))
    raise InfeasibleDegreeSequence(
        f"no simple graph with {edge_count} edges realized in {MAX_ATTEMPTS} attempts"
    )


def hub_knockout(g: Graph, hub_pool: int, knockout: int, seed: int) -> Graph:
    """Rewire a graph by disconnecting some of its best-connected nodes.

    ``knockout`` nodes are chosen uniformly without replacement from the
    ``hub_pool`` highest-degree nodes (ties broken by node index).  All
    edges incident to chosen nodes are removed, then edges drawn
    uniformly from the absent pairs are added until the original edge
    count is restored.  New edges may touch any node, including the
    knocked-out ones.
    """
    if not 0 <= knockout <= hub_pool <= g.p:
        raise DomainError(
            f"need 0 <= knockout <= hub_pool <= p, got {knockout}, {hub_pool}, {g.p}"
        )
    rng = rng_stream(seed)
    deg = g.degrees()
    ranking = sorted(range(g.p), key=lambda i: (-deg[i], i))
    pool = ranking[:hub_pool]
    knocked = set(int(i) for i in rng.choice(pool, size=knockout, replace=False))
    kept = {e for e in g.edges if e[0] not in knocked and e[1] not in knocked}
    need = len(g.edges) - len(kept)
    absent = [
        (a, b)
        for a in range(g.p)
        for b in range(a + 1, g.p)
        if (a, b) not in kept
    ]
    if need > len(absent):
        raise InfeasibleDegreeSequence(
            f"cannot add {need} edges, only {len(absent)} pairs are absent"
        )
    if need > 0:
        picks = rng.choice(len(absent), size=need, replace=False)
        kept.update(absent[i] for i in picks)
    return Graph(g.p, frozenset(kept))


def build_pair(
    g1: Graph, g2: Graph, magnitude: float, min_eig: float, seed: int
) -> tuple[PrecisionModel, PrecisionModel]:
    """Precision matrices for a graph pair, sharing values on shared edges.

    Each edge of ``g1`` gets a value of ``+magnitude`` or ``-magnitude``
    with equal probability.  Edges of ``g2`` reuse the ``g1`` value when
    the edge is shared and draw a fresh sign otherwise.  Each diagonal
    entry is set to the absolute row sum plus a per-matrix constant
    ``u``; since adding ``u`` to the diagonal shifts every eigenvalue by
    exactly ``u``, the constant that puts the smallest eigenvalue at
    ``min_eig`` is solved for directly.
    """
    if g1.p != g2.p:
        raise DomainError(f"graphs disagree on node count: {g1.p} vs {g2.p}")
    if magnitude <= 0 or min_eig <= 0:
        raise DomainError("magnitude and min_eig must be positive")
    rng = rng_stream(seed)
    p = g1.p

    def signed(edges):
        out = {}
        for a, b in sorted(edges):
            out[(a, b)] = magnitude * (1.0 if rng.integers(2) else -1.0)
        return out

    values1 = signed(g1.edges)
    values2 = dict(signed(g2.edges - g1.edges))
    for edge in g2.edges & g1.edges:
        values2[edge] = values1[edge]

    def assemble(graph, values):
        omega = np.zeros((p, p))
        for (a, b), v in values.items():
            omega[a, b] = v
            omega[b, a] = v
        omega[np.diag_indices(p)] = np.abs(omega).sum(axis=1)
        lo, _ = extreme_eigenvalues(omega)
        omega[np.diag_indices(p)] += min_eig - lo
        return PrecisionModel(graph=graph, omega=omega, sigma=invert_spd(omega))

    return assemble(g1, values1), assemble(g2, values2)


def write_edge_list(g: Graph) -> str:
    """Serialize a graph as a ``p=<count>`` header plus one ``j,k`` line per edge."""
    lines = [f"p={g.p}"]
    lines.extend(f"{a},{b}" for a, b in sorted(g.edges))
    return "\n".join(lines) + "\n"


def read_edge_list(text: str) -> Graph:
    """Parse the :func:`write_edge_list` format back into a graph."""
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or not lines[0].startswith("p="):
        raise ParseError("expected a 'p=<count>' header on the first line", row=1, column=1)
    try:
        p = int(lines[0][2:])
    except ValueError:
        raise ParseError(f"bad node count {lines[0][2:]!r}", row=1, column=1) from None
    edges = set()
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 'j,k', got {ln!r}", row=i, column=1)
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer endpoint in {ln!r}", row=i, column=1) from None
        if a > b:
            a, b = b, a
        if a == b or not 0 <= a < b < p:
            raise ParseError(f"invalid edge {ln!r} for p={p}", row=i, column=1)
        if (a, b) in edges:
            raise ParseError(f"duplicate edge {ln!r}", row=i, column=1)
        edges.add((a, b))
    return Graph(p, frozenset(edges))
