"""Chordal extension of the network graph and clique-wise PSD constraints.

The extension is obtained by symbolic elimination under a minimum-degree
ordering; maximal cliques are read off the elimination tree and adjacent
cliques in the clique tree are optionally merged into slightly larger blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .conic import Constraint, HermitianBlock, embed_hermitian_psd
from .errors import CliqueVertexOutOfRange


@dataclass(frozen=True)
class SparsityGraph:
    n: int
    edges: frozenset  # of (min, max) vertex pairs

    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n)]
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


@dataclass(frozen=True)
class MergeConfig:
    max_embedded_side: int = 24
    max_fill_increase: float = 0.10
    enabled: bool = True


@dataclass(frozen=True)
class CliqueCover:
    cliques: tuple[tuple[int, ...], ...]
    fill_edges: int
    ordering: tuple[int, ...]
    parent: tuple[int, ...] = field(default=())  # clique-tree parent, -1 at roots

    def extension_edges(self) -> set[tuple[int, int]]:
        out = set()
        for k in self.cliques:
            for i, a in enumerate(k):
                for b in k[i + 1:]:
                    out.add((min(a, b), max(a, b)))
        return out

    def to_dot(self, graph: SparsityGraph | None = None) -> str:
        """DOT rendering of the extension; fill edges are dashed."""
        base = graph.edges if graph is not None else frozenset()
        lines = ["graph chordal_extension {"]
        for a, b in sorted(self.extension_edges()):
            style = "" if graph is None or (a, b) in base else " [style=dashed]"
            lines.append(f"  {a} -- {b}{style};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def build_graph(net) -> SparsityGraph:
    """One vertex per bus, one edge per connected bus pair (parallel branches collapse)."""
    edges = set()
    for br in net.branches:
        a, b = br.from_bus, br.to_bus
        if a != b:
            edges.add((min(a, b), max(a, b)))
    return SparsityGraph(net.n_bus, frozenset(edges))


def graph_from_edges(n: int, edges) -> SparsityGraph:
    return SparsityGraph(n, frozenset((min(a, b), max(a, b)) for a, b in edges if a != b))


def minimum_degree_ordering(g: SparsityGraph) -> tuple[list[int], list[set[int]]]:
    """Greedy minimum-degree elimination; ties go to the smallest vertex index.

    Returns the ordering and the adjacency of the filled graph.
    """
    work = g.adjacency()
    filled = [set(s) for s in work]
    alive = set(range(g.n))
    order = []
    while alive:
        v = min(alive, key=lambda u: (len(work[u]), u))
        nbrs = sorted(work[v])
        for i, a in enumerate(nbrs):
            for b in nbrs[i + 1:]:
                if b not in work[a]:
                    work[a].add(b)
                    work[b].add(a)
                    filled[a].add(b)
                    filled[b].add(a)
        for a in nbrs:
            work[a].discard(v)
        work[v] = set()
        alive.remove(v)
        order.append(v)
    return order, filled


def is_perfect_elimination_ordering(adj: list[set[int]], order) -> bool:
    """True iff each vertex's later neighbours form a clique."""
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        later = [u for u in adj[v] if pos[u] > pos[v]]
        if not later:
            continue
        # it suffices to check that the earliest later neighbour sees all others
        p = min(later, key=pos.__getitem__)
        if any(u != p and u not in adj[p] for u in later):
            return False
    return True


def is_chordal(n: int, edges) -> bool:
    """Chordality test via maximum cardinality search."""
    adj = [set() for _ in range(n)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    weight = [0] * n
    numbered = [False] * n
    mcs = []
    for _ in range(n):
        v = max((u for u in range(n) if not numbered[u]), key=lambda u: (weight[u], -u))
        numbered[v] = True
        mcs.append(v)
        for u in adj[v]:
            if not numbered[u]:
                weight[u] += 1
    return is_perfect_elimination_ordering(adj, list(reversed(mcs)))


def _pairs(k: int) -> int:
    return k * (k + 1) // 2


def _children_first(parent: list[int]) -> list[int]:
    """Post-order of the clique forest; ties resolved by index."""
    kids: list[list[int]] = [[] for _ in parent]
    roots = []
    for c, p in enumerate(parent):
        (kids[p] if p >= 0 else roots).append(c)
    out = []
    stack = [(r, False) for r in reversed(roots)]
    while stack:
        c, done = stack.pop()
        if done:
            out.append(c)
            continue
        stack.append((c, True))
        stack.extend((k, False) for k in reversed(kids[c]))
    return out


def _merge_cliques(cliques: list[set[int]], parent: list[int], cfg: MergeConfig):
    """Merge child cliques into parents when the merged block stays small."""
    alive = [True] * len(cliques)
    parent = list(parent)
    for c in _children_first(parent):
        p = parent[c]
        if p < 0 or not alive[c]:
            continue
        a, b = cliques[c], cliques[p]
        merged = a | b
        if 2 * len(merged) > cfg.max_embedded_side:
            continue
        covered = _pairs(len(a)) + _pairs(len(b)) - _pairs(len(a & b))
        if (_pairs(len(merged)) - covered) > cfg.max_fill_increase * covered:
            continue
        cliques[p] = merged
        alive[c] = False
        for k in range(len(cliques)):
            if parent[k] == c:
                parent[k] = p
    keep = [i for i in range(len(cliques)) if alive[i]]
    remap = {old: new for new, old in enumerate(keep)}
    return [cliques[i] for i in keep], [remap.get(parent[i], -1) for i in keep]


def chordal_extension(g: SparsityGraph, merge: MergeConfig | None = MergeConfig()) -> CliqueCover:
    """Chordal extension and its maximal cliques (see module docstring)."""
    order, filled = minimum_degree_ordering(g)
    pos = {v: i for i, v in enumerate(order)}
    later = {v: {u for u in filled[v] if pos[u] > pos[v]} for v in order}
    etree_parent = {v: (min(later[v], key=pos.__getitem__) if later[v] else None) for v in order}

    # C_v = {v} + later(v) is maximal unless a child u has |later(u)| = |later(v)| + 1
    absorbed_by: dict[int, int] = {}
    for u in order:
        p = etree_parent[u]
        if p is not None and len(later[u]) == len(later[p]) + 1 and p not in absorbed_by:
            absorbed_by[p] = u
    reps = [v for v in order if v not in absorbed_by]

    def rep_of(v):
        while v in absorbed_by:
            v = absorbed_by[v]
        return v

    index = {v: i for i, v in enumerate(reps)}
    cliques = [{v} | later[v] for v in reps]
    parent = []
    for v in reps:
        # climb the chain of vertices whose cliques v absorbed, then step out
        q = v
        while etree_parent[q] is not None and absorbed_by.get(etree_parent[q]) == q:
            q = etree_parent[q]
        p = etree_parent[q]
        parent.append(index[rep_of(p)] if p is not None else -1)

    if merge is not None and merge.enabled:
        cliques, parent = _merge_cliques(cliques, parent, merge)

    # drop anything that ended up inside another clique (defensive)
    keep = [i for i, k in enumerate(cliques)
            if not any(j != i and k < cliques[j] for j in range(len(cliques)))]
    remap = {old: new for new, old in enumerate(keep)}
    cliques = [cliques[i] for i in keep]
    parent = [remap.get(parent[i], -1) for i in keep]

    cover = CliqueCover(
        cliques=tuple(tuple(sorted(k)) for k in cliques),
        fill_edges=0,
        ordering=tuple(order),
        parent=tuple(parent),
    )
    fill = len(cover.extension_edges() - set(g.edges))
    return CliqueCover(cover.cliques, fill, cover.ordering, cover.parent)


def decompose_psd(V, cover: CliqueCover, tag: str = "V") -> list[Constraint]:
    """One embedded Hermitian PSD constraint per clique of ``cover``.

    ``V`` is anything with ``side`` and ``entry(i, j) -> (re, im)``; only the
    entries inside cliques are requested, so overlapping cliques share the
    same variables.
    """
    out = []
    for ci, k in enumerate(cover.cliques):
        if any(v < 0 or v >= V.side for v in k):
            raise CliqueVertexOutOfRange(f"clique {ci} has a vertex outside 0..{V.side - 1}")
        block = HermitianBlock.from_entries(len(k), lambda a, b, k=k: V.entry(k[a], k[b]))
        out.append(embed_hermitian_psd(block, tag=f"{tag}_clique[{ci}]"))
    return out
