"""Primal graphs, elimination orders, pseudo-trees and contexts."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from aois.errors import ParseError, StructureError
from aois.model import BayesianNetwork, Evidence


@dataclass(frozen=True)
class PrimalGraph:
    n: int
    adjacency: Mapping[int, frozenset[int]]

    @property
    def vertices(self) -> list[int]:
        return sorted(self.adjacency)

    def edges(self) -> set[tuple[int, int]]:
        return {(u, v) for u, nb in self.adjacency.items() for v in nb if u < v}

    def neighbors(self, v: int) -> frozenset[int]:
        return self.adjacency[v]

    @classmethod
    def from_edges(cls, n: int, vertices: Iterable[int], edges: Iterable[tuple[int, int]]):
        adj: dict[int, set[int]] = {v: set() for v in vertices}
        for u, v in edges:
            if u == v:
                raise StructureError(f"self-loop on {u}")
            adj[u].add(v)
            adj[v].add(u)
        return cls(n, {v: frozenset(nb) for v, nb in adj.items()})


def moral_graph(network: BayesianNetwork, evidence: Evidence) -> PrimalGraph:
    """Moralized graph restricted to non-evidence variables.

    Each CPT contributes a clique over the part of its scope that is not observed.
    """
    verts = [v for v in range(network.n) if v not in evidence]
    edges = []
    for cpt in network.cpts:
        free = [v for v in cpt.scope if v not in evidence]
        edges.extend(combinations(free, 2))
    return PrimalGraph.from_edges(network.n, verts, edges)


def _fill_in(adj: dict[int, set[int]], v: int) -> int:
    nb = list(adj[v])
    return sum(1 for a, b in combinations(nb, 2) if b not in adj[a])


def min_fill_order(
    graph: PrimalGraph,
    seed: int = 0,
    precedence: Mapping[int, Iterable[int]] | None = None,
) -> list[int]:
    """Greedy min-fill elimination order.

    Ties go to the lowest id when ``seed == 0`` and are broken uniformly at
    random otherwise. ``precedence[v]`` lists vertices that must be
    eliminated before ``v`` may be.
    """
    adj = {v: set(nb) for v, nb in graph.adjacency.items()}
    waiting = {v: set(precedence.get(v, ())) & adj.keys() for v in adj} if precedence else {}
    rng = random.Random(seed) if seed else None
    order: list[int] = []
    while adj:
        cands = [v for v in adj if not waiting.get(v)]
        if not cands:
            raise StructureError("precedence constraints are cyclic")
        costs = {v: _fill_in(adj, v) for v in cands}
        best = min(costs.values())
        tied = sorted(v for v, c in costs.items() if c == best)
        v = rng.choice(tied) if rng else tied[0]
        nb = adj.pop(v)
        for a, b in combinations(nb, 2):
            adj[a].add(b)
            adj[b].add(a)
        for u in nb:
            adj[u].discard(v)
        for w in waiting.values():
            w.discard(v)
        order.append(v)
    return order


def topological_min_fill_order(
    network: BayesianNetwork, evidence: Evidence, graph: PrimalGraph, seed: int = 0
) -> list[int]:
    """Min-fill restricted to orders that eliminate children before parents.

    The resulting pseudo-tree has every BN parent as a tree ancestor of its child.
    """
    precedence = {
        v: [c for c in network.children(v) if c not in evidence]
        for v in graph.adjacency
    }
    return min_fill_order(graph, seed, precedence)


def induced_width(graph: PrimalGraph, order: Sequence[int]) -> int:
    _check_permutation(graph, order)
    adj = {v: set(nb) for v, nb in graph.adjacency.items()}
    width = 0
    for v in order:
        nb = adj.pop(v)
        width = max(width, len(nb))
        for a, b in combinations(nb, 2):
            adj[a].add(b)
            adj[b].add(a)
        for u in nb:
            adj[u].discard(v)
    return width


def _check_permutation(graph: PrimalGraph, order: Sequence[int]):
    if sorted(order) != graph.vertices:
        raise StructureError("order is not a permutation of the graph's vertices")


@dataclass(frozen=True)
class PseudoTree:
    """Rooted forest over the sampled variables.

    Multiple roots hang off an implicit virtual root.
    """

    parent: Mapping[int, int | None]
    children: Mapping[int, tuple[int, ...]] = field(init=False)
    roots: tuple[int, ...] = field(init=False)
    preorder: tuple[int, ...] = field(init=False)
    depth: Mapping[int, int] = field(init=False)

    def __post_init__(self):
        kids: dict[int, list[int]] = {v: [] for v in self.parent}
        roots = []
        for v, p in self.parent.items():
            if p is None:
                roots.append(v)
            elif p not in kids:
                raise StructureError(f"parent {p} of {v} is not a tree node")
            else:
                kids[p].append(v)
        children = {v: tuple(sorted(k)) for v, k in kids.items()}
        order, depth = [], {}
        stack = [(r, 0) for r in sorted(roots, reverse=True)]
        while stack:
            v, d = stack.pop()
            order.append(v)
            depth[v] = d
            stack.extend((c, d + 1) for c in reversed(children[v]))
        if len(order) != len(self.parent):
            raise StructureError("pseudo-tree parent map contains a cycle")
        object.__setattr__(self, "parent", dict(self.parent))
        object.__setattr__(self, "children", children)
        object.__setattr__(self, "roots", tuple(sorted(roots)))
        object.__setattr__(self, "preorder", tuple(order))
        object.__setattr__(self, "depth", depth)

    @property
    def nodes(self) -> list[int]:
        return sorted(self.parent)

    def ancestors(self, v: int) -> list[int]:
        """Nearest first."""
        out = []
        p = self.parent[v]
        while p is not None:
            out.append(p)
            p = self.parent[p]
        return out

    def is_ancestor(self, a: int, v: int) -> bool:
        return a in self.ancestors(v)

    def subtree(self, v: int) -> list[int]:
        out, stack = [], [v]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(self.children[u])
        return out

    def check_back_arcs(self, graph: PrimalGraph):
        if set(self.parent) != set(graph.adjacency):
            raise StructureError("pseudo-tree and graph cover different variables")
        for u, v in graph.edges():
            if not (self.is_ancestor(u, v) or self.is_ancestor(v, u)):
                raise StructureError(f"edge {u}-{v} is not a back-arc of the pseudo-tree")


def pseudo_tree_from_order(graph: PrimalGraph, order: Sequence[int]) -> PseudoTree:
    """Bucket-tree pseudo-tree: each variable's parent is the earliest-eliminated
    of its induced neighbours that survive it."""
    _check_permutation(graph, order)
    pos = {v: i for i, v in enumerate(order)}
    adj = {v: set(nb) for v, nb in graph.adjacency.items()}
    parent: dict[int, int | None] = {}
    for v in order:
        nb = adj.pop(v)
        parent[v] = min(nb, key=pos.__getitem__) if nb else None
        for a, b in combinations(nb, 2):
            adj[a].add(b)
            adj[b].add(a)
        for u in nb:
            adj[u].discard(v)
    tree = PseudoTree(parent)
    try:
        tree.check_back_arcs(graph)
    except StructureError as exc:  # pragma: no cover - construction guarantees it
        raise StructureError(f"internal error building pseudo-tree: {exc}") from exc
    return tree


def elimination_order_of(tree: PseudoTree) -> list[int]:
    """An elimination order consistent with ``tree`` (reverse preorder)."""
    return list(reversed(tree.preorder))


@dataclass(frozen=True)
class ContextMap:
    context: Mapping[int, tuple[int, ...]]

    def __getitem__(self, v: int) -> tuple[int, ...]:
        return self.context[v]

    def __iter__(self):
        return iter(self.context)

    @property
    def width(self) -> int:
        return max((len(c) - 1 for c in self.context.values()), default=0)


def compute_contexts(tree: PseudoTree, graph: PrimalGraph) -> ContextMap:
    """context(X) = X plus the ancestors adjacent to X or to a tree descendant of X,
    listed nearest ancestor first."""
    # neighbours of each subtree, accumulated bottom-up
    reach: dict[int, set[int]] = {}
    for v in reversed(tree.preorder):
        r = set(graph.neighbors(v))
        for c in tree.children[v]:
            r |= reach[c]
        reach[v] = r
    out = {}
    for v in tree.preorder:
        out[v] = (v, *(a for a in tree.ancestors(v) if a in reach[v]))
    return ContextMap(out)


def parse_pseudo_tree(text: str | bytes) -> PseudoTree:
    """``root R`` lines followed by ``child parent`` lines."""
    if isinstance(text, bytes):
        text = text.decode()
    parent: dict[int, int | None] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        try:
            if parts[0] == "root" and len(parts) == 2:
                child, par = int(parts[1]), None
            elif len(parts) == 2:
                child, par = int(parts[0]), int(parts[1])
            else:
                raise ValueError
        except ValueError:
            raise ParseError(f"pseudo-tree line {lineno}: cannot parse {line!r}") from None
        if child in parent:
            raise ParseError(f"pseudo-tree line {lineno}: variable {child} listed twice")
        parent[child] = par
    if not parent:
        raise ParseError("empty pseudo-tree file")
    try:
        return PseudoTree(parent)
    except StructureError as exc:
        raise ParseError(str(exc)) from exc


def serialize_pseudo_tree(tree: PseudoTree) -> str:
    lines = [f"root {r}" for r in tree.roots]
    lines += [f"{v} {tree.parent[v]}" for v in tree.preorder if tree.parent[v] is not None]
    return "\n".join(lines) + "\n"
