"""Primal and nested primal graphs over formula variables."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable

from .formula import CnfFormula


@dataclass(frozen=True)
class Graph:
    vertices: frozenset
    adj: dict  # vertex -> frozenset of neighbours

    @classmethod
    def from_edges(cls, vertices: Iterable[int], edges: Iterable[tuple[int, int]]) -> "Graph":
        nbrs: dict[int, set] = {v: set() for v in vertices}
        for u, v in edges:
            if u == v:
                continue
            nbrs.setdefault(u, set()).add(v)
            nbrs.setdefault(v, set()).add(u)
        return cls(frozenset(nbrs), {v: frozenset(n) for v, n in nbrs.items()})

    def edges(self) -> set[tuple[int, int]]:
        return {(u, v) for u in self.adj for v in self.adj[u] if u < v}

    def num_edges(self) -> int:
        return sum(len(n) for n in self.adj.values()) // 2

    def neighbors(self, v: int) -> frozenset:
        return self.adj.get(v, frozenset())

    def degree(self, v: int) -> int:
        return len(self.adj.get(v, ()))

    def without(self, removed: Iterable[int]) -> "Graph":
        """The induced subgraph ``G - removed``."""
        gone = frozenset(removed)
        keep = self.vertices - gone
        return Graph(keep, {v: self.adj[v] - gone for v in keep})

    def to_dot(self, name: str = "G") -> str:
        lines = [f"graph {name} {{"]
        lines += [f"  {v};" for v in sorted(self.vertices)]
        lines += [f"  {u} -- {v};" for u, v in sorted(self.edges())]
        lines.append("}")
        return "\n".join(lines) + "\n"


def primal_graph(formula: CnfFormula) -> Graph:
    edges = set()
    for c in formula.clauses:
        vs = sorted({abs(l) for l in c})
        edges.update(combinations(vs, 2))
    return Graph.from_edges(formula.vars, edges)


def connected_components(graph: Graph) -> list[frozenset]:
    """Components ordered by their minimum vertex."""
    seen: set[int] = set()
    comps = []
    for start in sorted(graph.vertices):
        if start in seen:
            continue
        seen.add(start)
        comp = [start]
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for w in graph.adj[u]:
                if w not in seen:
                    seen.add(w)
                    comp.append(w)
                    queue.append(w)
        comps.append(frozenset(comp))
    return comps


def nesting_components(formula: CnfFormula, abstraction: Iterable[int], primal: Graph | None = None):
    """Components of ``primal(F) - A`` paired with their neighbourhood in ``A``."""
    a = frozenset(abstraction)
    g = primal if primal is not None else primal_graph(formula)
    out = []
    for comp in connected_components(g.without(a)):
        nb = set()
        for u in comp:
            nb.update(g.adj[u] & a)
        out.append((comp, frozenset(nb)))
    return out


def nested_primal_graph(formula: CnfFormula, abstraction: Iterable[int]) -> Graph:
    """Graph on ``A`` with an edge wherever a path avoiding ``A`` joins two vertices.

    Built from direct edges inside ``A`` plus a clique over the
    ``A``-neighbourhood of every component of ``primal(F) - A``.
    """
    a = frozenset(abstraction)
    if not a <= formula.vars:
        raise ValueError(f"abstraction variables not in formula: {sorted(a - formula.vars)}")
    g = primal_graph(formula)
    edges = {(u, v) for u in a for v in g.adj[u] & a}
    for _, nb in nesting_components(formula, a, g):
        edges.update(combinations(sorted(nb), 2))
    return Graph.from_edges(a, edges)


def nested_primal_graph_by_paths(formula: CnfFormula, abstraction: Iterable[int]) -> Graph:
    """Reference construction: breadth-first search for nesting paths per pair."""
    a = frozenset(abstraction)
    g = primal_graph(formula)
    edges = set()
    for u in a:
        seen = {u}
        queue = deque([u])
        while queue:
            x = queue.popleft()
            for y in g.adj[x]:
                if y in seen:
                    continue
                seen.add(y)
                if y in a:
                    edges.add((min(u, y), max(u, y)))
                else:
                    queue.append(y)
    return Graph.from_edges(a, edges)
