"""Heuristic tree decompositions, nice normal form, validation and PACE I/O."""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass
from itertools import combinations

from .graphs import Graph

LEAF, INTRODUCE, REMOVE, JOIN = "leaf", "int", "rem", "join"
HEURISTICS = ("min-fill", "min-degree")


class DecompositionError(ValueError):
    pass


@dataclass(frozen=True)
class TreeDecomposition:
    bags: tuple  # node id -> frozenset
    children: tuple  # node id -> tuple of child ids
    root: int
    types: tuple | None = None  # node id -> LEAF/INTRODUCE/REMOVE/JOIN once nice

    @property
    def width(self) -> int:
        return max(len(b) for b in self.bags) - 1

    @property
    def nice(self) -> bool:
        return self.types is not None

    def __len__(self) -> int:
        return len(self.bags)

    @property
    def vertices(self) -> frozenset:
        return frozenset().union(*self.bags)

    def parents(self) -> list:
        par = [None] * len(self.bags)
        for t, cs in enumerate(self.children):
            for c in cs:
                par[c] = t
        return par

    def postorder(self) -> list[int]:
        order = []
        stack = [(self.root, False)]
        while stack:
            t, done = stack.pop()
            if done:
                order.append(t)
                continue
            stack.append((t, True))
            for c in reversed(self.children[t]):
                stack.append((c, False))
        return order

    def changed_var(self, t: int) -> int | None:
        """Variable introduced or removed at a nice ``int``/``rem`` node."""
        kind = self.types[t]
        if kind == INTRODUCE:
            (v,) = self.bags[t] - self.bags[self.children[t][0]]
            return v
        if kind == REMOVE:
            (v,) = self.bags[self.children[t][0]] - self.bags[t]
            return v
        return None


def heuristic_order(graph: Graph, heuristic: str = "min-fill", seed: int = 0) -> list[int]:
    """Greedy elimination ordering; ties go to a seeded random priority."""
    if heuristic not in HEURISTICS:
        raise ValueError(f"unknown heuristic {heuristic!r}")
    rng = random.Random(seed)
    verts = sorted(graph.vertices)
    prio = {v: rng.random() for v in verts}
    adj = {v: set(graph.adj[v]) for v in verts}

    if heuristic == "min-degree":
        def score(v):
            return len(adj[v])
    else:
        def score(v):
            nb = adj[v]
            return sum(1 for x, y in combinations(nb, 2) if y not in adj[x])

    current = {v: score(v) for v in verts}
    heap = [(s, prio[v], v) for v, s in current.items()]
    heapq.heapify(heap)
    order = []
    while heap:
        s, _, v = heapq.heappop(heap)
        if v not in adj or current[v] != s:
            continue
        order.append(v)
        nb = adj.pop(v)
        del current[v]
        for u in nb:
            adj[u].discard(v)
        for x, y in combinations(nb, 2):
            adj[x].add(y)
            adj[y].add(x)
        affected = set(nb)
        if heuristic == "min-fill":
            for u in nb:
                affected |= adj[u]
        for u in affected:
            new = score(u)
            if new != current[u]:
                current[u] = new
                heapq.heappush(heap, (new, prio[u], u))
    return order


def td_from_order(graph: Graph, order: list[int]) -> TreeDecomposition:
    """Tree decomposition induced by eliminating vertices in ``order``."""
    if sorted(order) != sorted(graph.vertices):
        raise ValueError("ordering is not a permutation of the vertices")
    if not order:
        return TreeDecomposition((frozenset(),), ((),), 0)
    pos = {v: i for i, v in enumerate(order)}
    adj = {v: set(graph.adj[v]) for v in graph.vertices}
    bags = []
    parent: list[int | None] = []
    for v in order:
        nb = adj.pop(v)
        bags.append(frozenset(nb | {v}))
        for u in nb:
            adj[u].discard(v)
        for x, y in combinations(nb, 2):
            adj[x].add(y)
            adj[y].add(x)
        parent.append(min(pos[u] for u in nb) if nb else None)
    # hang separate components into one chain ending at the last node
    roots = [i for i, p in enumerate(parent) if p is None]
    for a, b in zip(roots, roots[1:]):
        parent[a] = b
    kids: list[list[int]] = [[] for _ in order]
    for i, p in enumerate(parent):
        if p is not None:
            kids[p].append(i)
    return TreeDecomposition(tuple(bags), tuple(tuple(k) for k in kids), roots[-1])


def _subtree_min(td: TreeDecomposition) -> list[int]:
    low = list(range(len(td.bags)))
    for t in td.postorder():
        for c in td.children[t]:
            low[t] = min(low[t], low[c])
    return low


def make_nice(td: TreeDecomposition) -> TreeDecomposition:
    """Normalize to a nice decomposition of the same width.

    Leaves and root get empty bags, joins get two children with equal bags
    and node ids become post-order ranks.
    """
    if not _is_tree(td):
        raise DecompositionError("input is not a rooted tree")
    low = _subtree_min(td)
    bags: list[frozenset] = []
    kids: list[tuple] = []

    def new(bag, children):
        bags.append(frozenset(bag))
        kids.append(tuple(children))
        return len(bags) - 1

    top: dict[int, int] = {}
    for t in td.postorder():
        bag_t = td.bags[t]
        branches = []
        for c in sorted(td.children[t], key=lambda c: low[c]):
            cur, cur_bag = top.pop(c), set(td.bags[c])
            for v in sorted(cur_bag - bag_t):
                cur_bag.discard(v)
                cur = new(cur_bag, [cur])
            for v in sorted(bag_t - td.bags[c]):
                cur_bag.add(v)
                cur = new(cur_bag, [cur])
            branches.append(cur)
        if not branches:
            cur, cur_bag = new((), []), set()
            for v in sorted(bag_t):
                cur_bag.add(v)
                cur = new(cur_bag, [cur])
            branches.append(cur)
        cur = branches[0]
        for other in branches[1:]:
            cur = new(bag_t, [cur, other])
        top[t] = cur
    cur = top[td.root]
    cur_bag = set(td.bags[td.root])
    for v in sorted(cur_bag):
        cur_bag.discard(v)
        cur = new(cur_bag, [cur])

    raw = TreeDecomposition(tuple(bags), tuple(kids), cur)
    order = raw.postorder()
    rank = {old: i for i, old in enumerate(order)}
    nb = tuple(raw.bags[old] for old in order)
    nk = tuple(tuple(rank[c] for c in raw.children[old]) for old in order)
    types = []
    for i in range(len(nb)):
        cs = nk[i]
        if not cs:
            types.append(LEAF)
        elif len(cs) == 2:
            types.append(JOIN)
        elif len(nb[i]) > len(nb[cs[0]]):
            types.append(INTRODUCE)
        else:
            types.append(REMOVE)
    nice = TreeDecomposition(nb, nk, rank[cur], tuple(types))
    assert nice.width <= max(td.width, -1), "make_nice increased the width"
    return nice


def decompose(graph: Graph, heuristic: str = "min-fill", seed: int = 0) -> TreeDecomposition:
    return make_nice(td_from_order(graph, heuristic_order(graph, heuristic, seed)))


def _is_tree(td: TreeDecomposition) -> bool:
    seen = set()
    stack = [td.root]
    while stack:
        t = stack.pop()
        if t in seen:
            return False
        seen.add(t)
        stack.extend(td.children[t])
    return len(seen) == len(td.bags)


def validate_td(td: TreeDecomposition, graph: Graph, nice: bool | None = None) -> list[str]:
    """Return the list of violated conditions; empty means valid."""
    problems = []
    if not _is_tree(td):
        return ["structure: children do not form a tree rooted at the root"]
    covered = set().union(*td.bags)
    for v in sorted(graph.vertices - covered):
        problems.append(f"uncovered vertex {v}")
    for v in sorted(covered - graph.vertices):
        problems.append(f"unknown vertex {v}")
    for u, v in sorted(graph.edges()):
        if not any(u in b and v in b for b in td.bags):
            problems.append(f"uncovered edge {u}-{v}")
    par = td.parents()
    tops: dict[int, int] = {}
    for t, bag in enumerate(td.bags):
        p = par[t]
        for v in bag:
            if p is None or v not in td.bags[p]:
                tops[v] = tops.get(v, 0) + 1
    for v in sorted(tops):
        if tops[v] > 1:
            problems.append(f"connectedness violated for vertex {v}")
    if nice is None:
        nice = td.nice
    if nice:
        problems.extend(_nice_violations(td))
    return problems


def _nice_violations(td: TreeDecomposition) -> list[str]:
    out = []
    if td.types is None:
        return ["nice form claimed but node types missing"]
    if td.bags[td.root]:
        out.append("root bag not empty")
    for t, kind in enumerate(td.types):
        bag, cs = td.bags[t], td.children[t]
        if kind == LEAF:
            if cs or bag:
                out.append(f"node {t}: bad leaf")
        elif kind == JOIN:
            if len(cs) != 2 or td.bags[cs[0]] != bag or td.bags[cs[1]] != bag:
                out.append(f"node {t}: bad join")
        elif kind in (INTRODUCE, REMOVE):
            if len(cs) != 1:
                out.append(f"node {t}: {kind} needs one child")
                continue
            child = td.bags[cs[0]]
            small, big = (child, bag) if kind == INTRODUCE else (bag, child)
            if not (small < big and len(big) == len(small) + 1):
                out.append(f"node {t}: bad {kind}")
        else:
            out.append(f"node {t}: unknown type {kind!r}")
    return out


def read_td(text: str) -> TreeDecomposition:
    """Parse a PACE ``.td`` file.

    The root is the bag named by a ``c root N`` comment, else the bag with
    the highest id.  Child lists follow ascending bag id.
    """
    nbags = None
    bags: dict[int, frozenset] = {}
    edges = []
    root = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        parts = raw.split()
        if not parts:
            continue
        try:
            if parts[0] == "c":
                if len(parts) >= 3 and parts[1] == "root":
                    root = int(parts[2])
            elif parts[0] == "s":
                if len(parts) != 5 or parts[1] != "td":
                    raise DecompositionError(f"line {lineno}: malformed solution line")
                nbags = int(parts[2])
            elif parts[0] == "b":
                vals = [int(p) for p in parts[1:]]
                if vals[1:] and vals[-1] == 0:
                    vals = vals[:-1]
                bags[vals[0]] = frozenset(vals[1:])
            else:
                i, j = int(parts[0]), int(parts[1])
                edges.append((i, j))
        except (ValueError, IndexError):
            raise DecompositionError(f"line {lineno}: cannot parse {raw!r}") from None
    if nbags is None:
        raise DecompositionError("missing 's td' line")
    if sorted(bags) != list(range(1, nbags + 1)):
        raise DecompositionError("bag ids must be 1..N")
    if len(edges) != nbags - 1:
        raise DecompositionError("decomposition is not a tree")
    root = nbags if root is None else root
    adj: dict[int, list[int]] = {i: [] for i in bags}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    kids: dict[int, list[int]] = {i: [] for i in bags}
    seen = {root}
    stack = [root]
    while stack:
        t = stack.pop()
        for u in sorted(adj[t]):
            if u not in seen:
                seen.add(u)
                kids[t].append(u)
                stack.append(u)
    if len(seen) != nbags:
        raise DecompositionError("decomposition is not connected")
    return TreeDecomposition(
        tuple(bags[i] for i in range(1, nbags + 1)),
        tuple(tuple(c - 1 for c in kids[i]) for i in range(1, nbags + 1)),
        root - 1,
    )


def write_td(td: TreeDecomposition, num_vertices: int) -> str:
    lines = [f"s td {len(td.bags)} {td.width + 1} {num_vertices}", f"c root {td.root + 1}"]
    for t, bag in enumerate(td.bags):
        lines.append(" ".join(["b", str(t + 1), *map(str, sorted(bag))]))
    for t, cs in enumerate(td.children):
        for c in cs:
            lines.append(f"{t + 1} {c + 1}")
    return "\n".join(lines) + "\n"
