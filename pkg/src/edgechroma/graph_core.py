"""Trees, line graphs, subtree boundaries and the splitting predicate.

Vertices are stored by dense integer index (order of first appearance in the
input); edges get dense integer ids in input order.  All downstream code
indexes per-edge data by these ids.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

Adjacency = tuple[tuple[int, ...], ...]


class TreeError(ValueError):
    """Invalid tree input; ``record`` is the offending input record, if any."""

    def __init__(self, message: str, record: str | None = None, lineno: int | None = None):
        self.record = record
        self.lineno = lineno
        where = ""
        if lineno is not None:
            where = f" (record {lineno}: {record!r})"
        elif record is not None:
            where = f" (record {record!r})"
        super().__init__(message + where)


@dataclass(frozen=True)
class Tree:
    names: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    synthetic: frozenset[int] = frozenset()
    _incident: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inc: list[list[int]] = [[] for _ in self.names]
        for eid, (u, v) in enumerate(self.edges):
            inc[u].append(eid)
            inc[v].append(eid)
        object.__setattr__(self, "_incident", tuple(tuple(x) for x in inc))

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def degree(self) -> tuple[int, ...]:
        return tuple(len(x) for x in self._incident)

    @property
    def max_degree(self) -> int:
        return max(self.degree, default=0)

    def incident(self, v: int) -> tuple[int, ...]:
        return self._incident[v]

    def other_end(self, e: int, v: int) -> int:
        a, b = self.edges[e]
        return b if v == a else a

    def edge_neighbours(self, e: int) -> tuple[int, ...]:
        """Edges sharing an endpoint with ``e`` (the set N(e))."""
        a, b = self.edges[e]
        return tuple(sorted((set(self._incident[a]) | set(self._incident[b])) - {e}))

    def vertex(self, name: str) -> int:
        return self.names.index(name)

    def edge_between(self, a: str | int, b: str | int) -> int:
        ia = a if isinstance(a, int) else self.vertex(a)
        ib = b if isinstance(b, int) else self.vertex(b)
        for e in self._incident[ia]:
            if self.other_end(e, ia) == ib:
                return e
        raise KeyError((a, b))

    def is_regular(self, d: int) -> bool:
        return all(x in (1, d) for x in self.degree)

    def whole(self) -> "SubtreeHandle":
        return SubtreeHandle(self, frozenset(range(self.m)))

    def subtree(self, edges: Iterable[int]) -> "SubtreeHandle":
        return SubtreeHandle(self, frozenset(edges))

    def to_json(self) -> dict:
        return {
            "edges": [[self.names[u], self.names[v]] for u, v in self.edges],
            "synthetic": sorted(self.synthetic),
        }


def _build_tree(records: Sequence[tuple[str, str, str | None, int | None]]) -> Tree:
    names: list[str] = []
    index: dict[str, int] = {}
    edges: list[tuple[int, int]] = []
    seen: set[frozenset[int]] = set()
    parent: list[int] = []

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b, raw, lineno in records:
        if a == b:
            raise TreeError("self-loop", raw, lineno)
        ids = []
        for tok in (a, b):
            if tok not in index:
                index[tok] = len(names)
                names.append(tok)
                parent.append(index[tok])
            ids.append(index[tok])
        u, v = ids
        key = frozenset((u, v))
        if key in seen:
            raise TreeError("duplicate edge", raw, lineno)
        ru, rv = find(u), find(v)
        if ru == rv:
            raise TreeError("cycle detected", raw, lineno)
        parent[ru] = rv
        seen.add(key)
        edges.append((u, v))
    if not edges:
        raise TreeError("empty edge list")
    root = find(0)
    for a, b, raw, lineno in records:
        if find(index[a]) != root:
            raise TreeError("disconnected", raw, lineno)
    return Tree(tuple(names), tuple(edges))


def parse_tree(text: str) -> Tree:
    """Parse an edge-list document (or its JSON form) into a validated tree.

    Text form: one edge per line as two whitespace-separated vertex tokens,
    ``#`` starts a comment.  JSON form: ``{"edges": [["a", "b"], ...]}``.
    """
    stripped = text.lstrip()
    records: list[tuple[str, str, str | None, int | None]] = []
    if stripped.startswith("{"):
        doc = json.loads(text)
        for i, pair in enumerate(doc.get("edges", []), start=1):
            if len(pair) != 2:
                raise TreeError("edge record must have two vertices", json.dumps(pair), i)
            records.append((str(pair[0]), str(pair[1]), json.dumps(pair), i))
        return _build_tree(records)
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        toks = body.split()
        if len(toks) != 2:
            raise TreeError("edge record must have two vertex tokens", line, lineno)
        records.append((toks[0], toks[1], line, lineno))
    return _build_tree(records)


def tree_from_edges(pairs: Iterable[tuple[object, object]]) -> Tree:
    return _build_tree([(str(a), str(b), f"{a} {b}", i) for i, (a, b) in enumerate(pairs, start=1)])


def adjacency_from_pairs(n: int, pairs: Iterable[tuple[int, int]]) -> Adjacency:
    nb: list[set[int]] = [set() for _ in range(n)]
    for a, b in pairs:
        if a == b:
            raise ValueError("self-loop in site graph")
        nb[a].add(b)
        nb[b].add(a)
    return tuple(tuple(sorted(x)) for x in nb)


def complete_adjacency(n: int) -> Adjacency:
    return tuple(tuple(j for j in range(n) if j != i) for i in range(n))


def biclique_adjacency(d: int) -> Adjacency:
    """Two d-cliques sharing site 0 (the cut site z).

    Sites 1..d-1 form the X side and sites d..2d-2 the Y side.
    """
    x_side = [0] + list(range(1, d))
    y_side = [0] + list(range(d, 2 * d - 1))
    pairs = [(a, b) for side in (x_side, y_side) for i, a in enumerate(side) for b in side[i + 1:]]
    return adjacency_from_pairs(2 * d - 1, pairs)


def line_graph(tree: Tree) -> Adjacency:
    """Site graph on edge ids; two edges are adjacent iff they share an endpoint."""
    return tuple(tree.edge_neighbours(e) for e in range(tree.m))


def induced_adjacency(adj: Adjacency, sites: Sequence[int]) -> Adjacency:
    """Restrict ``adj`` to ``sites``; result is indexed by position in ``sites``."""
    pos = {s: i for i, s in enumerate(sites)}
    return tuple(tuple(sorted(pos[u] for u in adj[s] if u in pos)) for s in sites)


def regularise(tree: Tree, d: int) -> Tree:
    """Pad every internal vertex with fresh leaves until it has degree ``d``.

    Original edges keep their ids; added edges are appended and flagged
    synthetic.  Fresh leaf names are ``<vertex>~<j>``, made unique.
    """
    if d < 1:
        raise ValueError("d must be a positive integer")
    if d < tree.max_degree:
        raise ValueError(f"d={d} is below the maximum degree {tree.max_degree}")
    names = list(tree.names)
    taken = set(names)
    edges = list(tree.edges)
    synthetic = set(tree.synthetic)
    deg = tree.degree
    for u in range(tree.n):
        if deg[u] < 2:
            continue
        for j in range(d - deg[u]):
            label = f"{tree.names[u]}~{j}"
            while label in taken:
                label += "'"
            taken.add(label)
            names.append(label)
            synthetic.add(len(edges))
            edges.append((u, len(names) - 1))
    if len(edges) == tree.m:
        return tree
    return Tree(tuple(names), tuple(edges), frozenset(synthetic))


@dataclass(frozen=True)
class SubtreeHandle:
    tree: Tree
    edges: frozenset[int]

    def __post_init__(self):
        if not self.edges:
            raise ValueError("subtree must contain at least one edge")
        if any(e < 0 or e >= self.tree.m for e in self.edges):
            raise ValueError("edge id out of range")
        start = min(self.edges)
        seen = {start}
        queue = deque([start])
        while queue:
            e = queue.popleft()
            for f in self.tree.edge_neighbours(e):
                if f in self.edges and f not in seen:
                    seen.add(f)
                    queue.append(f)
        if len(seen) != len(self.edges):
            raise ValueError("edge subset is not connected")

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def sorted_edges(self) -> tuple[int, ...]:
        return tuple(sorted(self.edges))

    def vertices(self) -> set[int]:
        out: set[int] = set()
        for e in self.edges:
            out.update(self.tree.edges[e])
        return out

    def local_degree(self, v: int) -> int:
        return sum(1 for e in self.tree.incident(v) if e in self.edges)

    def leaves(self) -> set[int]:
        return {v for v in self.vertices() if self.local_degree(v) == 1}

    def internal(self) -> set[int]:
        return {v for v in self.vertices() if self.local_degree(v) >= 2}

    def hanging(self, v: int) -> list[frozenset[int]]:
        """Edge sets of the subtrees hanging from ``v``, one per incident edge.

        Ordered by the id of the edge incident to ``v``.
        """
        out = []
        for e0 in sorted(e for e in self.tree.incident(v) if e in self.edges):
            comp = {e0}
            frontier = deque([self.tree.other_end(e0, v)])
            visited = {v}
            while frontier:
                x = frontier.popleft()
                if x in visited:
                    continue
                visited.add(x)
                for f in self.tree.incident(x):
                    if f in self.edges and f not in comp:
                        comp.add(f)
                        frontier.append(self.tree.other_end(f, x))
            out.append(frozenset(comp))
        return out

    def path_vertices(self, e: int, f: int) -> list[int]:
        """Vertices of the shortest vertex path containing both edges ``e`` and ``f``."""
        if e == f:
            return list(self.tree.edges[e])
        a0, a1 = self.tree.edges[e]
        # BFS from both ends of e; the end nearer to f is where the path leaves e
        prev: dict[int, int | None] = {a0: None, a1: None}
        queue = deque([a0, a1])
        fset = set(self.tree.edges[f])
        while queue:
            x = queue.popleft()
            for g in self.tree.incident(x):
                if g in self.edges and g != e:
                    y = self.tree.other_end(g, x)
                    if y not in prev:
                        prev[y] = x
                        queue.append(y)
        far = max(fset, key=lambda y: _depth(prev, y))
        chain = [far]
        while prev[chain[-1]] is not None:
            chain.append(prev[chain[-1]])
        start = chain[-1]
        chain.append(a1 if start == a0 else a0)
        chain.reverse()
        return chain

    def path_edges(self, e: int, f: int) -> list[int]:
        """Edges of the path joining edges ``e`` and ``f``, both included."""
        if e == f:
            return [e]
        vs = self.path_vertices(e, f)
        return [self.tree.edge_between(a, b) for a, b in zip(vs, vs[1:])]


def _depth(prev: dict[int, int | None], y: int) -> int:
    k = 0
    while prev[y] is not None:
        y = prev[y]
        k += 1
    return k


@dataclass(frozen=True)
class Boundary:
    exterior: frozenset[int]
    interior: frozenset[int]
    fringe: bool

    @property
    def t(self) -> int:
        return len(self.interior)


def boundary(tree: Tree, sub: SubtreeHandle) -> Boundary:
    """Exterior boundary, interior boundary and fringe flag of ``sub`` in ``tree``."""
    exterior = set()
    for e in sub.edges:
        for f in tree.edge_neighbours(e):
            if f not in sub.edges:
                exterior.add(f)
    interior = {e for e in sub.edges if any(f in exterior for f in tree.edge_neighbours(e))}
    leaves = sub.leaves()
    fringe = all(any(x in leaves for x in tree.edges[e]) for e in interior)
    return Boundary(frozenset(exterior), frozenset(interior), fringe)


def is_splitting(tree: Tree, sub: SubtreeHandle) -> bool:
    """Single edge, or fringe interior boundary of size <= 2 whose two edges are non-incident."""
    if sub.m == 1:
        return True
    b = boundary(tree, sub)
    if not b.fringe or b.t > 2:
        return False
    if b.t == 2:
        e, f = sorted(b.interior)
        if set(tree.edges[e]) & set(tree.edges[f]):
            return False
    return True


def find_balanced_root(sub: SubtreeHandle) -> int:
    """Smallest-index vertex whose hanging subtrees all have at most ceil(m/2) edges."""
    m = sub.m
    if m <= 1:
        raise ValueError("balanced root needs a subtree with more than one edge")
    limit = math.ceil(m / 2)
    for v in sorted(sub.vertices()):
        if sub.local_degree(v) < 2:
            continue
        if all(len(h) <= limit for h in sub.hanging(v)):
            return v
    raise AssertionError("no balanced vertex found")  # impossible for a tree
