"""Proper colourings, list assignments, feasibility classes and exact enumeration.

Colours are the integers ``1..k``.  Enumerated state spaces are returned as
``(N, n)`` ``uint8`` arrays, one row per colouring, in lexicographic order.
"""

from __future__ import annotations

import math
import os
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph_core import Adjacency, SubtreeHandle, Tree, boundary

DEFAULT_CAP = 2_000_000


def enumeration_cap(cap: int | None = None) -> int:
    if cap is not None:
        return int(cap)
    env = os.environ.get("EDGECHROMA_CAP")
    return int(env) if env else DEFAULT_CAP


class CapExceeded(RuntimeError):
    def __init__(self, cap: int, estimate: int):
        self.cap = cap
        self.estimate = estimate
        super().__init__(f"state space exceeds cap {cap} (upper-bound estimate {estimate})")


@dataclass(frozen=True)
class Coloring:
    colours: tuple[int, ...]
    k: int

    def __post_init__(self):
        if any(c < 1 or c > self.k for c in self.colours):
            raise ValueError("colour outside 1..k")

    def __len__(self) -> int:
        return len(self.colours)

    def __getitem__(self, i: int) -> int:
        return self.colours[i]

    def to_json(self, sites: Sequence[int] | None = None) -> dict:
        sites = range(len(self.colours)) if sites is None else sites
        return {str(s): c for s, c in zip(sites, self.colours)}


@dataclass(frozen=True)
class ListAssignment:
    lists: tuple[frozenset[int], ...]
    k: int

    def __post_init__(self):
        for L in self.lists:
            if not L:
                raise ValueError("empty list")
            if min(L) < 1 or max(L) > self.k:
                raise ValueError("list colour outside 1..k")

    @classmethod
    def full(cls, n: int, k: int) -> "ListAssignment":
        return cls(tuple(frozenset(range(1, k + 1)) for _ in range(n)), k)

    @classmethod
    def from_lists(cls, lists: Iterable[Iterable[int]], k: int) -> "ListAssignment":
        return cls(tuple(frozenset(L) for L in lists), k)

    def __len__(self) -> int:
        return len(self.lists)

    def __getitem__(self, i: int) -> frozenset[int]:
        return self.lists[i]

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(L) for L in self.lists)

    def to_json(self, sites: Sequence[int] | None = None) -> dict:
        sites = range(len(self.lists)) if sites is None else sites
        return {str(s): sorted(L) for s, L in zip(sites, self.lists)}


@dataclass(frozen=True)
class FeasibilityClass:
    """Outcome of feasibility classification.

    ``kind`` is ``"clique"``, ``"biclique"`` or ``"infeasible"``.  ``order``
    lists constrained sites first (ascending list size, then site id) and free
    sites after; for bi-cliques ``order`` covers the X side then the Y side.
    """

    kind: str
    t: int
    constrained: tuple[int, ...]
    order: tuple[int, ...]
    t_x: int | None = None
    t_y: int | None = None

    @property
    def feasible(self) -> bool:
        return self.kind != "infeasible"


def is_proper(adj: Adjacency, colours: Sequence[int | None]) -> bool:
    if len(colours) != len(adj):
        raise ValueError("colouring does not cover every site")
    if any(c is None for c in colours):
        raise ValueError("site missing a colour")
    return all(colours[u] != colours[v] for u in range(len(adj)) for v in adj[u] if v > u)


def induced_lists(
    tree: Tree, sub: SubtreeHandle, mu: Mapping[int, int] | Coloring | None, k: int
) -> tuple[tuple[int, ...], ListAssignment]:
    """Lists on the edges of ``sub`` (sorted ids) induced by the boundary colouring ``mu``.

    ``mu`` maps edge id to colour and must colour every exterior-boundary edge;
    colours on other edges outside ``sub`` are checked for properness but do
    not constrain anything.
    """
    if isinstance(mu, Coloring):
        mu = dict(enumerate(mu.colours))
    mu = dict(mu or {})
    outside = {e: c for e, c in mu.items() if e not in sub.edges}
    for e, c in outside.items():
        if not 1 <= c <= k:
            raise ValueError(f"colour {c} on edge {e} outside 1..{k}")
        for f in tree.edge_neighbours(e):
            if f in outside and outside[f] == c:
                raise ValueError(f"boundary colouring is improper at edges {e} and {f}")
    b = boundary(tree, sub)
    missing = sorted(e for e in b.exterior if e not in outside)
    if missing:
        raise ValueError(f"exterior boundary edges {missing} are uncoloured")
    sites = sub.sorted_edges
    lists = []
    for e in sites:
        banned = {outside[f] for f in tree.edge_neighbours(e) if f in outside}
        lists.append(frozenset(range(1, k + 1)) - banned)
    if any(not L for L in lists):
        raise ValueError("boundary colouring leaves an edge with no admissible colour")
    return sites, ListAssignment(tuple(lists), k)


def _sorted_order(L: ListAssignment, sites: Iterable[int], full: int) -> tuple[list[int], list[int]]:
    sites = list(sites)
    constrained = sorted((s for s in sites if len(L[s]) < full), key=lambda s: (len(L[s]), s))
    free = sorted(s for s in sites if len(L[s]) >= full)
    return constrained, free


def classify_feasibility(L: ListAssignment, d: int, biclique: bool = False) -> FeasibilityClass:
    """Classify lists on a d-clique (sites 0..d-1) or on a bi-clique.

    The bi-clique layout is the one of :func:`graph_core.biclique_adjacency`:
    site 0 is the cut site z, sites 1..d-1 the X side, d..2d-2 the Y side.
    Lists must be subsets of ``1..d+1``.
    """
    full = d + 1
    if any(max(x) > full for x in L.lists):
        raise ValueError("lists must be subsets of 1..d+1")
    if not biclique:
        if len(L) != d:
            raise ValueError(f"expected {d} sites, got {len(L)}")
        constrained, free = _sorted_order(L, range(d), full)
        t = len(constrained)
        order = tuple(constrained + free)
        ok = all(len(L[s]) >= t + 1 for s in constrained)
        return FeasibilityClass("clique" if ok else "infeasible", t, tuple(constrained), order)

    if len(L) != 2 * d - 1:
        raise ValueError(f"expected {2 * d - 1} sites, got {len(L)}")
    cx, fx = _sorted_order(L, range(1, d), full)
    cy, fy = _sorted_order(L, range(d, 2 * d - 1), full)
    # the definition needs 1 <= t_X, t_Y; a free site may be counted as constrained
    t_x, t_y = max(1, len(cx)), max(1, len(cy))
    t = t_x + t_y
    constrained = tuple(cx + cy)
    order = (0,) + tuple(cx + fx + cy + fy)
    ok = (
        d >= 2
        and len(L[0]) == full
        and t_x <= d - 1
        and t_y <= d - 1
        and all(len(L[s]) >= t for s in constrained)
    )
    return FeasibilityClass("biclique" if ok else "infeasible", t, constrained, order, t_x, t_y)


def _connected_order(adj: Adjacency) -> list[int]:
    n = len(adj)
    order: list[int] = []
    seen = [False] * n
    for s in range(n):
        if seen[s]:
            continue
        seen[s] = True
        queue = deque([s])
        while queue:
            x = queue.popleft()
            order.append(x)
            for y in adj[x]:
                if not seen[y]:
                    seen[y] = True
                    queue.append(y)
    return order


def enumerate_states(adj: Adjacency, L: ListAssignment, cap: int | None = None) -> np.ndarray:
    """All proper L-colourings as a lexicographically sorted ``(N, n)`` uint8 array."""
    n = len(adj)
    if len(L) != n:
        raise ValueError("list assignment does not match the site graph")
    cap = enumeration_cap(cap)
    estimate = math.prod(len(x) for x in L.lists)
    if n == 0:
        return np.zeros((1, 0), dtype=np.uint8)
    order = _connected_order(adj)
    pos = {s: i for i, s in enumerate(order)}
    rows = np.zeros((1, 0), dtype=np.uint8)
    for i, s in enumerate(order):
        cols = np.array(sorted(L[s]), dtype=np.uint8)
        cand = np.repeat(rows, len(cols), axis=0)
        new = np.tile(cols, len(rows))
        keep = np.ones(len(cand), dtype=bool)
        for u in adj[s]:
            j = pos[u]
            if j < i:
                keep &= cand[:, j] != new
        rows = np.concatenate([cand[keep], new[keep, None]], axis=1)
        if len(rows) > cap:
            raise CapExceeded(cap, estimate)
    inverse = np.empty(n, dtype=np.int64)
    inverse[np.array(order)] = np.arange(n)
    out = rows[:, inverse]
    idx = np.lexsort(out.T[::-1])
    return np.ascontiguousarray(out[idx])


def enumerate_colorings(adj: Adjacency, L: ListAssignment, cap: int | None = None) -> list[Coloring]:
    states = enumerate_states(adj, L, cap)
    return [Coloring(tuple(int(c) for c in row), L.k) for row in states]


@lru_cache(maxsize=None)
def _clique_count(sizes_masks: tuple[int, ...], k: int) -> int:
    # number of injective assignments site -> colour with colour in the site's mask
    counts = {0: 1}
    for mask in sizes_masks:
        nxt: dict[int, int] = {}
        for used, c in counts.items():
            free = mask & ~used
            while free:
                bit = free & -free
                free ^= bit
                nxt[used | bit] = nxt.get(used | bit, 0) + c
        counts = nxt
    return sum(counts.values())


def _mask(L: Iterable[int]) -> int:
    return sum(1 << (c - 1) for c in L)


def count_clique_colorings(L: ListAssignment) -> int:
    """|Omega^L_U| for a clique, by a subset dynamic programme (no enumeration)."""
    return _clique_count(tuple(_mask(x) for x in L.lists), L.k)


def count_biclique_colorings(L: ListAssignment, d: int) -> int:
    """|Omega^L_Z| for the bi-clique layout, conditioning on the cut-site colour."""
    total = 0
    for c in L[0]:
        bit = 1 << (c - 1)
        x = tuple(_mask(L[s]) & ~bit for s in range(1, d))
        y = tuple(_mask(L[s]) & ~bit for s in range(d, 2 * d - 1))
        total += _clique_count(x, L.k) * _clique_count(y, L.k)
    return total


def clique_count_bounds(L: ListAssignment, d: int) -> tuple[int, int]:
    """Lower and upper bounds on |Omega^L_U| for t-feasible clique lists."""
    fc = classify_feasibility(L, d)
    if not fc.feasible:
        raise ValueError("lists are not t-feasible")
    sizes = [len(L[s]) for s in fc.constrained]
    tail = math.factorial(d + 1 - fc.t)
    lo = math.prod(sz - i for i, sz in enumerate(sizes)) * tail
    hi = math.prod(sizes) * tail
    return lo, hi


def biclique_count_bounds(L: ListAssignment, d: int) -> tuple[int, int]:
    """Lower and upper bounds on |Omega^L_Z| for (t, t_X, t_Y)-feasible lists."""
    fc = classify_feasibility(L, d, biclique=True)
    if not fc.feasible:
        raise ValueError("lists are not (t, t_X, t_Y)-feasible")
    x_order = fc.order[1:d]
    y_order = fc.order[d:]
    xs = [len(L[s]) for s in x_order[: fc.t_x]]
    ys = [len(L[s]) for s in y_order[: fc.t_y]]
    tail = math.factorial(d - fc.t_x) * math.factorial(d - fc.t_y)
    lo = (
        math.prod(sz - i for i, sz in enumerate(xs))
        * math.prod(sz - i for i, sz in enumerate(ys))
        * (d + 1 - fc.t)
        * tail
    )
    hi = math.prod(xs) * math.prod(ys) * d * tail
    return lo, hi
