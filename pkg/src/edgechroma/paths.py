"""Comparison of chains by weighted multi-commodity flows, and swap-based paths on cliques.

Clique sites are ``0..d-1`` with colours ``1..d+1``; the ghost site ``w`` is
stored last in extended colourings (index ``d``) but is the smallest site in
the processing order.  Bi-cliques use the layout of
:func:`graph_core.biclique_adjacency`: site 0 is the cut site ``z``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations_with_replacement
from typing import Iterable, Mapping, Sequence

import numpy as np

from .chain import FiniteChain, chain_from_triplets, spectral_gap
from .coloring import ListAssignment, classify_feasibility, enumerate_states
from .graph_core import biclique_adjacency, complete_adjacency
from .glauber import GlauberSpec, build_glauber, resolve_rates


# ---------------------------------------------------------------------------
# permutations and cycles


def ghost_extend(alpha: Sequence[int], k: int) -> tuple[int, ...]:
    """Append the ghost colour: the unique colour of ``1..k`` missing from ``alpha``."""
    alpha = tuple(int(c) for c in alpha)
    if len(set(alpha)) != len(alpha):
        raise ValueError("clique colouring repeats a colour")
    if len(alpha) != k - 1:
        raise ValueError("ghost extension needs k = d + 1 colours")
    (missing,) = set(range(1, k + 1)) - set(alpha)
    return alpha + (missing,)


@dataclass(frozen=True)
class BlockingPermutation:
    """``mapping[x] = y`` iff alpha(x) = beta(y), over sites plus ghost (last index)."""

    mapping: tuple[int, ...]
    cycles: tuple[tuple[int, ...], ...]
    types: tuple[int, ...] = ()

    @property
    def ghost(self) -> int:
        return len(self.mapping) - 1

    def is_identity(self) -> bool:
        return all(x == y for x, y in enumerate(self.mapping))


def _order_key(x: int, ghost: int) -> int:
    return -1 if x == ghost else x


def _cycles(mapping: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    ghost = len(mapping) - 1
    seen = set()
    out = []
    for start in sorted(range(len(mapping)), key=lambda x: _order_key(x, ghost)):
        if start in seen or mapping[start] == start:
            continue
        cyc = [start]
        seen.add(start)
        x = mapping[start]
        while x != start:
            cyc.append(x)
            seen.add(x)
            x = mapping[x]
        out.append(tuple(cyc))
    return tuple(out)


def blocking_permutation(alpha: Sequence[int], beta: Sequence[int], k: int) -> BlockingPermutation:
    a = ghost_extend(alpha, k)
    b = ghost_extend(beta, k)
    where = {c: y for y, c in enumerate(b)}
    mapping = tuple(where[c] for c in a)
    return BlockingPermutation(mapping, _cycles(mapping))


def classify_cycles(f: BlockingPermutation, free: Sequence[bool]) -> BlockingPermutation:
    """Attach cycle types: 1 contains the ghost, 2 has a free site, 3 otherwise.

    ``free`` is indexed by site (the ghost is always free).
    """
    ghost = f.ghost
    types = []
    for cyc in f.cycles:
        if ghost in cyc:
            types.append(1)
        elif any(free[x] for x in cyc):
            types.append(2)
        else:
            types.append(3)
    return BlockingPermutation(f.mapping, f.cycles, tuple(types))


def free_mask(lists: ListAssignment, full: int) -> tuple[bool, ...]:
    return tuple(len(L) >= full for L in lists.lists)


def is_good_pair(alpha: Sequence[int], beta: Sequence[int], lists: ListAssignment) -> bool:
    k = lists.k
    f = classify_cycles(blocking_permutation(alpha, beta, k), free_mask(lists, k))
    return 3 not in f.types


def swap_moves(alpha: Sequence[int], beta: Sequence[int], free: Sequence[bool], k: int) -> list[tuple[int, int]]:
    """Recolouring moves ``(site, colour)`` of the swap procedure from alpha to beta."""
    cur = list(ghost_extend(alpha, k))
    f = list(blocking_permutation(alpha, beta, k).mapping)
    w = len(cur) - 1
    moves = []

    def swap(v: int):
        c = cur[w]
        moves.append((v, c))
        cur[w], cur[v] = cur[v], c
        f[w], f[v] = f[v], f[w]

    while True:
        if f[w] != w:
            swap(f[w])
            continue
        cand = [u for u in range(w) if free[u] and f[u] != u]
        if not cand:
            break
        swap(cand[0])
    if any(f[x] != x for x in range(w)):
        raise ValueError("pair is not good: a cycle of constrained sites remains")
    return moves


def apply_moves(alpha: Sequence[int], moves: Iterable[tuple[int, int]]) -> list[tuple[int, ...]]:
    seq = [tuple(alpha)]
    cur = list(alpha)
    for v, c in moves:
        cur[v] = c
        seq.append(tuple(cur))
    return seq


def canonical_path(alpha: Sequence[int], beta: Sequence[int], lists: ListAssignment) -> list[tuple[int, ...]]:
    """Colourings visited by the canonical swap path (both endpoints included)."""
    if not is_good_pair(alpha, beta, lists):
        raise ValueError("pair is not good")
    moves = swap_moves(alpha, beta, free_mask(lists, lists.k), lists.k)
    return apply_moves(alpha, moves)


def _biclique_sides(d: int) -> tuple[list[int], list[int]]:
    return [0] + list(range(1, d)), [0] + list(range(d, 2 * d - 1))


def biclique_is_good(alpha: Sequence[int], beta: Sequence[int], lists: ListAssignment, d: int) -> bool:
    k = lists.k
    for side in _biclique_sides(d):
        free = [len(lists[s]) >= k and s != 0 for s in side]
        f = classify_cycles(
            blocking_permutation([alpha[s] for s in side], [beta[s] for s in side], k), free
        )
        if 3 in f.types:
            return False
    return True


def biclique_moves(alpha: Sequence[int], beta: Sequence[int], lists: ListAssignment, d: int) -> list[tuple[int, int]]:
    """Interleaved moves: X moves up to the cut-site change, all Y moves, the remaining X moves."""
    k = lists.k
    per_side = []
    for side in _biclique_sides(d):
        free = [len(lists[s]) >= k and s != 0 for s in side]
        local = swap_moves([alpha[s] for s in side], [beta[s] for s in side], free, k)
        per_side.append([(side[v], c) for v, c in local])
    mx, my = per_side
    cut = next((i for i, (v, _) in enumerate(mx) if v == 0), None)
    if cut is None:
        return mx + my
    return mx[:cut] + my + mx[cut + 1:]


def biclique_path(alpha: Sequence[int], beta: Sequence[int], lists: ListAssignment, d: int) -> list[tuple[int, ...]]:
    if not biclique_is_good(alpha, beta, lists, d):
        raise ValueError("pair is not good on both sides")
    return apply_moves(alpha, biclique_moves(alpha, beta, lists, d))


# ---------------------------------------------------------------------------
# generic comparison


@dataclass
class WeightedFlow:
    """``paths[(a, b)]`` is a list of (state-index path, flow weight); ``omega(i, j)`` weights transitions."""

    paths: dict[tuple[int, int], list[tuple[tuple[int, ...], float]]]
    omega: object = None

    def weight(self, i: int, j: int) -> float:
        if self.omega is None:
            return 1.0
        if callable(self.omega):
            return float(self.omega(i, j))
        return float(self.omega[(i, j)])


@dataclass(frozen=True)
class CongestionReport:
    rho_max: float
    argmax: tuple[int, int] | None
    b: float
    bound: float
    tau_reference: float
    rho: dict = field(default_factory=dict, repr=False, compare=False)

    def to_json(self, states=None) -> dict:
        arg = None
        if self.argmax is not None:
            arg = list(self.argmax) if states is None else [list(map(int, states[i])) for i in self.argmax]
        return {"rho_max": self.rho_max, "argmax": arg, "b": self.b, "bound": self.bound}


def _validate_flow(L: FiniteChain, Lp: FiniteChain, flow: WeightedFlow):
    gL = L.generator.tocsr()
    offp = Lp.off_diagonal()
    needed = set(zip(offp.row.tolist(), offp.col.tolist()))
    if needed - set(flow.paths):
        raise ValueError("flow misses some transitions of the reference chain")
    for (a, b), family in flow.paths.items():
        total = sum(g for _, g in family)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"flow for commodity {(a, b)} sums to {total}")
        for path, _ in family:
            if path[0] != a or path[-1] != b or len(path) < 2:
                raise ValueError(f"path for commodity {(a, b)} has wrong endpoints")
            for x, y in zip(path, path[1:]):
                if x == y or gL[x, y] <= 0:
                    raise ValueError(f"path step {(x, y)} is not a transition of the chain")


def congestion(L: FiniteChain, Lp: FiniteChain, flow: WeightedFlow, tau_reference: float | None = None,
               validate: bool = True) -> CongestionReport:
    """Exact congestion of every transition and the bound b^2 rho_max tau(L')."""
    if validate:
        _validate_flow(L, Lp, flow)
    pi, pip = L.stationary, Lp.stationary
    gL, gP = L.generator.tocsr(), Lp.generator.tocsr()
    load: dict[tuple[int, int], float] = {}
    for (a, b), family in flow.paths.items():
        base = pip[a] * gP[a, b]
        if base == 0:
            continue
        for path, g in family:
            steps = list(zip(path, path[1:]))
            length = sum(flow.weight(x, y) for x, y in steps)
            for step in set(steps):
                load[step] = load.get(step, 0.0) + g * base * length
    rho = {}
    for (x, y), v in load.items():
        rho[(x, y)] = v / (pi[x] * gL[x, y] * flow.weight(x, y))
    argmax = max(rho, key=rho.get) if rho else None
    rho_max = rho[argmax] if rho else 0.0
    b = float(np.max(pi / pip))
    tau_ref = spectral_gap(Lp).relaxation if tau_reference is None else tau_reference
    return CongestionReport(rho_max, argmax, b, b * b * rho_max * tau_ref, tau_ref, rho)


def weighted_canonical_paths_bound(L: FiniteChain, Lp: FiniteChain, paths: Mapping[tuple[int, int], Sequence[int]],
                                   omega=None, tau_reference: float | None = None) -> float:
    """Single-path, uniform-stationary specialisation of the flow bound."""
    gL, gP = L.generator.tocsr(), Lp.generator.tocsr()
    w = (lambda i, j: 1.0) if omega is None else omega
    load: dict[tuple[int, int], float] = {}
    for (a, b), path in paths.items():
        steps = list(zip(path, path[1:]))
        length = sum(w(x, y) for x, y in steps)
        for step in set(steps):
            load[step] = load.get(step, 0.0) + gP[a, b] * length
    worst = max((v / (gL[x, y] * w(x, y)) for (x, y), v in load.items()), default=0.0)
    tau_ref = spectral_gap(Lp).relaxation if tau_reference is None else tau_reference
    return tau_ref * worst


def fractional_paths_bound(L: FiniteChain, Lp: FiniteChain, flow: WeightedFlow, tau_reference: float | None = None) -> float:
    """Unit-weight, uniform-stationary specialisation of the flow bound."""
    gL, gP = L.generator.tocsr(), Lp.generator.tocsr()
    load: dict[tuple[int, int], float] = {}
    for (a, b), family in flow.paths.items():
        for path, g in family:
            steps = list(zip(path, path[1:]))
            for step in set(steps):
                load[step] = load.get(step, 0.0) + g * gP[a, b] * len(steps)
    worst = max((v / gL[x, y] for (x, y), v in load.items()), default=0.0)
    tau_ref = spectral_gap(Lp).relaxation if tau_reference is None else tau_reference
    return tau_ref * worst


# ---------------------------------------------------------------------------
# clique and bi-clique systems


def c_of_t(t: int) -> float:
    """Guaranteed fraction (2(3t+2))^-t of intermediates."""
    return float((2 * (3 * t + 2)) ** (-t))


def clique_relaxation_bound(d: int, lists: ListAssignment, rates=None) -> float:
    """sum_{constrained} d/p_i + sum_{free} 1/p_i (hidden constant omitted)."""
    fc = classify_feasibility(lists, d)
    if not fc.feasible:
        raise ValueError("lists are not t-feasible")
    p = [float(r) for r in resolve_rates(rates if rates is not None else 1, d, d + 1)]
    cons = set(fc.constrained)
    return sum((d if i in cons else 1) / p[i] for i in range(d))


def biclique_relaxation_bound(d: int, lists: ListAssignment, rates=None) -> float:
    """d^2/p_z + per side: d/p for the first t_X (t_Y) sites in order, 1/p for the rest."""
    fc = classify_feasibility(lists, d, biclique=True)
    if not fc.feasible:
        raise ValueError("lists are not (t, t_X, t_Y)-feasible")
    n = 2 * d - 1
    p = [float(r) for r in resolve_rates(rates if rates is not None else 1, n, d + 1)]
    heavy = set(fc.order[1:1 + fc.t_x]) | set(fc.order[d:d + fc.t_y])
    total = d * d / p[0]
    for s in range(1, n):
        total += (d if s in heavy else 1) / p[s]
    return total


@dataclass(frozen=True)
class PathAudit:
    valid: bool
    max_recolour: int
    max_recolour_constrained: int
    max_multiplicity: int
    twice_only_smallest_free: bool
    lambda_free_ratio: float
    lambda_constrained_ratio: float
    pairs: int


class CliqueSystem:
    """Enumerated list colourings of a clique (or bi-clique) with the derived chains and paths."""

    def __init__(self, lists: ListAssignment, d: int, biclique: bool = False, rates=None, a_threshold: int | None = None):
        self.lists = lists
        self.d = d
        self.k = lists.k
        self.biclique = biclique
        if self.k != d + 1:
            raise ValueError("clique analysis uses k = d + 1 colours")
        self.n = 2 * d - 1 if biclique else d
        if len(lists) != self.n:
            raise ValueError("lists do not match the site count")
        self.adjacency = biclique_adjacency(d) if biclique else complete_adjacency(d)
        self.feasibility = classify_feasibility(lists, d, biclique=biclique)
        if not self.feasibility.feasible:
            raise ValueError("lists are not feasible for the clique analysis")
        self.rates = resolve_rates(rates, self.n, self.k)
        self.states = enumerate_states(self.adjacency, lists)
        self.N = len(self.states)
        self.free = np.array([len(L) >= self.k for L in lists.lists], dtype=bool)
        if biclique:
            self.free[0] = False
        t = self.feasibility.t
        self.a_threshold = 2 * (3 * t + 2) if a_threshold is None else a_threshold
        self._weights = self.k ** np.arange(self.n - 1, -1, -1, dtype=np.int64)
        self.codes = (self.states.astype(np.int64) - 1) @ self._weights

    # -- chains

    @property
    def spec(self) -> GlauberSpec:
        return GlauberSpec(self.adjacency, self.k, self.rates, self.lists)

    @cached_property
    def glauber(self) -> FiniteChain:
        return build_glauber(self.spec)

    @cached_property
    def unif(self) -> FiniteChain:
        return build_unif_chain(self.N)

    @cached_property
    def good(self) -> np.ndarray:
        return self.good_matrix()

    @cached_property
    def intermediate(self) -> FiniteChain:
        g = self.good.copy()
        np.fill_diagonal(g, False)
        rows, cols = np.nonzero(g)
        return chain_from_triplets(self.N, rows, cols, np.full(len(rows), 1.0 / self.N), states=self.states, check=False)

    def index_of(self, colouring: Sequence[int]) -> int:
        code = int((np.asarray(colouring, dtype=np.int64) - 1) @ self._weights)
        i = int(np.searchsorted(self.codes, code))
        if i >= self.N or self.codes[i] != code:
            raise KeyError(tuple(colouring))
        return i

    def omega_site(self, v: int) -> float:
        """Transition weight for a recolouring of site v."""
        p = float(self.rates[v])
        if self.biclique and v == 0:
            return self.d * self.d / p
        if not self.free[v]:
            return self.d / p
        if self.biclique:
            heavy = set(self.feasibility.order[1:1 + self.feasibility.t_x]) | set(
                self.feasibility.order[self.d:self.d + self.feasibility.t_y])
            if v in heavy:
                return self.d / p
        return 1.0 / p

    def relaxation_bound(self) -> float:
        if self.biclique:
            return biclique_relaxation_bound(self.d, self.lists, self.rates)
        return clique_relaxation_bound(self.d, self.lists, self.rates)

    # -- permutations in bulk

    def _sides(self) -> list[list[int]]:
        return list(_biclique_sides(self.d)) if self.biclique else [list(range(self.d))]

    def _ext(self, rows: np.ndarray, side: list[int]) -> np.ndarray:
        sub = rows[:, side].astype(np.int64)
        total = self.k * (self.k + 1) // 2
        return np.concatenate([sub, (total - sub.sum(axis=1))[:, None]], axis=1)

    def _perm(self, a_ext: np.ndarray, b_ext: np.ndarray) -> np.ndarray:
        p, n1 = a_ext.shape
        inv = np.zeros((p, self.k + 1), dtype=np.int64)
        r = np.arange(p)[:, None]
        inv[r, b_ext] = np.arange(n1)[None, :]
        return inv[r, a_ext]

    def _type3(self, f: np.ndarray, free_side: np.ndarray) -> np.ndarray:
        cons = ~np.r_[free_side, True]
        n1 = f.shape[1]
        moved = f != np.arange(n1)[None, :]
        cur = np.arange(n1)[None, :].repeat(len(f), 0)
        stay = cons[None, :] & moved
        r = np.arange(len(f))[:, None]
        for _ in range(int(cons.sum())):
            cur = f[r, cur]
            stay &= cons[cur]
        return stay.any(axis=1)

    def good_rows(self, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
        ok = np.ones(len(ia), dtype=bool)
        for side in self._sides():
            a = self._ext(self.states[ia], side)
            b = self._ext(self.states[ib], side)
            ok &= ~self._type3(self._perm(a, b), self.free[side])
        return ok

    def good_matrix(self) -> np.ndarray:
        ia, ib = np.meshgrid(np.arange(self.N), np.arange(self.N), indexing="ij")
        return self.good_rows(ia.ravel(), ib.ravel()).reshape(self.N, self.N)

    @property
    def _perm_space(self) -> int:
        size = 1
        for side in self._sides():
            n1 = len(side) + 1
            size *= n1 ** n1
        return size

    def permutation_codes(self, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
        code = np.zeros(len(ia), dtype=np.int64)
        for side in self._sides():
            f = self._perm(self._ext(self.states[ia], side), self._ext(self.states[ib], side))
            n1 = f.shape[1]
            code = code * n1 ** n1 + f @ (n1 ** np.arange(n1 - 1, -1, -1, dtype=np.int64))
        return code

    # -- batched swap paths

    def _side_moves(self, ia: np.ndarray, ib: np.ndarray, side: list[int]) -> tuple[np.ndarray, np.ndarray]:
        """Padded (pairs x steps) arrays of global sites and colours; -1 pads."""
        a = self._ext(self.states[ia], side)
        b = self._ext(self.states[ib], side)
        f = self._perm(a, b)
        cur = a.copy()
        p, n1 = a.shape
        w = n1 - 1
        free = self.free[side]
        r_all = np.arange(p)
        sites, cols = [], []
        side_arr = np.array(side)
        active = np.ones(p, dtype=bool)
        for _ in range(2 * n1 + 2):
            fw = f[:, w]
            cand = (f[:, :w] != np.arange(w)[None, :]) & free[None, :]
            first = np.argmax(cand, axis=1)
            v = np.where(fw != w, fw, np.where(cand.any(axis=1), first, -1))
            v[~active] = -1
            act = v >= 0
            if not act.any():
                break
            idx = r_all[act]
            vv = v[act]
            c = cur[idx, w].copy()
            step_site = np.full(p, -1)
            step_col = np.full(p, -1)
            step_site[idx] = side_arr[vv]
            step_col[idx] = c
            sites.append(step_site)
            cols.append(step_col)
            cur[idx, w] = cur[idx, vv]
            cur[idx, vv] = c
            fv = f[idx, vv].copy()
            f[idx, vv] = f[idx, w]
            f[idx, w] = fv
            active = act
        if (f != np.arange(n1)[None, :]).any():
            raise ValueError("a pair in the batch is not good")
        if not sites:
            return np.full((p, 0), -1), np.full((p, 0), -1)
        return np.stack(sites, axis=1), np.stack(cols, axis=1)

    def batch_moves(self, ia: np.ndarray, ib: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if not self.biclique:
            return self._side_moves(ia, ib, list(range(self.d)))
        side_x, side_y = _biclique_sides(self.d)
        sx, cx = self._side_moves(ia, ib, side_x)
        sy, cy = self._side_moves(ia, ib, side_y)
        p = len(ia)
        nx = (sx >= 0).sum(axis=1)
        has_cut = (sx == 0).any(axis=1)
        cut = np.where(has_cut, np.argmax(sx == 0, axis=1), nx)
        ny = (sy >= 0).sum(axis=1)
        width = sx.shape[1] + sy.shape[1]
        out_s = np.full((p, width + 1), -1)
        out_c = np.full((p, width + 1), -1)
        rows = np.arange(p)
        trash = width  # dropped cut-site moves of the X path land in a spare column
        for j in range(sx.shape[1]):
            pos = np.where(j < cut, j, np.where(j == cut, trash, j - 1 + ny))
            on = sx[:, j] >= 0
            out_s[rows[on], pos[on]] = sx[on, j]
            out_c[rows[on], pos[on]] = cx[on, j]
        for j in range(sy.shape[1]):
            on = sy[:, j] >= 0
            pos = cut + j
            out_s[rows[on], pos[on]] = sy[on, j]
            out_c[rows[on], pos[on]] = cy[on, j]
        return out_s[:, :width], out_c[:, :width]

    def walk(self, ia: np.ndarray, sites: np.ndarray, cols: np.ndarray) -> tuple[np.ndarray, bool]:
        """State index before every move (-1 on pads) and whether every move was proper."""
        cur = self.states[ia].astype(np.int64)
        before = np.full(sites.shape, -1, dtype=np.int64)
        ok = True
        allowed = np.zeros((self.n, self.k + 1), dtype=bool)
        for s, L in enumerate(self.lists.lists):
            allowed[s, list(L)] = True
        for j in range(sites.shape[1]):
            act = sites[:, j] >= 0
            if not act.any():
                break
            idx = np.flatnonzero(act)
            codes = (cur[idx] - 1) @ self._weights
            before[idx, j] = np.searchsorted(self.codes, codes)
            v = sites[idx, j]
            c = cols[idx, j]
            ok &= bool(allowed[v, c].all())
            ok &= bool(np.all(cur[idx, v] != c))
            cur[idx, v] = c
            for u in range(self.n):
                nb = np.array(self.adjacency[u], dtype=np.int64)
                on = v == u
                if on.any() and len(nb):
                    ok &= bool(np.all((cur[idx[on]][:, nb] != c[on, None])))
        return before, ok

    def good_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        g = self.good.copy()
        np.fill_diagonal(g, False)
        return np.nonzero(g)

    def _pair_chunks(self, chunk: int):
        ia, ib = self.good_pairs()
        for s in range(0, len(ia), chunk):
            yield ia[s:s + chunk], ib[s:s + chunk]

    def transition_id(self, before: np.ndarray, sites: np.ndarray, cols: np.ndarray) -> np.ndarray:
        return (before * self.n + sites) * (self.k + 1) + cols

    def decode_transition(self, tid: int) -> tuple[int, int]:
        c = tid % (self.k + 1)
        rest = tid // (self.k + 1)
        v = rest % self.n
        i = rest // self.n
        row = self.states[i].copy()
        row[v] = c
        return i, self.index_of(row)

    def canonical_congestion(self, chunk: int = 200_000) -> CongestionReport:
        """Weighted canonical paths from the Glauber chain to the good-pair chain, with the clique weights."""
        size = self.N * self.n * (self.k + 1)
        load = np.zeros(size)
        omega = np.array([self.omega_site(v) for v in range(self.n)])
        rate = np.array([float(r) for r in self.rates])
        lp = 1.0 / self.N
        for ia, ib in self._pair_chunks(chunk):
            sites, cols = self.batch_moves(ia, ib)
            before, ok = self.walk(ia, sites, cols)
            if not ok:
                raise AssertionError("swap path used an improper move")
            mask = sites >= 0
            length = np.where(mask, omega[np.where(mask, sites, 0)], 0.0).sum(axis=1)
            tid = self.transition_id(before, sites, cols)[mask]
            contrib = np.repeat(length * lp, mask.sum(axis=1))
            load += np.bincount(tid, weights=contrib, minlength=size)
        nz = np.flatnonzero(load)
        site_of = (nz // (self.k + 1)) % self.n
        rho = load[nz] / (rate[site_of] * omega[site_of])
        j = int(np.argmax(rho)) if len(rho) else None
        rho_max = float(rho[j]) if j is not None else 0.0
        argmax = self.decode_transition(int(nz[j])) if j is not None else None
        tau_ref = spectral_gap(self.intermediate).relaxation
        report = CongestionReport(rho_max, argmax, 1.0, rho_max * tau_ref, tau_ref,
                                  {self.decode_transition(int(t)): float(r) for t, r in zip(nz, rho)} if len(nz) < 200_000 else {})
        return report

    def canonical_flow(self) -> WeightedFlow:
        """Explicit single-path flow (small instances; feeds the generic congestion)."""
        ia, ib = self.good_pairs()
        sites, cols = self.batch_moves(ia, ib)
        before, _ = self.walk(ia, sites, cols)
        paths = {}
        for r in range(len(ia)):
            steps = [int(x) for x in before[r] if x >= 0]
            paths[(int(ia[r]), int(ib[r]))] = [(tuple(steps) + (int(ib[r]),), 1.0)]
        site_of = {}
        for a in range(self.N):
            for b in np.flatnonzero((self.states != self.states[a]).sum(axis=1) == 1):
                site_of[(a, int(b))] = int(np.flatnonzero(self.states[a] != self.states[b])[0])
        return WeightedFlow(paths, lambda i, j: self.omega_site(site_of[(i, j)]))

    def audit_paths(self, chunk: int = 200_000) -> PathAudit:
        """Validity, recolouring counts, per-(transition, permutation) multiplicities and |Lambda| ratios."""
        valid = True
        max_rec = 0
        max_rec_cons = 0
        twice_ok = True
        mult_parts = []
        lam = np.zeros(self.N * self.n * (self.k + 1), dtype=np.int64)
        total = 0
        for ia, ib in self._pair_chunks(chunk):
            sites, cols = self.batch_moves(ia, ib)
            before, ok = self.walk(ia, sites, cols)
            valid &= ok
            final = self.states[ia].astype(np.int64)
            rows = np.arange(len(ia))
            for j in range(sites.shape[1]):
                on = sites[:, j] >= 0
                final[rows[on], sites[on, j]] = cols[on, j]
            valid &= bool(np.array_equal(final, self.states[ib]))
            mask = sites >= 0
            counts = np.zeros((len(ia), self.n), dtype=np.int64)
            for j in range(sites.shape[1]):
                on = mask[:, j]
                np.add.at(counts, (rows[on], sites[on, j]), 1)
            max_rec = max(max_rec, int(counts.max(initial=0)))
            max_rec_cons = max(max_rec_cons, int(counts[:, ~self.free].max(initial=0)))
            twice_ok &= self._twice_rule(ia, ib, counts)
            tid = self.transition_id(before, sites, cols)
            pcode = self.permutation_codes(ia, ib)
            flat_t = tid[mask]
            flat_p = np.repeat(pcode, mask.sum(axis=1))
            flat_pair = np.repeat(rows + total, mask.sum(axis=1))
            # pack (transition, permutation, pair) into int64 keys; a path never reuses a transition
            # but count it once per pair regardless
            key = flat_t * self._perm_space + flat_p
            kk, cnt = np.unique(np.unique(key * chunk + (flat_pair - total)) // chunk, return_counts=True)
            mult_parts.append((kk, cnt))
            lam_keys = np.unique(flat_t * chunk + (flat_pair - total)) // chunk
            np.add.at(lam, lam_keys, 1)
            total += len(ia)
        max_mult = 0
        if mult_parts:
            keys = np.concatenate([k_ for k_, _ in mult_parts])
            cnts = np.concatenate([c_ for _, c_ in mult_parts])
            _, inv = np.unique(keys, return_inverse=True)
            max_mult = int(np.bincount(inv.ravel(), weights=cnts).max(initial=0))
        nz = np.flatnonzero(lam)
        site_of = (nz // (self.k + 1)) % self.n
        free_sites = self.free[site_of]
        ratio_free = float((lam[nz][free_sites] / self.N).max(initial=0.0))
        ratio_cons = float((lam[nz][~free_sites] / (self.d * self.N)).max(initial=0.0))
        return PathAudit(valid, max_rec, max_rec_cons, max_mult, twice_ok, ratio_free, ratio_cons, total)

    def _twice_rule(self, ia, ib, counts) -> bool:
        """A clique site recoloured twice must be the smallest free site of a type-2 cycle."""
        if self.biclique:
            return True
        side = list(range(self.d))
        f = self._perm(self._ext(self.states[ia], side), self._ext(self.states[ib], side))
        p, n1 = f.shape
        w = n1 - 1
        rows = np.arange(p)[:, None]
        big = n1 + 1
        free_ext = np.r_[self.free, False]  # ghost excluded from the "smallest free site" search
        cur = np.arange(n1)[None, :].repeat(p, 0)
        has_w = cur == w
        smallest = np.where(free_ext[cur], cur, big)
        for _ in range(n1):
            cur = f[rows, cur]
            has_w |= cur == w
            smallest = np.minimum(smallest, np.where(free_ext[cur], cur, big))
        twice = counts >= 2
        site_ids = np.arange(self.d)[None, :]
        allowed = (~has_w[:, :w]) & (smallest[:, :w] == site_ids)
        return bool(np.all(~twice | allowed))

    # -- fractional flows between the good-pair chain and the complete chain

    def a_sites(self) -> list[int]:
        cons = [s for s in range(self.n) if not self.free[s]]
        if self.biclique:
            cons = [s for s in cons if s != 0]
        return [s for s in cons if len(self.lists[s]) <= self.a_threshold]

    def b_sites(self) -> list[int]:
        a = set(self.a_sites())
        return [s for s in range(self.n) if not self.free[s] and s not in a]

    def _a_walks(self) -> tuple[np.ndarray, np.ndarray, dict]:
        a = self.a_sites()
        restr, cls = np.unique(self.states[:, a], axis=0, return_inverse=True) if a else (np.zeros((1, 0), np.uint8), np.zeros(self.N, np.int64))
        cls = cls.ravel()
        nr = len(restr)
        diff1 = (restr[:, None, :] != restr[None, :, :]).sum(axis=2) == 1
        walks = {}
        for s in range(nr):
            prev = {s: None}
            queue = deque([s])
            while queue:
                x = queue.popleft()
                for y in np.flatnonzero(diff1[x]):
                    y = int(y)
                    if y not in prev:
                        prev[y] = x
                        queue.append(y)
            for t in range(nr):
                seq = [t]
                while prev[seq[-1]] is not None:
                    seq.append(prev[seq[-1]])
                walks[(s, t)] = seq[::-1]
        return restr, cls, walks

    def _layer_plans(self, seq: list[int], extra_max: int = 3):
        """Layer sequences along a walk, shortest first; repeated layers act as lazy steps."""
        min_len = 2 if self.b_sites() else 1
        for extra in range(extra_max + 1):
            for dup in combinations_with_replacement(range(len(seq)), extra):
                layers = []
                for pos, x in enumerate(seq):
                    layers.extend([x] * (1 + dup.count(pos)))
                if len(layers) - 1 >= min_len:
                    yield layers

    def _layered_counts(self, layers, members, W):
        idx = [members[x] for x in layers]
        mats = [W[np.ix_(idx[j], idx[j + 1])] for j in range(len(layers) - 1)]
        fwd = [np.eye(len(idx[0]))]
        for mat in mats:
            fwd.append(fwd[-1] @ mat)
        return idx, mats, fwd

    def layer_plan(self) -> dict:
        """For every pair of A-restrictions, the first layer sequence that carries every commodity."""
        restr, cls, walks = self._a_walks()
        members = [np.flatnonzero(cls == r) for r in range(len(restr))]
        good = self.good.copy()
        np.fill_diagonal(good, False)
        W = good.astype(float)
        plan = {}
        for (s, t), seq in walks.items():
            for layers in self._layer_plans(seq):
                idx, mats, fwd = self._layered_counts(layers, members, W)
                need = np.ones_like(fwd[-1], dtype=bool)
                if s == t:
                    np.fill_diagonal(need, False)
                if not np.any(need & (fwd[-1] == 0)):
                    plan[(s, t)] = (layers, idx, mats, fwd, need)
                    break
            else:
                raise ValueError("some commodity has no path through the layers")
        return plan

    def fractional_congestion(self) -> CongestionReport:
        """Uniform flow over all good-pair paths following a shortest recolouring walk of the A sites."""
        good = self.good.copy()
        np.fill_diagonal(good, False)
        load = np.zeros((self.N, self.N))
        self.max_layers = 0
        for layers, idx, mats, fwd, need in self.layer_plan().values():
            m = len(layers) - 1
            self.max_layers = max(self.max_layers, m)
            bwd = [None] * (m + 1)
            bwd[m] = np.eye(len(idx[m]))
            for j in range(m - 1, -1, -1):
                bwd[j] = mats[j] @ bwd[j + 1]
            q = np.zeros_like(fwd[m])
            q[need] = 1.0 / fwd[m][need]
            for j in range(m):
                load[np.ix_(idx[j], idx[j + 1])] += mats[j] * (fwd[j].T @ q @ bwd[j + 1].T) * m
        # both chains have uniform stationary law and rate 1/N, so rho is the raw load
        rho = load
        rho[~good] = 0.0
        j = np.unravel_index(np.argmax(rho), rho.shape)
        tau_ref = spectral_gap(self.unif).relaxation
        return CongestionReport(float(rho[j]), (int(j[0]), int(j[1])), 1.0, float(rho[j]) * tau_ref, tau_ref)

    def fractional_flow(self) -> WeightedFlow:
        """Explicit version of the layered uniform flow (tiny instances only)."""
        restr, cls, walks = self._a_walks()
        good = self.good.copy()
        np.fill_diagonal(good, False)
        plan = self.layer_plan()
        paths = {}
        for a in range(self.N):
            for b in range(self.N):
                if a == b:
                    continue
                layers = plan[(int(cls[a]), int(cls[b]))][0]
                found = [[a]]
                for layer in layers[1:-1]:
                    nxt = []
                    for p in found:
                        for x in np.flatnonzero((cls == layer) & good[p[-1]]):
                            nxt.append(p + [int(x)])
                    found = nxt
                done = [tuple(p) + (b,) for p in found if good[p[-1], b]]
                paths[(a, b)] = [(p, 1.0 / len(done)) for p in done]
        return WeightedFlow(paths)

    def typeIII_intermediates(self, alpha: Sequence[int], beta: Sequence[int], xi_a: Sequence[int]) -> np.ndarray:
        """All colourings extending ``xi_a`` on A whose B colours avoid xi(A), alpha(A u B), beta(A u B)."""
        a = self.a_sites()
        b = self.b_sites()
        alpha = np.asarray(alpha)
        beta = np.asarray(beta)
        xi_a = np.asarray(xi_a)
        if len(xi_a) != len(a):
            raise ValueError("xi_A must colour exactly the A sites")
        if (alpha[a] != xi_a).sum() > 1 or (beta[a] != xi_a).sum() > 1:
            raise ValueError("xi_A must differ from alpha|A and from beta|A in at most one site")
        rows = self.states
        keep = np.all(rows[:, a] == xi_a[None, :], axis=1) if a else np.ones(self.N, dtype=bool)
        banned = set(xi_a.tolist()) | set(alpha[a + b].tolist()) | set(beta[a + b].tolist())
        for s in b:
            keep &= ~np.isin(rows[:, s], list(banned))
        return rows[keep]


def build_unif_chain(n: int, states=None) -> FiniteChain:
    """Complete chain with every off-diagonal rate 1/n; its relaxation time is 1."""
    ia, ib = np.nonzero(~np.eye(n, dtype=bool))
    return chain_from_triplets(n, ia, ib, np.full(len(ia), 1.0 / n), states=states, check=False,
                               numerators=np.ones(len(ia), dtype=np.int64), denominator=n)


def build_int_chain(lists: ListAssignment, d: int, biclique: bool = False) -> FiniteChain:
    return CliqueSystem(lists, d, biclique).intermediate


def sampled_congestion(system: CliqueSystem, samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of the canonical-path rho_max and its standard error (not certified)."""
    rng = np.random.default_rng(seed)
    ia, ib = system.good_pairs()
    pick = rng.integers(0, len(ia), size=samples)
    sa, sb = ia[pick], ib[pick]
    sites, cols = system.batch_moves(sa, sb)
    before, _ = system.walk(sa, sites, cols)
    omega = np.array([system.omega_site(v) for v in range(system.n)])
    rate = np.array([float(r) for r in system.rates])
    mask = sites >= 0
    length = np.where(mask, omega[np.where(mask, sites, 0)], 0.0).sum(axis=1)
    tid = system.transition_id(before, sites, cols)
    scale = len(ia) / samples / system.N
    per = {}
    for r in range(samples):
        for t_, s_ in zip(tid[r][mask[r]], sites[r][mask[r]]):
            per.setdefault(int(t_), np.zeros(samples))[r] += length[r] * scale / (rate[s_] * omega[s_])
    best = max(per, key=lambda t_: per[t_].sum())
    vals = per[best] * samples
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))
