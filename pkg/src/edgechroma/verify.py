"""Named numerical check suites over deterministic instance families.

Every suite returns a :class:`SuiteReport`; each check records the measured
quantity, the limit it is compared against and whether it passed.  Instance
generators are seeded so that reports are reproducible.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .block_dynamics import BlockSystem, constant_factor_comparison, partition_at
from .chain import detailed_balance_residual, is_ergodic, spectral_gap
from .coloring import CapExceeded, ListAssignment, enumerate_states
from .decompose import certified_bound, check_step, decompose
from .glauber import GlauberSpec, build_glauber, edge_spec, generalized_mono_factor, restrict_spec
from .graph_core import SubtreeHandle, Tree, adjacency_from_pairs, boundary, is_splitting, regularise, tree_from_edges
from .paths import CliqueSystem

TOL = 1e-9


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    limit: float
    lower: bool = False

    @property
    def slack(self) -> float:
        """Distance to the limit; positive when the check passes."""
        return self.measured - self.limit if self.lower else self.limit - self.measured

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "measured": self.measured, "limit": self.limit,
                "kind": "lower" if self.lower else "upper", "slack": self.slack}


@dataclass
class SuiteReport:
    suite: str
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, measured: float, limit: float):
        """Upper-bound check: passes when measured <= limit."""
        self.checks.append(Check(name, bool(measured <= limit), float(measured), float(limit)))

    def add_lower(self, name: str, measured: float, limit: float):
        """Lower-bound check: passes when measured >= limit."""
        self.checks.append(Check(name, bool(measured >= limit), float(measured), float(limit), lower=True))

    def to_json(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "checks": [c.to_json() for c in self.checks]}


# ---------------------------------------------------------------------------
# instance families


def random_tree(n: int, rng: np.random.Generator, max_degree: int | None = None) -> Tree:
    """Uniform labelled tree on ``n`` vertices (Pruefer decoding), rejected until degrees fit."""
    if n == 2:
        return tree_from_edges([("0", "1")])
    while True:
        code = rng.integers(0, n, size=n - 2)
        degree = np.ones(n, dtype=int)
        np.add.at(degree, code, 1)
        if max_degree is not None and degree.max() > max_degree:
            continue
        edges = []
        deg = degree.copy()
        for x in code:
            leaf = int(np.flatnonzero(deg == 1)[0])
            edges.append((str(leaf), str(int(x))))
            deg[leaf] -= 1
            deg[x] -= 1
        u, w = np.flatnonzero(deg == 1)
        edges.append((str(int(u)), str(int(w))))
        return tree_from_edges(edges)


def regular_trees(d: int, max_edges: int, count: int, seed: int) -> list[Tree]:
    """Distinct regularised random trees with at most ``max_edges`` edges (deterministic)."""
    rng = np.random.default_rng(seed)
    out, seen = [], set()
    attempts = 0
    while len(out) < count and attempts < 50 * count:
        attempts += 1
        n = int(rng.integers(2, max(3, max_edges // (d - 1) + 2)))
        t = regularise(random_tree(n, rng, d), d)
        if t.m > max_edges:
            continue
        shape = canonical_form(t)
        if shape in seen:
            continue
        seen.add(shape)
        out.append(t)
    return out


def canonical_form(t: Tree) -> str:
    """Isomorphism-invariant string: nested-bracket encoding rooted at the centre (or the smaller of two)."""
    nbrs = [[t.other_end(e, v) for e in t.incident(v)] for v in range(t.n)]
    deg = [len(x) for x in nbrs]
    layer = [v for v in range(t.n) if deg[v] <= 1]
    remaining = t.n
    while remaining > 2:
        remaining -= len(layer)
        nxt = []
        for v in layer:
            for u in nbrs[v]:
                deg[u] -= 1
                if deg[u] == 1:
                    nxt.append(u)
        layer = nxt
    centres = layer if t.n > 1 else [0]

    def encode(v: int, parent: int) -> str:
        return "(" + "".join(sorted(encode(u, v) for u in nbrs[v] if u != parent)) + ")"

    return min(encode(c, -1) for c in centres)


def caterpillar(d: int, spine: int) -> Tree:
    """d-regular caterpillar with ``spine`` internal vertices on a path."""
    if spine == 1:
        return tree_from_edges([("s0", f"x{j}") for j in range(d)])
    edges = [("l", "s0")] + [(f"s{i}", f"s{i + 1}") for i in range(spine - 1)] + [(f"s{spine - 1}", "r")]
    return regularise(tree_from_edges(edges), d)


def _random_graph(rng, n: int, p: float) -> list[tuple[int, int]]:
    return [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < p]


def mono_instances(count: int, seed: int, max_states: int = 3000, clique: bool = True):
    """(spec, v) pairs with N(v) a clique of size <= k-2 (or arbitrary with k > |N(v)|), both chains ergodic."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(3, 8))
        k = int(rng.integers(3, 6))
        adj = adjacency_from_pairs(n, _random_graph(rng, n, float(rng.uniform(0.25, 0.6))))
        if clique:
            ok = [v for v in range(n) if len(adj[v]) <= k - 2 and all(b in adj[a] for a, b in itertools.combinations(adj[v], 2))]
        else:
            ok = [v for v in range(n) if len(adj[v]) < k and len(adj[v]) >= 2]
        if not ok:
            continue
        v = int(ok[rng.integers(len(ok))])
        rates = tuple(float(x) for x in rng.uniform(0.2, 1.0, size=n))
        spec = GlauberSpec(adj, k, rates, ListAssignment.full(n, k))
        try:
            states = enumerate_states(adj, spec.lists, max_states)
        except CapExceeded:
            continue
        if len(states) < 2:
            continue
        keep_chain = build_glauber(spec)
        small = restrict_spec(spec, [i for i in range(n) if i != v])
        small_chain = build_glauber(small)
        if not (is_ergodic(keep_chain) and is_ergodic(small_chain)) or small_chain.n < 2:
            continue
        out.append((spec, v, keep_chain, small_chain))
    return out


def splitting_blocks(tree: Tree, max_edges: int):
    """Connected edge sets that are splitting with one or two interior-boundary edges."""
    seen = set()
    frontier = [frozenset([e]) for e in range(tree.m)]
    out = []
    while frontier:
        nxt = []
        for s in frontier:
            if s in seen:
                continue
            seen.add(s)
            sub = SubtreeHandle(tree, s)
            b = boundary(tree, sub)
            if s != frozenset(range(tree.m)) and b.t in (1, 2) and is_splitting(tree, sub):
                out.append(sub)
            if len(s) < max_edges:
                for e in s:
                    for f in tree.edge_neighbours(e):
                        if f not in s:
                            nxt.append(s | {f})
        frontier = nxt
    return sorted(out, key=lambda h: h.sorted_edges)


def clique_families(d: int, t_max: int):
    """Every t-feasible list family on a d-clique up to colour relabelling and site order."""
    k = d + 1
    full = frozenset(range(1, k + 1))
    seen = set()
    out = []
    for t in range(t_max + 1):
        if t > d:
            break
        sizes = range(t + 1, k)
        subsets = [frozenset(c) for s in sizes for c in itertools.combinations(range(1, k + 1), s)]
        for combo in itertools.combinations_with_replacement(subsets, t):
            lists = list(combo) + [full] * (d - t)
            key = _canonical_lists(lists, k)
            if key in seen:
                continue
            seen.add(key)
            out.append(ListAssignment.from_lists(lists, k))
    return out


def _canonical_lists(lists, k: int):
    best = None
    for perm in itertools.permutations(range(1, k + 1)):
        mapped = sorted(tuple(sorted(perm[c - 1] for c in L)) for L in lists)
        key = tuple(mapped)
        if best is None or key < best:
            best = key
    return best


# ---------------------------------------------------------------------------
# suites


def _tau(chain) -> float:
    rep = spectral_gap(chain)
    return 0.0 if rep.n_states == 1 else rep.relaxation


def suite_mono(workers: int = 1, seed: int = 0, count: int = 12) -> SuiteReport:
    rep = SuiteReport("mono")
    for j, (spec, v, keep, small) in enumerate(mono_instances(count, seed)):
        t_keep, t_small = _tau(keep), _tau(small)
        rep.add(f"clique[{j}] n={spec.n} k={spec.k} v={v}", t_small, t_keep + TOL)
    for j, (spec, v, keep, small) in enumerate(mono_instances(max(3, count // 3), seed + 1, clique=False)):
        factor = generalized_mono_factor(spec, v)
        rep.add(f"generalised[{j}] n={spec.n} k={spec.k} v={v} factor={factor:.4g}", _tau(small), factor * _tau(keep) + TOL)
    return rep


def block_instances() -> list[tuple[Tree, tuple[str, int]]]:
    """Regular trees with d in {3, 4}, m <= 12, each with a vertex root and (when legal) an edge root."""
    trees = [caterpillar(3, s) for s in (1, 2, 3)] + [caterpillar(4, s) for s in (1, 2)]
    star3 = regularise(tree_from_edges([("c", "a"), ("c", "b"), ("c", "x")]), 3)
    trees.append(star3)
    out = []
    for t in trees:
        sub = t.whole()
        internal = sorted(sub.internal())
        out.append((t, ("vertex", internal[0])))
        for e in range(t.m):
            a, b = t.edges[e]
            if t.degree[a] > 1 and t.degree[b] > 1:
                out.append((t, ("edge", e)))
                break
        if len(internal) > 1:
            out.append((t, ("vertex", internal[-1])))
    return out


def _block_checks(rep: SuiteReport, tree: Tree, root, k: int):
    part = partition_at(tree, tree.whole(), root)
    system = BlockSystem(part, k)
    t_l = _tau(system.glauber_chain())
    t_b = _tau(system.block_chain())
    t_r = _tau(system.reduced_chain())
    name = f"m={tree.m} d={tree.max_degree} root={root[0]}:{root[1]}"
    rep.add(f"{name} tau(L) <= tau(B)", t_l, t_b + TOL)
    rep.add(f"{name} |tau(B)-tau(R)|/tau(B)", abs(t_b - t_r) / max(t_b, 1e-300), 1e-9)
    return system, name


def suite_blocks(workers: int = 1, seed: int = 0) -> SuiteReport:
    rep = SuiteReport("blocks")
    for tree, root in block_instances():
        _block_checks(rep, tree, root, tree.max_degree + 1)
    return rep


def suite_reduced(workers: int = 1, seed: int = 0) -> SuiteReport:
    rep = SuiteReport("reduced")
    for tree, root in block_instances():
        part = partition_at(tree, tree.whole(), root)
        system = BlockSystem(part, tree.max_degree + 1)
        name = f"m={tree.m} d={tree.max_degree} root={root[0]}:{root[1]}"
        res = detailed_balance_residual(system.reduced_chain(), system.projection())
        rep.add(f"{name} detailed balance residual", res, 1e-12)
        cf = constant_factor_comparison(system.reduced_chain(), system.const_reduced_chain())
        rep.add(f"{name} constant-factor K <= c^3 (c={cf.c:.3g})", cf.k_measured, cf.c ** 3 + TOL)
    return rep


def congestion_instances() -> list[tuple[ListAssignment, int, bool]]:
    full = lambda k: set(range(1, k + 1))
    raw = [
        (3, [full(4)] * 3, False),
        (3, [{1, 2}, full(4), full(4)], False),
        (3, [{1, 2, 3}, {1, 2, 4}, full(4)], False),
        (4, [{1, 2}, full(5), full(5), full(5)], False),
        (4, [{1, 2, 3}, {2, 3, 4}, full(5), full(5)], False),
        (3, [full(4), {1, 2, 3}, full(4), {2, 3, 4}, full(4)], True),
    ]
    return [(ListAssignment.from_lists(lists, d + 1), d, bi) for d, lists, bi in raw]


def suite_congestion(workers: int = 1, seed: int = 0) -> SuiteReport:
    rep = SuiteReport("congestion")
    for lists, d, bi in congestion_instances():
        system = CliqueSystem(lists, d, biclique=bi)
        name = f"{'biclique' if bi else 'clique'} d={d} t={system.feasibility.t}"
        tau = _tau(system.glauber)
        canon = system.canonical_congestion()
        rep.add(f"{name} tau(L) <= canonical-path bound", tau, canon.bound + TOL)
        frac = system.fractional_congestion()
        rep.add(f"{name} tau(L_int) <= fractional-flow bound", _tau(system.intermediate), frac.bound + TOL)
    return rep


def _one_sided(tree: Tree, block: SubtreeHandle, b, e: int) -> bool:
    ends = [x for x in tree.edges[e] if any(f in b.exterior for f in tree.incident(x))]
    return block.m >= 2 and len(ends) == 1


def suite_each_col(workers: int = 1, seed: int = 0, max_block: int = 8, boundaries: int = 3) -> SuiteReport:
    rep = SuiteReport("each_col")
    for d, spine in ((3, 5), (4, 4)):
        tree = caterpillar(d, spine)
        k = d + 1
        host = edge_spec(tree, k)
        states = enumerate_states(host.adjacency, host.lists)
        lo, hi = 0.5 * (d - 1) / d, 0.5 * d / (d - 1)
        one, two = [], []
        for block in splitting_blocks(tree, max_block):
            b = boundary(tree, block)
            # only boundary edges that meet coloured edges at a single end are measured
            edges_ok = [e for e in sorted(b.interior) if _one_sided(tree, block, b, e)]
            if not edges_ok:
                continue
            ext = sorted(b.exterior)
            for row in np.unique(states[:, ext], axis=0)[:boundaries]:
                sigma = {e: int(c) for e, c in zip(ext, row)}
                spec = edge_spec(tree, k, sigma, block)
                local = enumerate_states(spec.adjacency, spec.lists)
                for e in edges_ok:
                    j = spec.labels.index(e)
                    for c in sorted(spec.lists[j]):
                        (one if b.t == 1 else two).append(float(np.mean(local[:, j] == c)))
        rep.add(f"d={d} one boundary edge: max |p - 1/2|", max(abs(p - 0.5) for p in one), 1e-12)
        if two:
            rep.add_lower(f"d={d} two boundary edges: min p", min(two), lo - 1e-12)
            rep.add(f"d={d} two boundary edges: max p", max(two), hi + 1e-12)
    return rep


def suite_splitting(workers: int = 1, seed: int = 0, count: int = 8) -> SuiteReport:
    rep = SuiteReport("splitting")
    for j, tree in enumerate(regular_trees(3, 24, count, seed)):
        dt = decompose(tree)
        bad = 0
        for step in dt.steps():
            try:
                check_step(tree, step)
            except ValueError:
                bad += 1
        rep.add(f"tree[{j}] m={tree.m} invalid steps", bad, 0)
        rep.add(f"tree[{j}] m={tree.m} lemma depth", dt.lemma_depth, 3 * math.ceil(math.log2(tree.m)) if tree.m > 1 else 0)
        if tree.m <= 11:
            tau = _tau(build_glauber(edge_spec(tree, 4)))
            rep.add(f"tree[{j}] m={tree.m} exact tau <= certified bound", tau, certified_bound(tree, dt, 4).bound)
    return rep


SUITES = {
    "mono": suite_mono,
    "blocks": suite_blocks,
    "block": suite_blocks,
    "reduced": suite_reduced,
    "congestion": suite_congestion,
    "each_col": suite_each_col,
    "splitting": suite_splitting,
}


def _run_named(args) -> SuiteReport:
    name, seed = args
    return SUITES[name](seed=seed)


def run_suites(names: list[str], workers: int = 1, seed: int = 0) -> list[SuiteReport]:
    """Run suites in order; with ``workers > 1`` they run in separate processes, results unchanged."""
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite {unknown[0]!r}; choose from {sorted(SUITES)}")
    jobs = [(n, seed) for n in names]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_named, jobs))
    return [_run_named(j) for j in jobs]
