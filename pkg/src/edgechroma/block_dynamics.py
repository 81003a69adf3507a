"""Block dynamics, reduced block dynamics and their projections on edge colourings of trees.

A :class:`BlockSystem` enumerates the constrained colourings of a subtree once
and derives from them the block chain, the reduced chain on the interface,
the projected stationary law and the per-block relaxation data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .chain import FiniteChain, chain_from_triplets, detailed_balance_residual, spectral_gap
from .coloring import ListAssignment, enumerate_states
from .glauber import GlauberSpec, build_glauber, edge_spec
from .graph_core import SubtreeHandle, Tree, boundary, induced_adjacency, is_splitting, line_graph


class AssumptionError(ValueError):
    """A block partition violates the splitting or block-ergodicity assumption."""


@dataclass(frozen=True)
class BlockPartition:
    tree: Tree
    sub: SubtreeHandle
    blocks: tuple[frozenset[int], ...]
    interface: frozenset[int]
    root: tuple[str, int] | None = None

    def __post_init__(self):
        union = set()
        for b in self.blocks:
            if union & b:
                raise ValueError("blocks overlap")
            union |= b
        if union != set(self.sub.edges):
            raise ValueError("blocks do not cover the subtree")

    @property
    def r(self) -> int:
        return len(self.blocks)

    def block_handles(self) -> list[SubtreeHandle]:
        return [SubtreeHandle(self.tree, b) for b in self.blocks]

    def interface_edges(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(self.blocks[i] & self.interface))

    def to_json(self, g: Sequence[float] | None = None) -> dict:
        doc = {
            "root": None if self.root is None else {"kind": self.root[0], "id": self.root[1]},
            "blocks": [sorted(b) for b in self.blocks],
            "interface": sorted(self.interface),
        }
        if g is not None:
            doc["g"] = [float(x) for x in g]
        return doc


def _interface(tree: Tree, blocks: Sequence[frozenset[int]]) -> frozenset[int]:
    owner = {e: i for i, b in enumerate(blocks) for e in b}
    out = set()
    for e, i in owner.items():
        if any(owner.get(f, i) != i for f in tree.edge_neighbours(e)):
            out.add(e)
    return frozenset(out)


def make_partition(tree: Tree, sub: SubtreeHandle, blocks: Sequence[Sequence[int]], root=None) -> BlockPartition:
    blocks = tuple(frozenset(b) for b in blocks)
    return BlockPartition(tree, sub, blocks, _interface(tree, blocks), root)


def check_splitting_blocks(partition: BlockPartition) -> list[int]:
    """Indices of blocks whose subtree is not splitting in the host tree."""
    return [i for i, h in enumerate(partition.block_handles()) if not is_splitting(partition.tree, h)]


def partition_at(tree: Tree, sub: SubtreeHandle, root: tuple[str, int], require_splitting: bool = True) -> BlockPartition:
    """Vertex-rooted (``("vertex", v)``) or edge-rooted (``("edge", e)``) block partition."""
    kind, x = root
    if kind == "vertex":
        if x not in sub.vertices() or sub.local_degree(x) < 2:
            raise ValueError(f"root vertex {tree.names[x]} is not internal to the subtree")
        blocks = sub.hanging(x)
    elif kind == "edge":
        if x not in sub.edges:
            raise ValueError(f"root edge {x} is not in the subtree")
        a, b = tree.edges[x]
        if sub.local_degree(a) < 2 or sub.local_degree(b) < 2:
            raise ValueError(f"root edge {x} has a leaf endpoint")
        if x in boundary(tree, sub).interior:
            raise ValueError(f"root edge {x} lies on the interior boundary")
        blocks = [frozenset({x})]
        for end in (a, b):
            for h in sub.hanging(end):
                if x not in h:
                    blocks.append(h)
    else:
        raise ValueError(f"unknown root kind {kind!r}")
    part = make_partition(tree, sub, blocks, (kind, x))
    if require_splitting:
        bad = check_splitting_blocks(part)
        if bad:
            desc = "; ".join(str(sorted(part.blocks[i])) for i in bad)
            raise AssumptionError(
                f"blocks {desc} are not splitting; choose the root by the splitting procedure (decompose.split_once)"
            )
    return part


def _unique_rows(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if a.shape[1] == 0:
        return np.zeros((1, 0), dtype=a.dtype), np.zeros(len(a), dtype=np.int64)
    uniq, inv = np.unique(a, axis=0, return_inverse=True)
    return uniq, inv.ravel()


def _group_pairs(inverse: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All ordered pairs (a, b), a != b, sharing a group label; plus the group size of a."""
    order = np.argsort(inverse, kind="stable")
    labels = inverse[order]
    starts = np.flatnonzero(np.r_[True, labels[1:] != labels[:-1]])
    sizes = np.diff(np.r_[starts, len(order)])
    size_of = np.empty(len(inverse), dtype=np.int64)
    start_of = np.empty(len(inverse), dtype=np.int64)
    for s0, sz in zip(starts, sizes):
        size_of[order[s0:s0 + sz]] = sz
        start_of[order[s0:s0 + sz]] = s0
    rows = np.repeat(np.arange(len(inverse)), size_of)
    offsets = np.arange(len(rows)) - np.repeat(np.cumsum(size_of) - size_of, size_of)
    cols = order[np.repeat(start_of, size_of) + offsets]
    keep = rows != cols
    return rows[keep], cols[keep], size_of[rows[keep]]


@dataclass
class BlockSystem:
    partition: BlockPartition
    k: int
    mu: Mapping[int, int] = field(default_factory=dict)
    rates: object = None
    cap: int | None = None

    def __post_init__(self):
        self.spec: GlauberSpec = edge_spec(self.partition.tree, self.k, self.mu, self.partition.sub, self.rates)
        self.sites = self.spec.labels
        self.pos = {e: i for i, e in enumerate(self.sites)}
        self.states = enumerate_states(self.spec.adjacency, self.spec.lists, self.cap)
        self._gap_memo: dict = {}

    @property
    def tree(self) -> Tree:
        return self.partition.tree

    def block_columns(self, i: int) -> np.ndarray:
        return np.array(sorted(self.pos[e] for e in self.partition.blocks[i]), dtype=np.int64)

    def outside_columns(self, i: int) -> np.ndarray:
        inside = set(self.block_columns(i).tolist())
        return np.array([c for c in range(len(self.sites)) if c not in inside], dtype=np.int64)

    @cached_property
    def groups(self) -> list[np.ndarray]:
        """Per block: group label of each state by its colouring outside the block."""
        return [_unique_rows(self.states[:, self.outside_columns(i)])[1] for i in range(self.partition.r)]

    def block_lists(self, i: int, row: np.ndarray) -> ListAssignment:
        """Lists on block i's edges (sorted) induced by the colouring ``row`` outside it and by mu."""
        block = self.partition.blocks[i]
        full = frozenset(range(1, self.k + 1))
        lists = []
        for e in sorted(block):
            banned = set()
            for f in self.tree.edge_neighbours(e):
                if f in block:
                    continue
                if f in self.pos:
                    banned.add(int(row[self.pos[f]]))
                elif f in self.mu:
                    banned.add(self.mu[f])
            lists.append(full - banned)
        return ListAssignment(tuple(lists), self.k)

    def block_spec(self, i: int, lists: ListAssignment) -> GlauberSpec:
        edges = sorted(self.partition.blocks[i])
        adj = induced_adjacency(line_graph(self.tree), edges)
        rates = tuple(self.spec.rates[self.pos[e]] for e in edges)
        return GlauberSpec(adj, self.k, rates, lists, tuple(edges))

    def _block_report(self, i: int, lists: ListAssignment):
        key = (i, lists.lists)
        if key not in self._gap_memo:
            chain = build_glauber(self.block_spec(i, lists), self.cap)
            rep = spectral_gap(chain)
            if chain.n == 1:
                # a frozen block is given relaxation time 1 (single-colour edge convention)
                gap, tau = 1.0, 1.0
            else:
                gap, tau = rep.gap, rep.relaxation
            self._gap_memo[key] = (gap, tau, rep.ergodic, chain.n)
        return self._gap_memo[key]

    def realised_block_lists(self, i: int) -> list[ListAssignment]:
        """Distinct block list assignments over all colourings in the state space."""
        groups = self.groups[i]
        _, first = np.unique(groups, return_index=True)
        seen = {}
        for idx in first:
            L = self.block_lists(i, self.states[idx])
            seen.setdefault(L.lists, L)
        return list(seen.values())

    def check_ergodic_blocks(self) -> list[tuple[int, ListAssignment]]:
        """Block/boundary pairs whose block chain is not ergodic (empty when the assumption holds)."""
        bad = []
        for i in range(self.partition.r):
            for L in self.realised_block_lists(i):
                if not self._block_report(i, L)[2]:
                    bad.append((i, L))
        return bad

    @cached_property
    def g(self) -> tuple[float, ...]:
        return tuple(min(self._block_report(i, L)[0] for L in self.realised_block_lists(i)) for i in range(self.partition.r))

    @cached_property
    def tau_blocks(self) -> tuple[float, ...]:
        return tuple(max(self._block_report(i, L)[1] for L in self.realised_block_lists(i)) for i in range(self.partition.r))

    def _require_ergodic_blocks(self):
        bad = self.check_ergodic_blocks()
        if bad:
            i, L = bad[0]
            raise AssumptionError(f"block {sorted(self.partition.blocks[i])} is not ergodic under lists {L.to_json()}")

    def glauber_chain(self) -> FiniteChain:
        return build_glauber(self.spec, self.cap)

    def block_chain(self) -> FiniteChain:
        self._require_ergodic_blocks()
        n = len(self.states)
        rows, cols, vals = [], [], []
        for i in range(self.partition.r):
            a, b, size = _group_pairs(self.groups[i])
            rows.append(a)
            cols.append(b)
            vals.append(self.g[i] / size)
        chain = chain_from_triplets(
            n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), states=self.states, check=False
        )
        return chain

    @cached_property
    def reduced(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(interface columns, reduced states, class label of every full state)."""
        fcols = np.array(sorted(self.pos[e] for e in self.partition.interface), dtype=np.int64)
        uniq, inv = _unique_rows(self.states[:, fcols])
        return fcols, uniq, inv

    def projection(self) -> np.ndarray:
        _, uniq, inv = self.reduced
        counts = np.bincount(inv, minlength=len(uniq))
        return counts / counts.sum()

    def _projected_rates(self, i: int, rep: int) -> dict[int, float]:
        _, _, inv = self.reduced
        groups = self.groups[i]
        members = np.flatnonzero(groups == groups[rep])
        targets, counts = np.unique(inv[members], return_counts=True)
        total = counts.sum()
        here = inv[rep]
        return {int(t): self.g[i] * c / total for t, c in zip(targets, counts) if t != here}

    def reduced_chain(self, check_representatives: bool = False) -> FiniteChain:
        self._require_ergodic_blocks()
        _, uniq, inv = self.reduced
        nr = len(uniq)
        _, reps = np.unique(inv, return_index=True)
        rows, cols, vals = [], [], []
        for r in range(nr):
            for i in range(self.partition.r):
                if not self.partition.interface_edges(i):
                    continue
                out = self._projected_rates(i, reps[r])
                if check_representatives:
                    for other in np.flatnonzero(inv == r):
                        alt = self._projected_rates(i, other)
                        if alt.keys() != out.keys() or any(abs(alt[t] - out[t]) > 1e-12 for t in out):
                            raise AssertionError("projected rates depend on the representative")
                for t, v in out.items():
                    rows.append(r)
                    cols.append(t)
                    vals.append(v)
        return chain_from_triplets(
            nr, np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals),
            states=uniq, stationary=self.projection(), check=False,
        )

    def const_reduced_chain(self) -> FiniteChain:
        """Reduced state space with rate 1/tau_i for every change confined to block i's interface edge."""
        _, uniq, _ = self.reduced
        fsites = sorted(self.partition.interface)
        pos_f = {e: j for j, e in enumerate(fsites)}
        owner = {}
        for i in range(self.partition.r):
            for e in self.partition.interface_edges(i):
                owner[pos_f[e]] = i
        rows, cols, vals = [], [], []
        index = {row.tobytes(): j for j, row in enumerate(uniq)}
        for r, row in enumerate(uniq):
            for j, i in owner.items():
                for c in range(1, self.k + 1):
                    if c == row[j]:
                        continue
                    new = row.copy()
                    new[j] = c
                    t = index.get(new.tobytes())
                    if t is not None:
                        rows.append(r)
                        cols.append(t)
                        vals.append(1.0 / self.tau_blocks[i])
        return chain_from_triplets(len(uniq), np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                                   np.array(vals), states=uniq, check=False)

    @property
    def d(self) -> int:
        return self.tree.max_degree

    def block_bound(self) -> float:
        return self.d ** 3 + sum(self.tau_blocks)

    def near_uniformity(self) -> float:
        """max/min ratio of the projected stationary masses."""
        p = self.projection()
        return float(p.max() / p.min())


def block_chain(partition: BlockPartition, k: int, mu=None, rates=None) -> FiniteChain:
    return BlockSystem(partition, k, mu or {}, rates).block_chain()


def reduced_chain(partition: BlockPartition, k: int, mu=None, rates=None) -> FiniteChain:
    return BlockSystem(partition, k, mu or {}, rates).reduced_chain()


def projection_distribution(partition: BlockPartition, k: int, mu=None) -> tuple[np.ndarray, np.ndarray]:
    system = BlockSystem(partition, k, mu or {})
    return system.reduced[1], system.projection()


def block_bound(partition: BlockPartition, k: int, mu=None) -> float:
    return BlockSystem(partition, k, mu or {}).block_bound()


def reduced_detailed_balance(system: BlockSystem) -> float:
    return detailed_balance_residual(system.reduced_chain(), system.projection())


def boundary_color_probability(tree: Tree, block: SubtreeHandle, sigma: Mapping[int, int], e: int, c: int, k: int) -> float:
    """Uniform probability that edge ``e`` of ``block`` takes colour ``c`` given the outside colouring ``sigma``."""
    spec = edge_spec(tree, k, sigma, block)
    j = spec.labels.index(e)
    if c not in spec.lists[j]:
        raise ValueError(f"colour {c} is not allowed on edge {e}")
    states = enumerate_states(spec.adjacency, spec.lists)
    return float(np.mean(states[:, j] == c))


@dataclass(frozen=True)
class ConstantFactorReport:
    c: float
    k_measured: float
    tau_a: float
    tau_b: float


def constant_factor_comparison(a: FiniteChain, b: FiniteChain) -> ConstantFactorReport:
    """Compare two chains on the same states with the same transition support.

    ``c`` is the largest ratio (either direction) of stationary masses or of
    rates; ``k_measured`` the ratio of relaxation times (either direction).
    """
    oa, ob = a.off_diagonal().tocsr(), b.off_diagonal().tocsr()
    if ((oa != 0).astype(int) - (ob != 0).astype(int)).nnz:
        raise ValueError("chains have different transitions")
    ca = oa.tocoo()
    rb = np.asarray(ob[ca.row, ca.col]).ravel()
    ratios = np.r_[ca.data / rb, rb / ca.data, a.stationary / b.stationary, b.stationary / a.stationary]
    c = float(ratios.max())
    ta, tb = spectral_gap(a).relaxation, spectral_gap(b).relaxation
    return ConstantFactorReport(c, max(ta / tb, tb / ta), ta, tb)
