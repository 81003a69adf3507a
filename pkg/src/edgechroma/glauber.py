"""Glauber dynamics for (list) colourings: exact chains, simulation, site deletion."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Iterable, Mapping, Sequence

import numpy as np

from .chain import FiniteChain, chain_from_triplets
from .coloring import Coloring, ListAssignment, enumerate_states, induced_lists, is_proper
from .graph_core import Adjacency, SubtreeHandle, Tree, induced_adjacency, line_graph

Rate = Fraction | float


def _as_rate(x) -> Rate:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return float(x)


@dataclass(frozen=True)
class GlauberSpec:
    """Site graph, colour count, per-site rates p_i and lists.

    ``labels`` names the sites for output (edge ids for edge dynamics).
    """

    adjacency: Adjacency
    k: int
    rates: tuple[Rate, ...]
    lists: ListAssignment
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        n = len(self.adjacency)
        if len(self.rates) != n or len(self.lists) != n:
            raise ValueError("rates and lists must cover every site")
        if any(not r > 0 for r in self.rates):
            raise ValueError("site rates must be strictly positive")
        if self.lists.k != self.k:
            raise ValueError("list assignment uses a different number of colours")

    @property
    def n(self) -> int:
        return len(self.adjacency)

    def label(self, i: int) -> int:
        return self.labels[i] if self.labels is not None else i

    @classmethod
    def make(cls, adjacency: Adjacency, k: int, rates=None, lists: ListAssignment | None = None, labels=None):
        n = len(adjacency)
        lists = lists if lists is not None else ListAssignment.full(n, k)
        return cls(tuple(adjacency), k, resolve_rates(rates, n, k, labels), lists, labels)


def resolve_rates(rates, n: int, k: int, labels: Sequence[int] | None = None) -> tuple[Rate, ...]:
    """Normalise a rate argument: None (1/k each), a scalar, a sequence, or a label -> rate map."""
    if rates is None:
        return tuple(Fraction(1, k) for _ in range(n))
    if isinstance(rates, (Real, Fraction, str)):
        return tuple(_as_rate(rates) for _ in range(n))
    if isinstance(rates, Mapping):
        labels = list(range(n)) if labels is None else list(labels)
        default = rates.get("default", Fraction(1, k))
        out = []
        for lab in labels:
            r = rates.get(lab, rates.get(str(lab), default))
            out.append(_as_rate(r))
        return tuple(out)
    rates = [_as_rate(r) for r in rates]
    if len(rates) != n:
        raise ValueError(f"expected {n} rates, got {len(rates)}")
    return tuple(rates)


def _state_codes(states: np.ndarray, k: int) -> np.ndarray | None:
    n = states.shape[1]
    if n * math.log2(k) > 62:
        return None
    weights = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (states.astype(np.int64) - 1) @ weights


def single_site_moves(states: np.ndarray, adj: Adjacency, lists: ListAssignment) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All proper single-site recolourings as (from index, to index, site) arrays."""
    k = lists.k
    n = states.shape[1]
    codes = _state_codes(states, k)
    lookup = None
    if codes is None:
        lookup = {row.tobytes(): i for i, row in enumerate(states)}
    rows, cols, sites = [], [], []
    for i in range(n):
        place = k ** (n - 1 - i) if codes is not None else 0
        cur = states[:, i]
        for c in sorted(lists[i]):
            ok = cur != c
            for u in adj[i]:
                ok &= states[:, u] != c
            src = np.nonzero(ok)[0]
            if not len(src):
                continue
            if codes is not None:
                target = codes[src] + (c - cur[src].astype(np.int64)) * place
                dst = np.searchsorted(codes, target)
            else:
                dst = np.empty(len(src), dtype=np.int64)
                for m, s in enumerate(src):
                    row = states[s].copy()
                    row[i] = c
                    dst[m] = lookup[row.tobytes()]
            rows.append(src)
            cols.append(dst)
            sites.append(np.full(len(src), i, dtype=np.int64))
    if not rows:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(sites)


def build_glauber(spec: GlauberSpec, cap: int | None = None) -> FiniteChain:
    """Exact continuous-time Glauber chain: rate p_i between colourings differing only at site i."""
    states = enumerate_states(spec.adjacency, spec.lists, cap)
    if len(states) == 0:
        raise ValueError("no proper colouring satisfies the lists")
    rows, cols, sites = single_site_moves(states, spec.adjacency, spec.lists)
    rates = np.array([float(r) for r in spec.rates])[sites] if len(sites) else np.zeros(0)
    num = den = None
    if all(isinstance(r, Fraction) for r in spec.rates):
        den = math.lcm(*(r.denominator for r in spec.rates))
        per_site = np.array([r.numerator * (den // r.denominator) for r in spec.rates], dtype=np.int64)
        num = per_site[sites]
    chain = chain_from_triplets(
        len(states), rows, cols, rates, states=states, numerators=num, denominator=den, check=False
    )
    chain.meta.update(sites=spec.labels, k=spec.k)
    return chain


def edge_spec(
    tree: Tree,
    k: int,
    mu: Mapping[int, int] | None = None,
    sub: SubtreeHandle | None = None,
    rates=None,
) -> GlauberSpec:
    """Glauber spec for edge colourings of ``sub`` (default: whole tree) under boundary ``mu``."""
    sub = sub if sub is not None else tree.whole()
    sites, lists = induced_lists(tree, sub, mu or {}, k)
    adj = induced_adjacency(line_graph(tree), sites)
    return GlauberSpec(adj, k, resolve_rates(rates, len(sites), k, sites), lists, sites)


def build_edge_glauber(tree: Tree, k: int, mu=None, sub: SubtreeHandle | None = None, rates=None, cap=None) -> FiniteChain:
    return build_glauber(edge_spec(tree, k, mu, sub, rates), cap)


@dataclass
class Trajectory:
    seed: int
    replica: int
    events: list[tuple[float, int, int]]
    final: Coloring
    attempts: int
    horizon: float
    labels: tuple[int, ...] | None = field(default=None, repr=False)

    def to_jsonl(self) -> str:
        lab = self.labels
        lines = [
            json.dumps({"t": t, "site": (lab[s] if lab else s), "colour": c}) for t, s, c in self.events
        ]
        return "".join(line + "\n" for line in lines)


def _rng(seed: int, replica: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replica)])))


def _run(spec: GlauberSpec, start: Sequence[int], horizon: float, rng: np.random.Generator,
         sample_times: np.ndarray | None = None, record: bool = True):
    """Event-driven loop with one global clock; returns (events, final, attempts, samples)."""
    n = spec.n
    k = spec.k
    p = np.array([float(r) for r in spec.rates])
    total = k * p.sum()
    cdf = np.cumsum(p) / p.sum()
    adj = spec.adjacency
    lists = spec.lists.lists
    state = list(int(c) for c in start)
    events: list[tuple[float, int, int]] = []
    samples = None
    next_sample = 0
    if sample_times is not None:
        samples = np.empty((len(sample_times), n), dtype=np.uint8)
    t = 0.0
    attempts = 0
    batch = 4096
    while True:
        gaps = rng.standard_exponential(batch) / total
        picks = np.searchsorted(cdf, rng.random(batch), side="right")
        np.minimum(picks, n - 1, out=picks)
        colours = rng.integers(1, k + 1, size=batch)
        for step in range(batch):
            t_next = t + gaps[step]
            if samples is not None:
                while next_sample < len(sample_times) and sample_times[next_sample] < t_next:
                    if sample_times[next_sample] > horizon:
                        break
                    samples[next_sample] = state
                    next_sample += 1
            if t_next > horizon:
                if samples is not None:
                    samples = samples[:next_sample]
                return events, state, attempts, samples
            t = t_next
            attempts += 1
            i = int(picks[step])
            c = int(colours[step])
            if c == state[i] or c not in lists[i]:
                continue
            if any(state[u] == c for u in adj[i]):
                continue
            state[i] = c
            if record:
                events.append((t, i, c))


def _check_start(spec: GlauberSpec, start) -> tuple[int, ...]:
    colours = tuple(int(c) for c in (start.colours if isinstance(start, Coloring) else start))
    if len(colours) != spec.n or not is_proper(spec.adjacency, colours):
        raise ValueError("start colouring is not proper")
    if any(c not in spec.lists[i] for i, c in enumerate(colours)):
        raise ValueError("start colouring violates the lists")
    return colours


def simulate(spec: GlauberSpec, start, horizon: float, seed: int, replica: int = 0) -> Trajectory:
    """Simulate up to ``horizon``; only accepted recolourings are recorded."""
    colours = _check_start(spec, start)
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    events, final, attempts, _ = _run(spec, colours, float(horizon), _rng(seed, replica))
    return Trajectory(seed, replica, events, Coloring(tuple(final), spec.k), attempts, float(horizon), spec.labels)


def sample_states(spec: GlauberSpec, start, times: Iterable[float], seed: int, replica: int = 0) -> np.ndarray:
    """Colourings of one trajectory observed at the (sorted) ``times``."""
    colours = _check_start(spec, start)
    times = np.asarray(sorted(times), dtype=float)
    horizon = float(times[-1]) if len(times) else 0.0
    _, _, _, samples = _run(spec, colours, horizon + 1e-12, _rng(seed, replica), times, record=False)
    return samples


def _missing_edges(adj: Adjacency, nodes: Sequence[int]) -> int:
    nodes = list(nodes)
    missing = 0
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            if nodes[b] not in adj[nodes[a]]:
                missing += 1
    return missing


def restrict_spec(spec: GlauberSpec, keep: Sequence[int]) -> GlauberSpec:
    keep = list(keep)
    adj = induced_adjacency(spec.adjacency, keep)
    lists = ListAssignment(tuple(spec.lists[i] for i in keep), spec.k)
    labels = tuple(spec.label(i) for i in keep)
    return GlauberSpec(adj, spec.k, tuple(spec.rates[i] for i in keep), lists, labels)


def delete_clique_neighbour(spec: GlauberSpec, v: int) -> GlauberSpec:
    """Drop site ``v`` whose neighbourhood is a clique of size at most k - 2."""
    nb = spec.adjacency[v]
    if _missing_edges(spec.adjacency, nb):
        raise ValueError(f"neighbourhood of site {v} is not a clique")
    if len(nb) > spec.k - 2:
        raise ValueError(f"neighbourhood of site {v} has {len(nb)} > k - 2 sites")
    if len(spec.lists[v]) != spec.k:
        raise ValueError(f"site {v} must have the full colour list")
    return restrict_spec(spec, [i for i in range(spec.n) if i != v])


def generalized_mono_factor(spec: GlauberSpec, v: int) -> float:
    """(1 + f/(k - d)) for a neighbourhood of d sites missing f clique edges."""
    nb = spec.adjacency[v]
    d = len(nb)
    if spec.k <= d:
        raise ValueError("need k > |N(v)|")
    return 1.0 + _missing_edges(spec.adjacency, nb) / (spec.k - d)


def greedy_colouring(spec: GlauberSpec) -> Coloring:
    """Smallest admissible colour site by site in breadth-first order (always succeeds on tree line graphs)."""
    order = []
    seen = [False] * spec.n
    for s in range(spec.n):
        if seen[s]:
            continue
        seen[s] = True
        queue = [s]
        while queue:
            x = queue.pop(0)
            order.append(x)
            for y in spec.adjacency[x]:
                if not seen[y]:
                    seen[y] = True
                    queue.append(y)
    colours: list[int | None] = [None] * spec.n
    for x in order:
        used = {colours[y] for y in spec.adjacency[x]}
        free = [c for c in sorted(spec.lists[x]) if c not in used]
        if not free:
            raise ValueError(f"greedy colouring got stuck at site {spec.label(x)}")
        colours[x] = free[0]
    return Coloring(tuple(colours), spec.k)
