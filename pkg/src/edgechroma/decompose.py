"""Recursive splitting of a splitting subtree into halves, and the bound it certifies.

One step takes a splitting subtree with m > 1 edges and applies the block
partition (vertex- or edge-rooted) up to three times, nested, until every
piece is splitting and has at most ceil(m/2) edges.  The case analysis
follows the balanced vertex ``v`` and the interior boundary of the input.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .block_dynamics import BlockSystem, partition_at
from .chain import spectral_gap
from .coloring import enumerate_states
from .glauber import GlauberSpec, delete_clique_neighbour, edge_spec
from .graph_core import SubtreeHandle, Tree, boundary, find_balanced_root, is_splitting, regularise

MAX_APPLICATIONS = 3


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class Application:
    """One use of the block partition: ``subtree`` rooted at ``root`` gives ``blocks``."""

    subtree: SubtreeHandle
    root: tuple[str, int]
    blocks: tuple[frozenset[int], ...]

    def to_json(self, tree: Tree) -> dict:
        kind, x = self.root
        label = tree.names[x] if kind == "vertex" else x
        return {"root": [kind, label], "blocks": [sorted(b) for b in self.blocks]}


@dataclass(frozen=True)
class SplitStep:
    input: SubtreeHandle
    case: str
    applications: tuple[Application, ...]
    outputs: tuple[SubtreeHandle, ...]

    @property
    def lemma_applications(self) -> int:
        return len(self.applications)

    @property
    def roots_used(self) -> list[tuple[str, int]]:
        return [a.root for a in self.applications]

    def nested(self, block: frozenset[int]) -> Application | None:
        """The application splitting ``block`` further inside this step, if any."""
        for a in self.applications:
            if a.subtree.edges == block:
                return a
        return None

    def output_depths(self) -> dict[frozenset[int], int]:
        """Number of applications on the way from the input to each output."""
        depth = {}

        def walk(app: Application, level: int):
            for b in app.blocks:
                inner = self.nested(b)
                if inner is None:
                    depth[b] = level
                else:
                    walk(inner, level + 1)

        walk(self.applications[0], 1)
        return depth

    def to_json(self, tree: Tree) -> dict:
        return {
            "m": self.input.m,
            "case": self.case,
            "lemma_applications": self.lemma_applications,
            "applications": [a.to_json(tree) for a in self.applications],
            "outputs": [sorted(o.edges) for o in self.outputs],
        }


@dataclass
class DecompositionTree:
    sub: SubtreeHandle
    step: SplitStep | None = None
    children: list["DecompositionTree"] = field(default_factory=list)

    @property
    def is_leaf(self) -> bool:
        return self.step is None

    @property
    def depth(self) -> int:
        """Number of split steps along the longest root-to-leaf path."""
        return 0 if self.is_leaf else 1 + max(c.depth for c in self.children)

    @property
    def lemma_depth(self) -> int:
        """Block-partition applications along the longest root-to-leaf path."""
        if self.is_leaf:
            return 0
        depths = self.step.output_depths()
        return max(depths[c.sub.edges] + c.lemma_depth for c in self.children)

    def steps(self):
        if self.step is not None:
            yield self.step
            for c in self.children:
                yield from c.steps()

    def leaves(self):
        if self.is_leaf:
            yield self.sub
        for c in self.children:
            yield from c.leaves()

    def to_json(self, tree: Tree) -> dict:
        out = {"edges": sorted(self.sub.edges)}
        if self.step is not None:
            out["step"] = self.step.to_json(tree)
            out["children"] = [c.to_json(tree) for c in self.children]
        return out


# ---------------------------------------------------------------------------
# the splitting step


def _apply(tree: Tree, sub: SubtreeHandle, root: tuple[str, int]) -> Application | None:
    """Partition ``sub`` at ``root`` if that is legal and every block is splitting."""
    try:
        part = partition_at(tree, sub, root, require_splitting=False)
    except ValueError:
        return None
    if not all(is_splitting(tree, h) for h in part.block_handles()):
        return None
    return Application(sub, root, part.blocks)


def _edge_at(tree: Tree, part: frozenset[int], v: int) -> int:
    (e,) = [e for e in tree.incident(v) if e in part]
    return e


def _splitting(tree: Tree, edges: frozenset[int]) -> bool:
    return is_splitting(tree, SubtreeHandle(tree, edges))


def _centre_split(tree: Tree, sub: SubtreeHandle, c: int) -> tuple[str, list[Application]] | None:
    """Case 1 / case 2 logic at ``c``: vertex root if every hanging part splits, else edge root."""
    parts = sub.hanging(c)
    bad = [p for p in parts if not _splitting(tree, p)]
    if not bad:
        app = _apply(tree, sub, ("vertex", c))
        return ("1", [app]) if app else None
    if len(bad) == 1:
        app = _apply(tree, sub, ("edge", _edge_at(tree, bad[0], c)))
        return ("2", [app]) if app else None
    return None


def _path_split(tree: Tree, sub: SubtreeHandle, c: int, e: int, f: int) -> tuple[str, list[Application]] | None:
    """Case 3 logic at ``c``, which separates the boundary edges e < f."""
    parts = sub.hanging(c)
    t1 = next(p for p in parts if e in p)
    t2 = next(p for p in parts if f in p)
    ns1, ns2 = not _splitting(tree, t1), not _splitting(tree, t2)
    if not ns1 and not ns2:
        app = _apply(tree, sub, ("vertex", c))
        return ("3-vertex", [app]) if app else None
    if ns1 != ns2:
        target = t1 if ns1 else t2
        app = _apply(tree, sub, ("edge", _edge_at(tree, target, c)))
        return ("3a", [app]) if app else None
    e1 = _edge_at(tree, t1, c)
    v1 = tree.other_end(e1, c)
    first = _apply(tree, sub, ("vertex", v1))
    if first is None:
        return None
    inner = next(b for b in first.blocks if e1 in b)
    second = _apply(tree, SubtreeHandle(tree, inner), ("edge", _edge_at(tree, t2, c)))
    if second is None:
        return None
    return "3b", [first, second]


def _closest_on_path(sub: SubtreeHandle, v: int, path: list[int]) -> int:
    tree = sub.tree
    target = set(path)
    seen = {v}
    queue = deque([v])
    while queue:
        x = queue.popleft()
        if x in target:
            return x
        for g in tree.incident(x):
            if g in sub.edges:
                y = tree.other_end(g, x)
                if y not in seen:
                    seen.add(y)
                    queue.append(y)
    raise AssertionError("boundary path is not reachable")


def _outputs(apps: list[Application]) -> list[frozenset[int]]:
    split_further = {a.subtree.edges for a in apps[1:]}
    out = []
    for a in apps:
        out.extend(b for b in a.blocks if b not in split_further)
    return out


def _literal_step(tree: Tree, sub: SubtreeHandle) -> tuple[str, list[Application]] | None:
    v = find_balanced_root(sub)
    interior = sorted(boundary(tree, sub).interior)
    parts = sub.hanging(v)
    if all(_splitting(tree, p) for p in parts):
        res = _centre_split(tree, sub, v)
        return res
    if len(interior) == 1:
        return _centre_split(tree, sub, v)
    if len(interior) != 2:
        return None
    e, f = interior
    pe = next(i for i, p in enumerate(parts) if e in p)
    pf = next(i for i, p in enumerate(parts) if f in p)
    if pe != pf:
        return _path_split(tree, sub, v, e, f)
    # case 4: split at the path vertex nearest v, then split the piece holding v at v
    v2 = _closest_on_path(sub, v, sub.path_vertices(e, f))
    res = _path_split(tree, sub, v2, e, f)
    if res is None:
        return None
    _, apps = res
    limit = math.ceil(sub.m / 2)
    holder = [b for b in _outputs(apps) if v in SubtreeHandle(tree, b).vertices()]
    big = [b for b in holder if len(b) > limit]
    if big:
        piece = SubtreeHandle(tree, big[0])
        if piece.local_degree(v) < 2:
            return None
        last = _centre_split(tree, piece, v)
        if last is None:
            return None
        apps = apps + last[1]
    return "4", apps


def _roots(tree: Tree, sub: SubtreeHandle) -> list[tuple[str, int]]:
    out = [("vertex", v) for v in sorted(sub.internal())]
    out += [("edge", e) for e in sub.sorted_edges]
    return out


def _search(tree: Tree, sub: SubtreeHandle, limit: int, budget: int) -> list[Application] | None:
    """Smallest nested set of applications whose outputs are all splitting and small enough."""
    for allowed in range(1, budget + 1):
        found = _search_at(tree, sub, limit, allowed)
        if found is not None:
            return found
    return None


def _search_at(tree: Tree, sub: SubtreeHandle, limit: int, budget: int) -> list[Application] | None:
    if budget <= 0:
        return None
    for root in _roots(tree, sub):
        app = _apply(tree, sub, root)
        if app is None:
            continue
        big = [b for b in app.blocks if len(b) > limit]
        if not big:
            return [app]
        if budget == 1:
            continue
        apps = [app]
        left = budget - 1
        for b in big:
            inner = _search_at(tree, SubtreeHandle(tree, b), limit, left)
            if inner is None:
                apps = None
                break
            left -= len(inner)
            apps.extend(inner)
        if apps is not None:
            return apps
    return None


def check_step(tree: Tree, step: SplitStep) -> None:
    """Raise if a step breaks an invariant: sizes, splitting outputs, partition, application count."""
    limit = math.ceil(step.input.m / 2)
    if step.lemma_applications > MAX_APPLICATIONS:
        raise SplitError(f"step used {step.lemma_applications} applications")
    covered = [e for o in step.outputs for e in o.edges]
    if sorted(covered) != sorted(step.input.edges):
        raise SplitError("outputs do not partition the input edges")
    for a in step.applications:
        for b in a.blocks:
            if not _splitting(tree, b):
                raise SplitError(f"block {sorted(b)} is not splitting")
    for o in step.outputs:
        if o.m > limit:
            raise SplitError(f"output {sorted(o.edges)} has more than {limit} edges")


def split_once(tree: Tree, sub: SubtreeHandle) -> SplitStep:
    """One step of the splitting procedure on a splitting subtree with more than one edge."""
    if sub.m <= 1:
        raise SplitError("cannot split a single edge")
    if not is_splitting(tree, sub):
        raise SplitError("input subtree is not splitting")
    res = _literal_step(tree, sub)
    step = None
    if res is not None and all(a is not None for a in res[1]):
        case, apps = res
        step = SplitStep(sub, case, tuple(apps), tuple(SubtreeHandle(tree, b) for b in _outputs(apps)))
        try:
            check_step(tree, step)
        except SplitError:
            step = None
    if step is None:
        apps = _search(tree, sub, math.ceil(sub.m / 2), MAX_APPLICATIONS)
        if apps is None:
            raise SplitError(f"no split within {MAX_APPLICATIONS} applications for {sorted(sub.edges)}")
        step = SplitStep(sub, "fallback", tuple(apps), tuple(SubtreeHandle(tree, b) for b in _outputs(apps)))
        check_step(tree, step)
    return step


def decompose(tree: Tree, sub: SubtreeHandle | None = None) -> DecompositionTree:
    sub = sub if sub is not None else tree.whole()
    if sub.m == 1:
        return DecompositionTree(sub)
    step = split_once(tree, sub)
    return DecompositionTree(sub, step, [decompose(tree, o) for o in step.outputs])


# ---------------------------------------------------------------------------
# bounds


def leaf_bound(k: int) -> float:
    """Relaxation time of one edge with at least two admissible colours is at most k/2."""
    return k / 2


@dataclass(frozen=True)
class BoundReport:
    bound: float
    K: float
    d: int
    k: int
    K_measured: float | None = None
    samples: int = 0

    def to_json(self) -> dict:
        return {"bound": self.bound, "K": self.K, "K_measured": self.K_measured, "d": self.d, "k": self.k,
                "samples": self.samples}


def _node_bound(dtree: DecompositionTree, K: float, d: int, k: int) -> float:
    if dtree.is_leaf:
        return leaf_bound(k)
    step = dtree.step
    child = {c.sub.edges: _node_bound(c, K, d, k) for c in dtree.children}

    def app_bound(app: Application) -> float:
        total = 0.0
        for b in app.blocks:
            inner = step.nested(b)
            total += app_bound(inner) if inner is not None else child[b]
        return K * (d ** 3 + total)

    return app_bound(step.applications[0])


def measure_block_constant(tree: Tree, dtree: DecompositionTree, k: int, mu: Mapping[int, int] | None = None,
                           state_limit: int = 20_000, boundary_limit: int = 4) -> tuple[float | None, int]:
    """Largest observed tau(L) / (d^3 + sum tau_i) over applications on enumerable pieces.

    Boundary colourings of each piece are the distinct restrictions of colourings
    of the decomposed subtree (first ``boundary_limit`` in lexicographic order).
    """
    mu = dict(mu or {})
    spec = edge_spec(tree, k, mu, dtree.sub)
    try:
        states = enumerate_states(spec.adjacency, spec.lists, state_limit)
    except Exception:
        return None, 0
    pos = {e: i for i, e in enumerate(spec.labels)}
    worst = None
    samples = 0
    for step in dtree.steps():
        for app in step.applications:
            ext = sorted(e for e in boundary(tree, app.subtree).exterior if e in pos)
            if ext:
                restr = np.unique(states[:, [pos[e] for e in ext]], axis=0)[:boundary_limit]
            else:
                restr = np.zeros((1, 0), dtype=states.dtype)
            for row in restr:
                local = dict(mu)
                local.update({e: int(c) for e, c in zip(ext, row)})
                part = partition_at(tree, app.subtree, app.root)
                system = BlockSystem(part, k, local)
                rep = spectral_gap(system.glauber_chain())
                tau = 0.0 if rep.n_states == 1 else rep.relaxation
                ratio = tau / system.block_bound()
                worst = ratio if worst is None else max(worst, ratio)
                samples += 1
    return worst, samples


def certified_bound(tree: Tree, dtree: DecompositionTree, k: int, K: float | None = None, mu=None,
                    state_limit: int = 20_000) -> BoundReport:
    """Nested bound K(d^3 + sum of child bounds) per application, k/2 at single edges.

    Without an explicit ``K`` the constant is measured on enumerable pieces and
    floored at 1.
    """
    d = tree.max_degree
    measured, samples = None, 0
    if K is None:
        measured, samples = measure_block_constant(tree, dtree, k, mu, state_limit)
        K = max(1.0, measured or 0.0)
    return BoundReport(_node_bound(dtree, K, d, k), K, d, k, measured, samples)


# ---------------------------------------------------------------------------
# reduction of a bounded-degree tree to a regular one


@dataclass(frozen=True)
class RegularisationPlan:
    original: Tree
    regular: Tree
    d: int
    schedule: tuple[int, ...]

    def to_json(self) -> dict:
        return {"d": self.d, "added_edges": len(self.schedule), "schedule": list(self.schedule)}


def regularise_and_reduce(tree: Tree, k: int) -> RegularisationPlan:
    """Pad to a (k-1)-regular tree and check that every padding edge can be deleted again.

    Each deletion removes a site whose line-graph neighbourhood is a clique of
    at most k - 2 sites with the full colour list, so relaxation time can only
    grow when passing to the padded tree.
    """
    if k <= tree.max_degree:
        raise ValueError(f"need k > max degree ({tree.max_degree}), got k = {k}")
    d = k - 1
    regular = regularise(tree, d)
    spec: GlauberSpec = edge_spec(regular, k)
    schedule = tuple(sorted(regular.synthetic - tree.synthetic, reverse=True))
    for e in schedule:
        spec = delete_clique_neighbour(spec, spec.labels.index(e))
    if sorted(spec.labels) != list(range(tree.m)):
        raise AssertionError("deleting the padding edges did not recover the original edges")
    return RegularisationPlan(tree, regular, d, schedule)
