import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import strategies as st

from edgechroma.chain import spectral_gap
from edgechroma.graph_core import parse_tree, tree_from_edges


def tree_text(*pairs: str) -> str:
    return "\n".join(pairs)


def path_tree(n_vertices: int):
    return tree_from_edges((f"v{i}", f"v{i + 1}") for i in range(n_vertices - 1))


def star_tree(leaves: int):
    return tree_from_edges(("c", f"x{i}") for i in range(leaves))


def spider_tree(legs: int = 3, length: int = 2):
    pairs = []
    for leg in range(legs):
        prev = "c"
        for j in range(length):
            cur = f"l{leg}_{j}"
            pairs.append((prev, cur))
            prev = cur
    return tree_from_edges(pairs)


def tau(chain) -> float:
    return spectral_gap(chain).relaxation


@st.composite
def random_trees(draw, min_vertices: int = 2, max_vertices: int = 9):
    """Labelled trees decoded from a drawn Pruefer sequence."""
    n = draw(st.integers(min_vertices, max_vertices))
    if n == 2:
        return tree_from_edges([(0, 1)])
    seq = draw(st.lists(st.integers(0, n - 1), min_size=n - 2, max_size=n - 2))
    g = nx.from_prufer_sequence(seq)
    return tree_from_edges(sorted(g.edges()))


def connected_edge_subsets(tree, max_size: int | None = None):
    lg = nx.Graph()
    lg.add_nodes_from(range(tree.m))
    lg.add_edges_from((e, f) for e in range(tree.m) for f in tree.edge_neighbours(e) if f > e)
    top = tree.m if max_size is None else min(max_size, tree.m)
    for r in range(1, top + 1):
        for subset in itertools.combinations(range(tree.m), r):
            if nx.is_connected(lg.subgraph(subset)):
                yield subset


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


__all__ = ["ACCEPTANCE", "record_criterion", "parse_tree", "tree_text", "path_tree", "star_tree", "spider_tree", "tau", "random_trees",
           "connected_edge_subsets"]
