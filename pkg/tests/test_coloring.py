import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import connected_edge_subsets, path_tree, random_trees, spider_tree
from edgechroma.coloring import (
    CapExceeded,
    ListAssignment,
    biclique_count_bounds,
    classify_feasibility,
    clique_count_bounds,
    count_biclique_colorings,
    count_clique_colorings,
    enumerate_colorings,
    enumerate_states,
    induced_lists,
    is_proper,
)
from edgechroma.graph_core import (
    biclique_adjacency,
    complete_adjacency,
    induced_adjacency,
    line_graph,
    regularise,
    tree_from_edges,
)


def full(d):
    return frozenset(range(1, d + 2))


def test_is_proper_on_line_graph_edge():
    adj = ((1,), (0,))
    assert is_proper(adj, (1, 2))
    assert not is_proper(adj, (1, 1))


def test_is_proper_on_triangle():
    assert is_proper(complete_adjacency(3), (1, 2, 3))


def test_induced_list_of_middle_edge():
    t = path_tree(4)
    sites, L = induced_lists(t, t.subtree([1]), {0: 1, 2: 2}, 3)
    assert sites == (1,)
    assert L[0] == {3}


def test_induced_lists_of_whole_tree_are_full():
    t = spider_tree()
    _, L = induced_lists(t, t.whole(), None, 4)
    assert all(x == frozenset(range(1, 5)) for x in L.lists)


def test_induced_lists_on_regular_spider_leg():
    t = regularise(spider_tree(), 3)
    e_in, e_out = t.edge_between("c", "l0_0"), t.edge_between("l0_0", "l0_1")
    leg = [e_in, e_out] + [e for e in range(t.m) if e not in (e_in, e_out) and t.names[t.edges[e][0]] == "l0_0"]
    mu = {t.edge_between("c", "l1_0"): 1, t.edge_between("c", "l2_0"): 2}
    sites, L = induced_lists(t, t.subtree(leg), mu, 4)
    lists = dict(zip(sites, L.lists))
    assert lists[e_in] == {3, 4}
    assert lists[e_out] == {1, 2, 3, 4}


def test_induced_lists_need_exterior_colours():
    t = path_tree(4)
    with pytest.raises(ValueError, match="uncoloured"):
        induced_lists(t, t.subtree([1]), {0: 1}, 3)


def test_feasibility_all_free():
    fc = classify_feasibility(ListAssignment((full(3),) * 3, 4), 3)
    assert (fc.kind, fc.t) == ("clique", 0)


def test_feasibility_one_short_list():
    fc = classify_feasibility(ListAssignment((frozenset({1, 2}), full(3), full(3)), 4), 3)
    assert (fc.kind, fc.t) == ("clique", 1)


def test_feasibility_two_short_lists_of_size_two():
    fc = classify_feasibility(ListAssignment((frozenset({1, 2}),) * 2 + (full(3),), 4), 3)
    assert fc.t == 2
    assert not fc.feasible


def test_enumerate_free_clique():
    assert len(enumerate_colorings(complete_adjacency(3), ListAssignment.full(3, 4))) == 24


def test_enumerate_clique_with_one_short_list_meets_both_bounds():
    L = ListAssignment((frozenset({1, 2}), full(3), full(3)), 4)
    assert len(enumerate_colorings(complete_adjacency(3), L)) == 12
    assert clique_count_bounds(L, 3) == (12, 12)


def test_enumerate_path_line_graph():
    t = path_tree(4)
    assert len(enumerate_colorings(line_graph(t), ListAssignment.full(3, 3))) == 12


def test_enumeration_respects_cap():
    with pytest.raises(CapExceeded):
        enumerate_states(complete_adjacency(5), ListAssignment.full(5, 6), cap=10)


def test_enumeration_cap_from_environment(monkeypatch):
    monkeypatch.setenv("EDGECHROMA_CAP", "5")
    with pytest.raises(CapExceeded):
        enumerate_states(complete_adjacency(3), ListAssignment.full(3, 4))


# counting bounds

@st.composite
def clique_lists(draw, max_d=6):
    d = draw(st.integers(2, max_d))
    k = d + 1
    t = draw(st.integers(0, min(d - 1, 3)))
    lists = []
    for i in range(d):
        if i < t:
            size = draw(st.integers(t + 1, d))
            lists.append(frozenset(draw(st.permutations(range(1, k + 1)))[:size]))
        else:
            lists.append(frozenset(range(1, k + 1)))
    return d, ListAssignment(tuple(lists), k)


@settings(max_examples=80, deadline=None)
@given(clique_lists())
def test_clique_count_within_bounds(case):
    d, L = case
    fc = classify_feasibility(L, d)
    if not fc.feasible:
        return
    lo, hi = clique_count_bounds(L, d)
    n = count_clique_colorings(L)
    assert lo <= n <= hi
    if d <= 4:
        assert n == len(enumerate_states(complete_adjacency(d), L))


@st.composite
def biclique_lists(draw, max_d=5):
    d = draw(st.integers(2, max_d))
    k = d + 1
    lists = [frozenset(range(1, k + 1))]
    tx = draw(st.integers(1, d - 1))
    ty = draw(st.integers(1, d - 1))
    t = tx + ty
    for side_t in (tx, ty):
        for i in range(d - 1):
            if i < side_t:
                size = draw(st.integers(min(t, k), k))
                lists.append(frozenset(draw(st.permutations(range(1, k + 1)))[:size]))
            else:
                lists.append(frozenset(range(1, k + 1)))
    return d, ListAssignment(tuple(lists), k)


@settings(max_examples=80, deadline=None)
@given(biclique_lists())
def test_biclique_count_within_bounds(case):
    d, L = case
    if not classify_feasibility(L, d, biclique=True).feasible:
        return
    lo, hi = biclique_count_bounds(L, d)
    n = count_biclique_colorings(L, d)
    assert lo <= n <= hi
    if d <= 4:
        assert n == len(enumerate_states(biclique_adjacency(d), L))


def _direct_extensions(tree, sub, mu, k):
    """Brute force over colourings of the edges in ``sub`` given colours outside."""
    sites = sorted(sub)
    out = []
    for colours in itertools.product(range(1, k + 1), repeat=len(sites)):
        c = dict(mu)
        c.update(zip(sites, colours))
        if all(c[e] != c[f] for e in sites for f in tree.edge_neighbours(e) if f in c):
            out.append(colours)
    return sorted(out)


@settings(max_examples=25, deadline=None)
@given(random_trees(min_vertices=3, max_vertices=7), st.integers(1, 2), st.integers(0, 2**16))
def test_induced_lists_reproduce_conditional_colourings(tree, extra, salt):
    k = min(tree.max_degree + extra, 5)
    whole = enumerate_states(line_graph(tree), ListAssignment.full(tree.m, k))
    rows = whole[salt % len(whole)]
    for sub in connected_edge_subsets(tree, max_size=4):
        handle = tree.subtree(sub)
        mu = {e: int(rows[e]) for e in range(tree.m) if e not in sub}
        sites, L = induced_lists(tree, handle, mu, k)
        got = enumerate_states(induced_adjacency(line_graph(tree), sites), L)
        assert sorted(map(tuple, got.tolist())) == _direct_extensions(tree, sub, mu, k)


def test_counts_match_closed_form_free_clique():
    for d in range(2, 7):
        assert count_clique_colorings(ListAssignment.full(d, d + 1)) == math.factorial(d + 1)


def test_tree_from_edges_accepts_ints():
    assert tree_from_edges([(0, 1), (1, 2)]).m == 2
