import math

import networkx as nx
import pytest
from hypothesis import given, settings

from conftest import connected_edge_subsets, path_tree, random_trees, spider_tree, star_tree
from edgechroma.graph_core import (
    TreeError,
    boundary,
    find_balanced_root,
    is_splitting,
    line_graph,
    parse_tree,
    regularise,
)


# parsing

def test_parse_path_on_three_vertices():
    t = parse_tree("a b\nb c")
    assert (t.n, t.m) == (3, 2)
    assert dict(zip(t.names, t.degree)) == {"a": 1, "b": 2, "c": 1}


def test_parse_rejects_cycle():
    with pytest.raises(TreeError, match="cycle"):
        parse_tree("a b\nb c\nc a")


def test_parse_rejects_disconnected():
    with pytest.raises(TreeError, match="disconnected"):
        parse_tree("a b\nc d")


def test_parse_json_form_matches_text_form():
    assert parse_tree('{"edges": [["a", "b"], ["b", "c"]]}') == parse_tree("a b\nb c")


def test_parse_error_carries_record():
    with pytest.raises(TreeError) as info:
        parse_tree("a b\nb c d")
    assert info.value.lineno == 2


# line graph

def test_line_graph_of_path_on_three_vertices():
    assert line_graph(parse_tree("a b\nb c")) == ((1,), (0,))


def test_line_graph_of_star_is_triangle():
    assert line_graph(star_tree(3)) == ((1, 2), (0, 2), (0, 1))


def test_line_graph_of_path_on_four_vertices():
    assert line_graph(path_tree(4)) == ((1,), (0, 2), (1,))


@given(random_trees())
def test_line_graph_is_union_of_vertex_cliques(tree):
    adj = line_graph(tree)
    g = nx.Graph()
    g.add_nodes_from(range(tree.m))
    g.add_edges_from((e, f) for e in range(tree.m) for f in adj[e])
    assert nx.is_chordal(g)
    cliques = [set(tree.incident(v)) for v in range(tree.n) if tree.degree[v] >= 2]
    covered = set()
    for c in cliques:
        pairs = {frozenset((a, b)) for a in c for b in c if a < b}
        assert not pairs & covered
        covered |= pairs
    assert covered == {frozenset(e) for e in g.edges()}


# regularisation

def test_regularise_path_on_three_vertices():
    t = regularise(parse_tree("a b\nb c"), 3)
    assert t.n == 4
    assert t.degree[t.vertex("b")] == 3
    assert t.synthetic == frozenset({2})


def test_regularise_fixed_point_on_regular_spider():
    t = star_tree(3)
    assert regularise(t, 3) is t


def test_regularise_path_on_four_vertices():
    t = regularise(path_tree(4), 3)
    assert t.n == 6
    assert t.is_regular(3)


def test_regularise_below_max_degree_fails():
    with pytest.raises(ValueError):
        regularise(star_tree(4), 3)


@given(random_trees(max_vertices=8))
def test_regularise_is_idempotent_and_regular(tree):
    d = max(tree.max_degree, 3)
    once = regularise(tree, d)
    assert all(x in (1, d) for x in once.degree)
    assert regularise(once, d) == once
    assert once.edges[: tree.m] == tree.edges


# boundaries

def test_boundary_of_whole_tree_is_empty():
    t = spider_tree()
    b = boundary(t, t.whole())
    assert (b.exterior, b.interior, b.t) == (frozenset(), frozenset(), 0)


def test_boundary_of_middle_edge_of_path():
    t = path_tree(4)
    b = boundary(t, t.subtree([1]))
    assert b.exterior == {0, 2}
    assert b.interior == {1}
    assert b.t == 1


def test_boundary_of_spider_leg():
    t = spider_tree()
    leg = [t.edge_between("c", "l0_0"), t.edge_between("l0_0", "l0_1")]
    b = boundary(t, t.subtree(leg))
    assert b.exterior == {t.edge_between("c", "l1_0"), t.edge_between("c", "l2_0")}
    assert b.interior == {leg[0]}
    assert b.fringe


# splitting predicate

def test_single_edge_is_splitting():
    t = spider_tree()
    assert all(is_splitting(t, t.subtree([e])) for e in range(t.m))


def test_two_incident_boundary_edges_are_not_splitting():
    # the two edges at b are both on the interior boundary and share b
    t = parse_tree("x a\na b\nb c\nc y")
    assert not is_splitting(t, t.subtree([1, 2]))


def test_spider_leg_is_splitting():
    t = spider_tree()
    assert is_splitting(t, t.subtree([t.edge_between("c", "l0_0"), t.edge_between("l0_0", "l0_1")]))


def _splitting_by_definition(tree, edges):
    edges = set(edges)
    if len(edges) == 1:
        return True
    interior = {e for e in edges if any(f not in edges for f in tree.edge_neighbours(e))}
    local = {}
    for e in edges:
        for v in tree.edges[e]:
            local[v] = local.get(v, 0) + 1
    fringe = all(any(local[v] == 1 for v in tree.edges[e]) for e in interior)
    if not fringe or len(interior) > 2:
        return False
    if len(interior) == 2:
        e, f = interior
        return not set(tree.edges[e]) & set(tree.edges[f])
    return True


@settings(max_examples=40)
@given(random_trees(min_vertices=3, max_vertices=8))
def test_is_splitting_matches_definition(tree):
    for sub in connected_edge_subsets(tree):
        assert is_splitting(tree, tree.subtree(sub)) == _splitting_by_definition(tree, sub)


# balanced root

def test_balanced_root_of_path_on_five_vertices():
    t = path_tree(5)
    sub = t.whole()
    v = find_balanced_root(sub)
    assert t.names[v] == "v2"
    assert sorted(len(h) for h in sub.hanging(v)) == [2, 2]


def test_balanced_root_of_spider():
    t = spider_tree()
    v = find_balanced_root(t.whole())
    assert t.names[v] == "c"
    assert sorted(len(h) for h in t.whole().hanging(v)) == [2, 2, 2]


def test_balanced_root_of_star():
    t = star_tree(3)
    v = find_balanced_root(t.whole())
    assert t.names[v] == "c"


@given(random_trees(min_vertices=3))
def test_balanced_root_halves_every_hanging_subtree(tree):
    sub = tree.whole()
    v = find_balanced_root(sub)
    limit = math.ceil(sub.m / 2)
    assert all(len(h) <= limit for h in sub.hanging(v))
    assert sum(len(h) for h in sub.hanging(v)) == sub.m
