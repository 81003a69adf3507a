import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import path_tree, random_trees, star_tree
from edgechroma.chain import (
    build_chain,
    detailed_balance_residual,
    discrete_comparison_factor,
    discrete_mixing_time,
    is_ergodic,
    mixing_time,
    power_iteration_gap,
    rayleigh_quotient,
    spectral_gap,
    tv_distance,
)
from edgechroma.glauber import build_edge_glauber
from edgechroma.graph_core import tree_from_edges


def two_state(rate=1):
    return build_chain([0, 1], lambda a, b: rate)


def test_two_state_generator():
    assert two_state().generator.toarray().tolist() == [[-1.0, 1.0], [1.0, -1.0]]


def test_single_state_generator():
    c = build_chain(["only"], lambda a, b: 1)
    assert c.generator.toarray().tolist() == [[0.0]]
    assert is_ergodic(c)


def test_three_cycle_rows_sum_to_zero():
    c = build_chain([0, 1, 2], lambda a, b: 1 if (b - a) % 3 in (1, 2) else 0)
    g = c.generator.toarray()
    assert np.all(g.sum(axis=1) == 0)
    assert set(g[~np.eye(3, dtype=bool)].tolist()) <= {0.0, 1.0}


def test_rational_rates_are_assembled_exactly():
    c = build_chain(list(range(4)), lambda a, b: Fraction(1, 3) if abs(a - b) == 1 else 0)
    assert c.exact is not None
    assert np.all(c.exact.row_sums() == 0)


def test_frozen_star_is_not_ergodic():
    assert not is_ergodic(build_edge_glauber(star_tree(3), 3))


def test_star_with_four_colours_is_ergodic():
    c = build_edge_glauber(star_tree(3), 4)
    assert c.n == 24
    assert is_ergodic(c)


def test_single_edge_gap_is_one():
    # three colours, each proposed at rate 1/3: every positive eigenvalue equals 3/3
    c = build_edge_glauber(tree_from_edges([("a", "b")]), 3)
    w = np.linalg.eigvalsh(-c.generator.toarray())
    assert np.allclose(w, [0, 1, 1], atol=1e-12)
    assert spectral_gap(c).gap == pytest.approx(1.0, abs=1e-12)


def test_two_state_gap_and_rayleigh_quotient():
    c = two_state()
    assert spectral_gap(c).gap == pytest.approx(2.0, abs=1e-12)
    dirichlet, var = rayleigh_quotient(c, np.array([0.0, 1.0]))
    assert (dirichlet, var) == pytest.approx((0.5, 0.25))


def test_constant_observable_has_zero_form():
    c = build_edge_glauber(path_tree(4), 3)
    assert rayleigh_quotient(c, np.ones(c.n)) == (0.0, 0.0)


def test_path_gap_dense_matches_power_iteration():
    c = build_edge_glauber(path_tree(4), 3)
    dense = spectral_gap(c, method="dense").gap
    assert power_iteration_gap(c) == pytest.approx(dense, rel=1e-7)


def test_eigenvector_attains_the_gap():
    c = build_edge_glauber(path_tree(4), 4)
    rep = spectral_gap(c, with_vector=True)
    dirichlet, var = rayleigh_quotient(c, rep.eigenvector)
    assert dirichlet / var == pytest.approx(rep.gap, abs=1e-9)


def test_tv_distance_examples():
    pi = np.full(4, 0.25)
    assert tv_distance(pi, pi) == 0.0
    assert tv_distance(np.array([1.0, 0, 0, 0]), pi) == pytest.approx(0.75)
    assert tv_distance(np.array([1.0, 0]), np.array([0, 1.0])) == 1.0


def test_two_state_mixing_time():
    assert mixing_time(two_state()) == pytest.approx(math.log(2) / 2, abs=1e-3)


def test_single_edge_two_colours_mixing_time():
    c = build_edge_glauber(tree_from_edges([("a", "b")]), 2)
    assert mixing_time(c) == pytest.approx(math.log(2), abs=1e-3)


def test_discrete_time_on_three_edge_path():
    c = build_edge_glauber(path_tree(4), 3)
    factor = discrete_comparison_factor([1 / 3] * 3, 3)
    assert factor == pytest.approx(3.0)
    assert discrete_mixing_time(c, factor) <= factor * mixing_time(c)


def test_discrete_factor_is_linear_in_sites():
    assert [discrete_comparison_factor([0.25] * n, 4) for n in (1, 2, 3)] == [1.0, 2.0, 3.0]


# properties over random Glauber chains

def _chain(tree, extra):
    return build_edge_glauber(tree, tree.max_degree + extra)


@settings(max_examples=25, deadline=None)
@given(random_trees(max_vertices=6), st.integers(1, 2))
def test_generator_is_exact_and_reversible(tree, extra):
    c = _chain(tree, extra)
    assert c.exact is not None and np.all(c.exact.row_sums() == 0)
    assert detailed_balance_residual(c) <= 1e-12


@settings(max_examples=15, deadline=None)
@given(random_trees(max_vertices=6), st.integers(1, 2), st.integers(0, 2**32 - 1))
def test_variational_characterisation(tree, extra, seed):
    c = _chain(tree, extra)
    if c.n < 2:
        return
    gap = spectral_gap(c).gap
    rng = np.random.default_rng(seed)
    for _ in range(200):
        f = rng.normal(size=c.n)
        dirichlet, var = rayleigh_quotient(c, f)
        assert dirichlet / var >= gap - 1e-9


@settings(max_examples=10, deadline=None)
@given(random_trees(min_vertices=3, max_vertices=6), st.integers(1, 2))
def test_dense_and_iterative_agree(tree, extra):
    c = _chain(tree, extra)
    if c.n < 3:
        return
    dense = spectral_gap(c, method="dense").gap
    assert spectral_gap(c, method="iterative").gap == pytest.approx(dense, rel=1e-7)


@settings(max_examples=10, deadline=None)
@given(random_trees(max_vertices=5), st.integers(1, 2))
def test_mixing_time_obeys_relaxation_bound(tree, extra):
    c = _chain(tree, extra)
    if c.n < 2:
        return
    assert mixing_time(c) <= (math.log(4) + math.log(c.n)) * spectral_gap(c).relaxation
