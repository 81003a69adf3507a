"""Glauber dynamics for edge colourings of trees: exact chains, comparisons and decompositions."""

from .graph_core import (
    Boundary,
    SubtreeHandle,
    Tree,
    TreeError,
    boundary,
    find_balanced_root,
    is_splitting,
    line_graph,
    parse_tree,
    regularise,
    tree_from_edges,
)
from .coloring import (
    CapExceeded,
    Coloring,
    FeasibilityClass,
    ListAssignment,
    classify_feasibility,
    enumerate_colorings,
    enumerate_states,
    induced_lists,
    is_proper,
)
from .chain import (
    FiniteChain,
    SpectralReport,
    build_chain,
    is_ergodic,
    mixing_time,
    rayleigh_quotient,
    spectral_gap,
    tv_distance,
)
from .glauber import (
    GlauberSpec,
    Trajectory,
    build_edge_glauber,
    build_glauber,
    delete_clique_neighbour,
    generalized_mono_factor,
    simulate,
)
from .decompose import DecompositionTree, certified_bound, decompose, regularise_and_reduce, split_once
from .paths import CliqueSystem, blocking_permutation, canonical_path, congestion

__all__ = [
    "Boundary", "SubtreeHandle", "Tree", "TreeError", "boundary", "find_balanced_root", "is_splitting",
    "line_graph", "parse_tree", "regularise", "tree_from_edges",
    "CapExceeded", "Coloring", "FeasibilityClass", "ListAssignment", "classify_feasibility",
    "enumerate_colorings", "enumerate_states", "induced_lists", "is_proper",
    "FiniteChain", "SpectralReport", "build_chain", "is_ergodic", "mixing_time", "rayleigh_quotient",
    "spectral_gap", "tv_distance",
    "GlauberSpec", "Trajectory", "build_edge_glauber", "build_glauber", "delete_clique_neighbour",
    "generalized_mono_factor", "simulate",
    "DecompositionTree", "certified_bound", "decompose", "regularise_and_reduce", "split_once",
    "CliqueSystem", "blocking_permutation", "canonical_path", "congestion",
]

__version__ = "0.1.0"
