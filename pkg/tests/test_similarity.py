from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mohevo.dsl import NodeKind, SyntaxTree, parse
from mohevo.similarity import ast_similarity, dissimilarity_matrix

from conftest import fixture_source
from genprog import random_program
from oracles import similarity_oracle


def ident(name):
    return SyntaxTree(NodeKind.IDENT, name)


def plus(a, b):
    return SyntaxTree(NodeKind.BINARY, "+", (a, b))


def test_identical_trees_score_one():
    tree = parse(fixture_source("tsp_gls_penalty.dsl"))
    assert ast_similarity(tree, tree) == 1.0


def test_disjoint_leaves_score_zero():
    assert ast_similarity(ident("x"), ident("y")) == 0.0


def test_partial_overlap_is_clipped_fraction():
    a = plus(ident("a"), ident("b"))
    b = plus(ident("a"), ident("c"))
    # only Ident(a) is shared; b has 3 nodes
    assert ast_similarity(a, b) == pytest.approx(1 / 3)


def test_similarity_is_directional():
    small = plus(ident("a"), ident("b"))          # 3 nodes
    big = plus(small, plus(ident("a"), ident("b")))  # 7 nodes, contains small twice
    sim_small_to_big = ast_similarity(small, big)
    sim_big_to_small = ast_similarity(big, small)
    assert sim_small_to_big != sim_big_to_small
    # all 3 subtrees of `small` occur in `big`, but big has 7 nodes
    assert sim_small_to_big == pytest.approx(3 / 7)
    assert sim_big_to_small == 1.0  # every subtree of small is covered by big's copies


def test_clipping_stops_duplicate_inflation():
    # `a` holds Ident(x) three times, `b` only once: the clipped count of
    # Ident(x) stays 1 no matter how many copies `a` has
    a3 = plus(plus(ident("x"), ident("x")), ident("x"))
    b = plus(ident("x"), ident("y"))
    base = ast_similarity(a3, b)
    a4 = plus(a3, ident("x"))
    assert ast_similarity(a4, b) == base == pytest.approx(1 / 3)


def test_fixture_pair_matches_bruteforce_oracle():
    trees = [
        parse(fixture_source("bpp_best_fit.dsl")),
        parse(fixture_source("bpp_abs_sqrt.dsl")),
        parse(fixture_source("bpp_worst_fit.dsl")),
    ]
    for a in trees:
        for b in trees:
            assert ast_similarity(a, b) == pytest.approx(similarity_oracle(a, b), abs=0)


def test_matrix_single_tree_is_zero():
    tree = parse(fixture_source("bpp_best_fit.dsl"))
    matrix = dissimilarity_matrix([tree])
    assert matrix.shape == (1, 1)
    assert matrix[0, 0] == 0.0


def test_matrix_identical_trees():
    tree = parse(fixture_source("bpp_best_fit.dsl"))
    twin = parse(fixture_source("bpp_best_fit.dsl"))
    matrix = dissimilarity_matrix([tree, twin])
    assert matrix[0, 1] == -1.0
    assert matrix[1, 0] == -1.0
    assert matrix[0, 0] == matrix[1, 1] == 0.0


def test_matrix_equals_entrywise_oracle():
    trees = [
        parse(fixture_source("bpp_best_fit.dsl")),
        parse(fixture_source("bpp_abs_sqrt.dsl")),
        parse(fixture_source("tsp_gls_penalty.dsl")),
    ]
    matrix = dissimilarity_matrix(trees)
    for i, a in enumerate(trees):
        for j, b in enumerate(trees):
            expected = 0.0 if i == j else -similarity_oracle(a, b)
            assert matrix[i, j] == pytest.approx(expected, abs=0)
    assert np.all(matrix <= 0.0) and np.all(matrix >= -1.0)


def test_matrix_agrees_with_direct_recomputation():
    rng = random.Random(7)
    trees = [parse(random_program(rng)) for _ in range(12)]
    matrix = dissimilarity_matrix(trees)
    for i in range(12):
        for j in range(12):
            expected = 0.0 if i == j else -ast_similarity(trees[i], trees[j])
            assert matrix[i, j] == expected


@settings(max_examples=150, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=0, max_value=10_000))
def test_similarity_bounds_and_self_similarity(seed_a, seed_b):
    a = parse(random_program(random.Random(seed_a)))
    b = parse(random_program(random.Random(seed_b)))
    sim = ast_similarity(a, b)
    assert 0.0 <= sim <= 1.0
    assert ast_similarity(a, a) == 1.0
    assert ast_similarity(b, b) == 1.0
