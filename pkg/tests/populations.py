"""Shared builders for random code-valued populations used across test modules."""

from __future__ import annotations

import random

import numpy as np

from mohevo.dsl import parse, pretty_print
from mohevo.evolution import Heuristic, Operator, Population

from genprog import random_program
from oracles import similarity_oracle

_TREE_POOL = None
_SIM_CACHE: dict = {}


def tree_pool():
    """Forty distinct small trees sharing one signature.

    Real populations always hold programs for a single task, so any two
    members share at least their parameter-leaf subtrees; the pool mirrors
    that (mixed-signature trees could make two programs fully dissimilar,
    which the evolving system cannot produce).
    """
    global _TREE_POOL
    if _TREE_POOL is None:
        rng = random.Random(99)
        sources = set()
        trees = []
        while len(trees) < 40:
            tree = parse(random_program(rng, n_params=2))
            canon = pretty_print(tree)
            if canon not in sources:
                sources.add(canon)
                trees.append(tree)
        _TREE_POOL = trees
    return _TREE_POOL


def oracle_similarities(trees):
    """Pairwise directional similarities via the independent brute-force
    oracle, cached per tree pair."""
    out = [[0.0] * len(trees) for _ in trees]
    for i, a in enumerate(trees):
        for j, b in enumerate(trees):
            key = (id(a), id(b))
            if key not in _SIM_CACHE:
                _SIM_CACHE[key] = similarity_oracle(a, b)
            out[i][j] = _SIM_CACHE[key]
    return out


def make_member(i, objectives, tree, generation=0):
    return Heuristic(id=i, description=f"member {i}", source=pretty_print(tree),
                     tree=tree, objectives=tuple(float(x) for x in objectives),
                     generation=generation, operator=Operator.INIT)


def random_population(rng: np.random.Generator, n, m=2, capacity=None):
    trees = [tree_pool()[k] for k in rng.choice(len(tree_pool()), size=n, replace=False)]
    objs = rng.integers(0, 6, size=(n, m)).astype(float)
    members = [make_member(i, tuple(objs[i]), trees[i]) for i in range(n)]
    return Population(members, capacity or n)
