"""Syntax-tree similarity between heuristic programs.

The similarity of program a to program b is the clipped fraction of b's
subtrees that also occur in a: every node contributes the complete subtree
rooted at it, occurrences are counted with multiplicity, the count of each
distinct subtree of a is clipped at its count in b, and the clipped total is
divided by b's node count. The measure is directional (not symmetric) and lies
in [0, 1]: 1 for structurally identical programs, 0 when no subtree is shared.

Identifier names and literal text take part in matching, so `bins - item` and
`item - bins` share only their leaves.
"""

from __future__ import annotations

import numpy as np

from .dsl import SyntaxTree


def ast_similarity(a: SyntaxTree, b: SyntaxTree) -> float:
    """Directional similarity of `a` to `b` in [0, 1]."""
    counts_a = a.subtree_counts()
    counts_b = b.subtree_counts()
    if len(counts_a) > len(counts_b):
        matched = sum(min(n, counts_a[key]) for key, n in counts_b.items() if key in counts_a)
    else:
        matched = sum(min(n, counts_b[key]) for key, n in counts_a.items() if key in counts_b)
    return matched / b.node_count()


def dissimilarity_matrix(trees: list[SyntaxTree]) -> np.ndarray:
    """Pairwise dissimilarity scores: entry [i, j] is -ast_similarity(trees[i],
    trees[j]) for i != j, with a zero diagonal. All entries lie in [-1, 0]."""
    if not trees:
        raise ValueError("dissimilarity_matrix needs at least one tree")
    n = len(trees)
    values = np.zeros((n, n), dtype=np.float64)
    counts = [t.subtree_counts() for t in trees]
    totals = [t.node_count() for t in trees]
    for i in range(n):
        ci = counts[i]
        for j in range(n):
            if i == j:
                continue
            cj = counts[j]
            if len(ci) > len(cj):
                matched = sum(min(n_key, ci[key]) for key, n_key in cj.items() if key in ci)
            else:
                matched = sum(min(n_key, cj[key]) for key, n_key in ci.items() if key in cj)
            values[i, j] = -matched / totals[j]
    return values
