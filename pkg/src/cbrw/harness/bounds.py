"""Finite-time sample-complexity bounds used as oracle columns.

Gaps along the target's decomposition are read from a generator-built tree:
for each subtree T_l the smallest |mu - eta| over its nodes is used, which can
only enlarge the bound.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Sequence

from ..hierarchy import NodeAddress, TreeModel, subtree_decomposition
from ..seqtest import lemma1_bound
from ..walk import c_h_p0, c_p0

__all__ = ["lemma1_bound", "leaf_bound", "hierarchical_bound", "decomposition_gaps", "tree_bound"]


def leaf_bound(level_gaps: Sequence[float], target_gap: float, p0: float, epsilon: float) -> float:
    """Expected total samples for a leaf target; ``level_gaps[i]`` is the gap for T_{i+1}."""
    c = c_p0(p0)
    depth = len(level_gaps)
    walk = 2.0 * sum(c * lemma1_bound(g, p0) for g in level_gaps)
    g2 = target_gap * target_gap
    declare = 48.0 / g2 * math.log(24.0 * (2.0 * c * depth / epsilon) ** (1.0 / 3.0) / g2) + 2.0
    return walk + declare


def _hier_term(g: float, c: float, p0: float) -> float:
    return c / (1.0 - p0) * (lemma1_bound(g, p0) + p0 / (1.0 - p0) * 16.0 * math.log(2.0) / (g * g))


def hierarchical_bound(depth: int, upper_gaps: Sequence[float], child_gaps: Sequence[float],
                       target_gap: float, p0: float, epsilon: float) -> float:
    """Expected total samples for a (possibly hierarchical) target.

    ``upper_gaps`` covers T_{l0+1} .. T_L and ``child_gaps`` the (at most two)
    subtrees hanging below the target.
    """
    c = c_h_p0(p0)
    total = 3.0 * sum(_hier_term(g, c, p0) for g in upper_gaps)
    total += 3.0 * sum(_hier_term(g, c, p0) for g in child_gaps)
    g2 = target_gap * target_gap
    rounds = math.log2(6.0 * depth * c * p0 / epsilon)
    total += rounds * (48.0 / g2 * math.log(24.0 * (4.0 / epsilon) ** (1.0 / 3.0) / g2) + 2.0)
    return total


def _gap(tree: TreeModel, node: NodeAddress) -> float:
    return abs(tree.mean(node) - tree.threshold(node.l))


def decomposition_gaps(tree: TreeModel, target: NodeAddress) -> Dict[str, object]:
    sets = subtree_decomposition(tree, target)  # T_L first
    upper = [min(_gap(tree, n) for n in s) for s in reversed(sets)]
    below = [min(_gap(tree, n) for n in tree.subtree(c)) for c in tree.children(target)]
    return {"upper": upper, "children": below, "target": tree.residual(target) - tree.threshold(target.l)}


def tree_bound(tree: TreeModel, target: NodeAddress, p0: float, epsilon: float,
               hierarchical: Optional[bool] = None) -> float:
    gaps = decomposition_gaps(tree, target)
    if hierarchical is None:
        hierarchical = tree.hierarchical
    if not hierarchical:
        if target.l != 0:
            raise ValueError("the leaf-mode bound needs a leaf target")
        return leaf_bound(gaps["upper"], gaps["target"], p0, epsilon)
    return hierarchical_bound(tree.depth, gaps["upper"], gaps["children"], gaps["target"], p0, epsilon)
