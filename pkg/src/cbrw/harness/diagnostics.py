"""Trajectory statistics: last-passage times of the decomposition subtrees and step directions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List

import numpy as np

from ..hierarchy import NodeAddress, TreeModel, subtree_decomposition
from ..walk import Action, Detection


def last_passage_times(det: Detection, tree: TreeModel, target: NodeAddress) -> List[int]:
    """[T_L, ..., T_{l0+1}]: last step index (0 = start at the root) at which the walk sat in each T_l.

    Subtrees never visited report 0.
    """
    sets = [set(s) for s in subtree_decomposition(tree, target)]
    last = [0] * len(sets)
    for t, step in enumerate(det.trace):
        for i, s in enumerate(sets):
            if step.position in s:
                last[i] = t
    return last


@dataclass(frozen=True)
class PassageSummary:
    level: int
    mean: float
    se: float
    bound: float
    samples: int

    @property
    def within(self) -> bool:
        return self.mean <= self.bound + 3.0 * self.se


def last_passage_diagnostics(dets: Iterable[Detection], tree: TreeModel, target: NodeAddress,
                             bound: float) -> List[PassageSummary]:
    rows = np.array([last_passage_times(d, tree, target) for d in dets], dtype=float)
    if rows.size == 0:
        raise ValueError("no traces")
    n = rows.shape[0]
    out = []
    for i in range(rows.shape[1]):
        col = rows[:, i]
        se = float(col.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        out.append(PassageSummary(tree.depth - i, float(col.mean()), se, bound, n))
    return out


def step_directions(det: Detection, tree: TreeModel, target: NodeAddress,
                    interior_only: bool = True) -> List[int]:
    """W_t per step: +1 away from the target, -1 toward it, 0 when the walk stays.

    Interior steps are those taken from a node strictly between the root and
    level 1, where every step runs the same p0-level tests.
    """
    out = []
    for step in det.trace:
        pos = step.position
        if step.action is Action.DECLARE:
            continue
        if interior_only and not 1 < pos.l < tree.depth:
            continue
        out.append(tree.distance(step.destination, target) - tree.distance(pos, target))
    return out


def step_bias(dets: Iterable[Detection], tree_targets: Iterable) -> tuple:
    """Mean of W_t and its standard error over all interior steps.

    ``tree_targets`` pairs each detection with its (tree, target).
    """
    w: List[int] = []
    for det, (tree, target) in zip(dets, tree_targets):
        w.extend(step_directions(det, tree, target))
    arr = np.asarray(w, dtype=float)
    if arr.size < 2:
        raise ValueError("too few interior steps")
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size)), int(arr.size)
