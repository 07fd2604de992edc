"""Noisy adaptive group testing as a leaf-target search.

Node (k, l) stands for the 2^l consecutive items ((k-1) 2^l, k 2^l].  Testing
a group returns a Bernoulli outcome with mean q_d when the group holds a
defective item and q_fa otherwise, so with every threshold at 1/2 the
defective singletons are exactly the leaf targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import FrozenSet, Iterable

from ..hierarchy import NodeAddress, TreeModel
from ..streams import bernoulli


@dataclass(frozen=True)
class GroupTestInstance:
    population: int
    defects: FrozenSet[int]
    q_fa: float = 0.2
    q_d: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "defects", frozenset(int(d) for d in self.defects))
        K = self.population
        if K < 2 or K & (K - 1):
            raise ValueError(f"population must be a power of two >= 2, got {K}")
        if not 0 <= self.q_fa < 0.5:
            raise ValueError(f"q_fa must lie in [0, 1/2), got {self.q_fa}")
        if not 0.5 < self.q_d <= 1:
            raise ValueError(f"q_d must lie in (1/2, 1], got {self.q_d}")
        bad = sorted(d for d in self.defects if not 1 <= d <= K)
        if bad:
            raise ValueError(f"defects {bad} outside [1, {K}]")

    @property
    def depth(self) -> int:
        return self.population.bit_length() - 1

    def group(self, node: NodeAddress) -> range:
        width = 1 << node.l
        return range((node.k - 1) * width + 1, node.k * width + 1)

    def is_dirty(self, node: NodeAddress) -> bool:
        g = self.group(node)
        return any(d in g for d in self.defects)

    def without(self, target: NodeAddress) -> TreeModel:
        """Tree after a found defective item is set aside."""
        return group_testing_tree(GroupTestInstance(self.population, self.defects - {target.k},
                                                    self.q_fa, self.q_d))


def group_testing_tree(instance: GroupTestInstance) -> TreeModel:
    shell = TreeModel(instance.depth, 0.5)
    streams = {
        node: bernoulli(instance.q_d if instance.is_dirty(node) else instance.q_fa)
        for node in shell.nodes()
    }
    return TreeModel(instance.depth, 0.5, streams, origin=instance)


def defect_targets(defects: Iterable[int]) -> frozenset:
    return frozenset(NodeAddress(int(d), 0) for d in defects)


def read_instance(path) -> GroupTestInstance:
    """Parse ``key = value`` lines: K, defects (comma or space separated), q_fa, q_d."""
    fields = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            fields[key] = (lineno, value)
    try:
        K = int(fields["K"][1])
        raw_defects = fields.get("defects", (0, ""))[1].replace(",", " ").split()
        defects = frozenset(int(d) for d in raw_defects)
        q_fa = float(fields.get("q_fa", (0, "0.2"))[1])
        q_d = float(fields.get("q_d", (0, "0.8"))[1])
    except KeyError as err:
        raise ValueError(f"{path}: missing key {err}") from None
    except ValueError as err:
        raise ValueError(f"{path}: {err}") from None
    return GroupTestInstance(K, defects, q_fa, q_d)
