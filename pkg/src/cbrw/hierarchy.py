"""Tree topology, node addressing, thresholds and ground-truth targets.

Nodes are addressed ``(k, l)``: the k-th node (1-based, left to right) at level
``l``, with leaves at level 0 and the root at level ``L``.  Binary trees use
arithmetic addressing; general trees carry an explicit children map.  All
leaves sit at level 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Mapping, NamedTuple, Optional, Union

from .streams import Family, StreamSpec, TailModel


class NodeAddress(NamedTuple):
    k: int
    l: int

    def __str__(self) -> str:
        return f"({self.k},{self.l})"


class Direction(enum.Enum):
    PARENT = "parent"
    LEFT_CHILD = "left_child"
    RIGHT_CHILD = "right_child"


class PlacementMode(str, enum.Enum):
    LEAF_ONLY = "leaf-only"
    HIERARCHICAL = "hierarchical"


def level_thresholds(depth: int, thresholds) -> tuple:
    if isinstance(thresholds, (int, float)):
        return (float(thresholds),) * (depth + 1)
    if isinstance(thresholds, Mapping):
        missing = [l for l in range(depth + 1) if l not in thresholds]
        if missing:
            raise ValueError(f"thresholds missing for levels {missing}")
        return tuple(float(thresholds[l]) for l in range(depth + 1))
    out = tuple(float(t) for t in thresholds)
    if len(out) != depth + 1:
        raise ValueError(f"need {depth + 1} thresholds, got {len(out)}")
    return out


@dataclass(frozen=True, eq=False)
class TreeModel:
    """A rooted tree of streams with per-level thresholds.

    ``excess`` holds the bookkeeping that defines hierarchical targets: the
    part of a node's mean attributed to its target descendants.  A node is a
    target when ``mean - excess`` exceeds its level threshold (only leaves are
    eligible unless ``hierarchical``).  ``origin`` knows how to rebuild the
    tree with one target removed.
    """

    depth: int
    thresholds: tuple
    streams: Mapping[NodeAddress, StreamSpec] = field(default_factory=dict)
    excess: Mapping[NodeAddress, float] = field(default_factory=dict)
    hierarchical: bool = False
    children_map: Optional[Mapping[NodeAddress, tuple]] = None
    origin: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        object.__setattr__(self, "thresholds", level_thresholds(self.depth, self.thresholds))
        if self.children_map is not None:
            parents = {}
            for node, kids in self.children_map.items():
                for c in kids:
                    if c.l != node.l - 1:
                        raise ValueError(f"child {c} of {node} is not one level down")
                    if c in parents:
                        raise ValueError(f"{c} has two parents")
                    parents[c] = node
            object.__setattr__(self, "_parents", parents)
            for node in self.nodes():
                if node.l > 0 and not self.children(node):
                    raise ValueError(f"internal-level node {node} has no children; leaves must sit at level 0")

    # -- topology ---------------------------------------------------------
    @property
    def root(self) -> NodeAddress:
        return NodeAddress(1, self.depth)

    @property
    def is_binary(self) -> bool:
        return self.children_map is None

    def level_size(self, l: int) -> int:
        if self.is_binary:
            return 2 ** (self.depth - l)
        return sum(1 for _ in self._level(l))

    def _level(self, l: int) -> Iterator[NodeAddress]:
        frontier = [self.root]
        for _ in range(self.depth - l):
            frontier = [c for n in frontier for c in self.children(n)]
        return iter(frontier)

    def contains(self, node: NodeAddress) -> bool:
        if not 0 <= node.l <= self.depth:
            return False
        if self.is_binary:
            return 1 <= node.k <= 2 ** (self.depth - node.l)
        return node == self.root or node in self._parents

    def children(self, node: NodeAddress) -> tuple:
        if node.l == 0:
            return ()
        if self.is_binary:
            return (NodeAddress(2 * node.k - 1, node.l - 1), NodeAddress(2 * node.k, node.l - 1))
        return tuple(self.children_map.get(node, ()))

    def parent(self, node: NodeAddress) -> NodeAddress:
        if node.l == self.depth:
            return node
        if self.is_binary:
            return NodeAddress((node.k + 1) // 2, node.l + 1)
        return self._parents[node]

    def nodes(self) -> Iterator[NodeAddress]:
        """All nodes, level by level from the root."""
        for l in range(self.depth, -1, -1):
            yield from self._level(l)

    def leaves(self) -> List[NodeAddress]:
        return list(self._level(0))

    def subtree(self, node: NodeAddress) -> List[NodeAddress]:
        out, frontier = [], [node]
        while frontier:
            out.extend(frontier)
            frontier = [c for n in frontier for c in self.children(n)]
        return out

    def ancestors(self, node: NodeAddress) -> List[NodeAddress]:
        """Strict ancestors, nearest first."""
        out = []
        while node.l < self.depth:
            node = self.parent(node)
            out.append(node)
        return out

    def is_ancestor(self, a: NodeAddress, node: NodeAddress) -> bool:
        while node.l < a.l:
            node = self.parent(node)
        return node == a

    def distance(self, a: NodeAddress, b: NodeAddress) -> int:
        """Number of edges on the path between two nodes."""
        steps = 0
        while a.l < b.l:
            a, steps = self.parent(a), steps + 1
        while b.l < a.l:
            b, steps = self.parent(b), steps + 1
        while a != b:
            a, b, steps = self.parent(a), self.parent(b), steps + 2
        return steps

    @property
    def max_children(self) -> int:
        if self.is_binary:
            return 2
        return max(len(k) for k in self.children_map.values())

    @property
    def max_degree(self) -> int:
        """Neighbours of the busiest node, counting the parent slot (root included)."""
        return self.max_children + 1

    # -- data ---------------------------------------------------------------
    def stream(self, node: NodeAddress) -> StreamSpec:
        return self.streams[node]

    def mean(self, node: NodeAddress) -> float:
        return self.streams[node].mean

    def threshold(self, level: int) -> float:
        return self.thresholds[level]

    def residual(self, node: NodeAddress) -> float:
        return self.mean(node) - self.excess.get(node, 0.0)


def navigate(tree: TreeModel, node: NodeAddress, direction: Union[Direction, int]) -> NodeAddress:
    """Adjacent node in the given direction; an int selects the i-th child (0-based)."""
    if not tree.contains(node):
        raise ValueError(f"{node} is not in the tree")
    if direction is Direction.PARENT:
        return tree.parent(node)
    kids = tree.children(node)
    if not kids:
        raise ValueError(f"{node} is a leaf and has no children")
    if direction is Direction.LEFT_CHILD:
        return kids[0]
    if direction is Direction.RIGHT_CHILD:
        return kids[-1]
    return kids[int(direction)]


# -- synthetic instances ----------------------------------------------------

@dataclass(frozen=True)
class StreamFamily:
    """Recipe turning a mean into a StreamSpec: the noise model shared by every node."""

    family: Family = Family.CONSTANT
    variance: float = 1.0
    xi: Optional[float] = None
    b: Optional[float] = None
    u: Optional[float] = None
    tail_index: float = 2.5
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))

    @property
    def heavy(self) -> bool:
        return self.b is not None

    def at(self, mean: float) -> StreamSpec:
        tail = TailModel.heavy(self.b, self.u) if self.heavy else TailModel.subgaussian(self.xi)
        if self.family is Family.GAUSSIAN:
            return StreamSpec(Family.GAUSSIAN, mean, variance=self.variance, tail=tail)
        if self.family is Family.HEAVY_TAIL:
            return StreamSpec(Family.HEAVY_TAIL, mean, tail_index=self.tail_index, scale=self.scale, tail=tail)
        return StreamSpec(self.family, mean, tail=tail)


NOISELESS = StreamFamily(Family.CONSTANT, xi=0.0)


@dataclass(frozen=True)
class TargetPlacement:
    targets: frozenset
    delta: float
    mode: PlacementMode = PlacementMode.LEAF_ONLY

    def __post_init__(self):
        object.__setattr__(self, "targets", frozenset(NodeAddress(*t) for t in self.targets))
        object.__setattr__(self, "mode", PlacementMode(self.mode))
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if self.mode is PlacementMode.LEAF_ONLY:
            bad = [t for t in self.targets if t.l != 0]
            if bad:
                raise ValueError(f"leaf-only placement has non-leaf targets {sorted(bad)}")

    def without(self, target: NodeAddress) -> "TargetPlacement":
        return TargetPlacement(self.targets - {target}, self.delta, self.mode)


@dataclass(frozen=True)
class SyntheticOrigin:
    """Generator inputs, kept so a target can be excised by regeneration."""

    depth: int
    thresholds: tuple
    placement: TargetPlacement
    streams: StreamFamily

    def without(self, target: NodeAddress) -> TreeModel:
        return synthesize_means(self.depth, self.thresholds, self.placement.without(target), self.streams)


def _target_excess(tree: TreeModel, targets, delta: float) -> Dict[NodeAddress, float]:
    excess: Dict[NodeAddress, float] = {}
    for t in targets:
        for a in tree.ancestors(t):
            excess[a] = excess.get(a, 0.0) + delta
    return excess


def synthesize_means(depth: int, thresholds, placement: TargetPlacement,
                     streams: StreamFamily = NOISELESS) -> TreeModel:
    """Binary instance whose targets are exactly ``placement.targets``.

    Targets and their ancestors sit at eta + delta, every other node at
    eta - delta.  Each target credits delta of excess to every ancestor, so a
    reflecting point's residual is at most eta and it is not a target.  A
    target that is itself an ancestor of targets is lifted by its excess so
    its residual stays at eta + delta.
    """
    thr = level_thresholds(depth, thresholds)
    shell = TreeModel(depth, thr)
    for t in placement.targets:
        if not shell.contains(t):
            raise ValueError(f"target {t} is not in a depth-{depth} tree")
    delta = placement.delta
    excess = _target_excess(shell, placement.targets, delta)
    means = {}
    for node in shell.nodes():
        eta = thr[node.l]
        if node in placement.targets:
            means[node] = eta + delta + excess.get(node, 0.0)
        elif node in excess:
            means[node] = eta + delta
        else:
            means[node] = eta - delta
    return TreeModel(
        depth, thr,
        streams={n: streams.at(m) for n, m in means.items()},
        excess=excess,
        hierarchical=placement.mode is PlacementMode.HIERARCHICAL,
        origin=SyntheticOrigin(depth, thr, placement, streams),
    )


def random_leaf_placement(depth: int, n_targets: int, delta: float, rng) -> TargetPlacement:
    leaves = rng.choice(2 ** depth, size=n_targets, replace=False) + 1
    return TargetPlacement(frozenset(NodeAddress(int(k), 0) for k in leaves), delta)


_ROUNDING = 1e-12


def ground_truth_targets(tree: TreeModel) -> frozenset:
    """Leaves above eta_0, plus (hierarchical trees) upper nodes whose residual clears eta_l."""
    out = set()
    for node in tree.nodes():
        if node.l > 0 and not tree.hierarchical:
            continue
        eta = tree.threshold(node.l)
        # (eta + delta) - delta may round above eta; treat such residuals as ties
        slack = _ROUNDING * (1.0 + abs(tree.mean(node)) + abs(eta))
        if tree.residual(node) > eta + slack:
            out.add(node)
    return frozenset(out)


def excise_target(tree: TreeModel, target: NodeAddress) -> TreeModel:
    """The same instance with one detected target removed."""
    if target not in ground_truth_targets(tree):
        raise ValueError(f"{target} is not a target of this tree")
    if tree.origin is None:
        raise ValueError("tree has no origin to rebuild from")
    return tree.origin.without(target)


def subtree_decomposition(tree: TreeModel, target: NodeAddress) -> List[List[NodeAddress]]:
    """Half-tree removal sets [T_L, ..., T_{l0+1}] for a target at level l0.

    T_L is the whole tree minus the half-tree containing the target; each next
    set repeats the removal inside the remaining half-tree.  The sets together
    with the target's own subtree partition the node set.
    """
    path = [target] + tree.ancestors(target)
    path.reverse()  # root ... target
    out = []
    for top, below in zip(path, path[1:]):
        part = [top]
        for sibling in tree.children(top):
            if sibling != below:
                part.extend(tree.subtree(sibling))
        out.append(part)
    return out


def check_ancestor_consistency(tree: TreeModel) -> bool:
    """Every node above its threshold has all ancestors above theirs."""
    for node in tree.nodes():
        if tree.mean(node) > tree.threshold(node.l):
            if any(tree.mean(a) <= tree.threshold(a.l) for a in tree.ancestors(node)):
                return False
    return True


# -- general trees ----------------------------------------------------------

def general_tree(depth: int, branching: Mapping[NodeAddress, int], thresholds=0.0, **kw) -> TreeModel:
    """Tree grown from the root, where ``branching[node]`` children are attached
    left to right and nodes are numbered 1.. per level in that order."""
    children = {}
    frontier = [NodeAddress(1, depth)]
    for l in range(depth, 0, -1):
        nxt = []
        counter = 0
        for node in frontier:
            d = int(branching.get(node, 0) if isinstance(branching, Mapping) else branching(node))
            kids = tuple(NodeAddress(counter + i + 1, l - 1) for i in range(d))
            counter += d
            children[node] = kids
            nxt.extend(kids)
        frontier = nxt
    return TreeModel(depth, thresholds, children_map=children, **kw)


def uniform_tree(depth: int, degree: int, thresholds=0.0, **kw) -> TreeModel:
    return general_tree(depth, lambda node: degree, thresholds, **kw)


def assign_means(tree: TreeModel, targets: Iterable[NodeAddress], delta: float,
                 streams: StreamFamily = NOISELESS) -> TreeModel:
    """Leaf-target instance on an arbitrary topology (same +/- delta rule as synthesize_means)."""
    targets = frozenset(targets)
    excess = _target_excess(tree, targets, delta)
    means = {}
    for node in tree.nodes():
        eta = tree.threshold(node.l)
        if node in targets:
            means[node] = eta + delta + excess.get(node, 0.0)
        elif node in excess:
            means[node] = eta + delta
        else:
            means[node] = eta - delta
    return TreeModel(tree.depth, tree.thresholds, {n: streams.at(m) for n, m in means.items()},
                     excess, tree.hierarchical, tree.children_map)


# -- text format ------------------------------------------------------------

def _spec_fields(spec: StreamSpec) -> str:
    parts = []
    if spec.family is Family.GAUSSIAN:
        parts.append(f"variance={spec.variance!r}")
    if spec.family is Family.HEAVY_TAIL:
        parts += [f"tail_index={spec.tail_index!r}", f"scale={spec.scale!r}"]
    if spec.tail.is_heavy:
        parts += [f"b={spec.tail.b!r}", f"u={spec.tail.u!r}"]
    elif spec.tail.xi is not None:
        parts.append(f"xi={spec.tail.xi!r}")
    return " ".join(parts)


def write_tree(tree: TreeModel, path) -> None:
    """Binary trees only: header, then ``k l family mean key=value ...`` per node."""
    if not tree.is_binary:
        raise ValueError("the text format covers binary trees only")
    lines = [
        "# cbrw tree",
        f"depth = {tree.depth}",
        "thresholds = " + " ".join(repr(t) for t in tree.thresholds),
        f"hierarchical = {'true' if tree.hierarchical else 'false'}",
    ]
    for node in tree.nodes():
        spec = tree.stream(node)
        extra = _spec_fields(spec)
        ex = tree.excess.get(node)
        if ex:
            extra = (extra + f" excess={ex!r}").strip()
        lines.append(f"{node.k} {node.l} {spec.family.value} {spec.mean!r} {extra}".rstrip())
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_tree(path) -> TreeModel:
    header, streams, excess = {}, {}, {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                if "=" in line.split()[0] or (len(line.split()) > 1 and line.split()[1] == "="):
                    key, value = (s.strip() for s in line.split("=", 1))
                    header[key] = value
                    continue
                fields = line.split()
                k, l, family, mean = int(fields[0]), int(fields[1]), Family(fields[2]), float(fields[3])
                kv = dict(f.split("=", 1) for f in fields[4:])
                ex = float(kv.pop("excess", 0.0))
                fam = StreamFamily(family, variance=float(kv.get("variance", 1.0)),
                                   xi=float(kv["xi"]) if "xi" in kv else None,
                                   b=float(kv["b"]) if "b" in kv else None,
                                   u=float(kv["u"]) if "u" in kv else None,
                                   tail_index=float(kv.get("tail_index", 2.5)),
                                   scale=float(kv.get("scale", 1.0)))
                node = NodeAddress(k, l)
                streams[node] = fam.at(mean)
                if ex:
                    excess[node] = ex
            except (ValueError, IndexError, KeyError) as err:
                raise ValueError(f"{path}:{lineno}: {err}") from None
    try:
        depth = int(header["depth"])
        thresholds = [float(t) for t in header["thresholds"].split()]
    except KeyError as err:
        raise ValueError(f"{path}: missing header field {err}") from None
    tree = TreeModel(depth, thresholds, streams, excess, header.get("hierarchical", "false") == "true")
    missing = [n for n in tree.nodes() if n not in streams]
    if missing:
        raise ValueError(f"{path}: no stream for nodes {missing[:5]}")
    return tree
