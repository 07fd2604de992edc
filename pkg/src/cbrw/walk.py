"""Confidence-bounds based random walk (CBRW) policies.

A walk sits at one node, probes neighbours with local sequential tests and
moves one edge per step.  Test parameters are chosen so every step moves
toward the target with probability above 1/2, and the declaration tests are
sharp enough that the total chance of declaring a wrong node stays below
epsilon.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

from .hierarchy import NodeAddress, TreeModel, excise_target, ground_truth_targets
from .seqtest import DEFAULT_BUDGET, Output, TestParams, run_local_test
from .streams import RandomSource

LEAF_P0_MAX = 1.0 - 1.0 / math.sqrt(2.0)
HIERARCHICAL_P0_MAX = 1.0 - 2.0 ** (-1.0 / 3.0)
DEFAULT_STEP_CAP_FACTOR = 50


class WalkMode(str, enum.Enum):
    LEAF = "leaf"
    HIERARCHICAL = "hierarchical"


class Action(str, enum.Enum):
    DESCEND_LEFT = "descend-left"
    DESCEND_RIGHT = "descend-right"
    DESCEND = "descend"
    ASCEND = "ascend"
    STAY_SHARPEN = "stay-sharpen"
    DECLARE = "declare"


class Termination(str, enum.Enum):
    DECLARATION = "declaration"
    STEP_CAP = "step-cap"
    BUDGET = "budget"
    ROOT_TEST = "root-test"


def walk_constant(p0: float, tests_per_step: int) -> float:
    """(1 - exp(-2 (1 - 2 (1 - p0)^m)^2))^-2 for m tests per step.

    Requires (1 - p0)^m > 1/2, i.e. a step is correct with probability above
    one half.
    """
    if not 0 < p0 < 1 or not (1.0 - p0) ** tests_per_step > 0.5:
        raise ValueError(f"p0={p0} outside (0, 1 - 2^(-1/{tests_per_step}))")
    drift = 1.0 - 2.0 * (1.0 - p0) ** tests_per_step
    return 1.0 / (1.0 - math.exp(-2.0 * drift * drift)) ** 2


def c_p0(p0: float) -> float:
    """Leaf-mode walk constant; p0 must lie in (0, 1 - 1/sqrt(2))."""
    if not 0 < p0 < LEAF_P0_MAX:
        raise ValueError(f"p0={p0} outside (0, {LEAF_P0_MAX:.6f})")
    return walk_constant(p0, 2)


def c_h_p0(p0: float) -> float:
    """Hierarchical-mode walk constant; p0 must lie in (0, 1 - 2^(-1/3))."""
    if not 0 < p0 < HIERARCHICAL_P0_MAX:
        raise ValueError(f"p0={p0} outside (0, {HIERARCHICAL_P0_MAX:.6f})")
    return walk_constant(p0, 3)


@dataclass(frozen=True)
class WalkConfig:
    p0: float = 0.2
    epsilon: float = 0.1
    mode: WalkMode = WalkMode.LEAF
    budget: int = DEFAULT_BUDGET
    step_cap: Optional[int] = None
    sample_cap: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", WalkMode(self.mode))
        if not 0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        upper = LEAF_P0_MAX if self.mode is WalkMode.LEAF else HIERARCHICAL_P0_MAX
        if not 0 < self.p0 < upper:
            raise ValueError(f"p0={self.p0} outside (0, {upper:.6f}) for {self.mode.value} mode")
        if self.budget < 1:
            raise ValueError("per-test budget must be >= 1")

    @property
    def constant(self) -> float:
        return c_p0(self.p0) if self.mode is WalkMode.LEAF else c_h_p0(self.p0)

    def replace(self, **kw) -> "WalkConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class TestRecord:
    node: NodeAddress
    alpha: float
    beta: float
    eta: float
    output: Output
    samples_used: int

    __test__ = False


@dataclass(frozen=True)
class TraceStep:
    """One walk step: where it was taken, what it did, which tests it ran, where it ended."""

    position: NodeAddress
    action: Action
    tests: Tuple[TestRecord, ...]
    destination: NodeAddress


@dataclass
class Detection:
    declared: Optional[NodeAddress]
    total_samples: int
    steps: int
    trace: List[TraceStep]
    terminated_by: Termination

    @property
    def tests(self) -> List[TestRecord]:
        return [t for step in self.trace for t in step.tests]

    @property
    def path(self) -> List[NodeAddress]:
        """Positions occupied at step boundaries, starting from the root."""
        if not self.trace:
            return []
        return [s.position for s in self.trace] + [self.trace[-1].destination]


@dataclass
class DetectionSet:
    declared: frozenset
    detections: List[Detection]
    root_checks: List[TestRecord]
    total_samples: int
    steps: int
    terminated_by: Termination

    @property
    def tests(self) -> List[TestRecord]:
        out = [t for d in self.detections for t in d.tests]
        return out + list(self.root_checks)


Probe = Callable[[NodeAddress, float, float], Tuple[int, Tuple[TestRecord, ...]]]


def stream_probe(tree: TreeModel, budget: int, rng: RandomSource) -> Probe:
    """Probe a node by running L(alpha, beta, eta_l) on its own stream."""

    def probe(node, alpha, beta):
        eta = tree.thresholds[node.l]
        verdict = run_local_test(tree.streams[node], TestParams(alpha, beta, eta, budget=budget), rng)
        return verdict.bit, (TestRecord(node, alpha, beta, eta, verdict.output, verdict.samples_used),)

    return probe


def _descend_action(i: int, n: int) -> Action:
    if i == 0:
        return Action.DESCEND_LEFT
    if i == 1 and n == 2:
        return Action.DESCEND_RIGHT
    return Action.DESCEND


class LeafWalker:
    """Walk that probes only children and declares from level 1."""

    def __init__(self, tree: TreeModel, probe: Probe, p0_of: Callable[[NodeAddress], float],
                 declare_alpha: float):
        self.tree = tree
        self.probe = probe
        self.p0_of = p0_of
        self.declare_alpha = declare_alpha
        self.position = tree.root
        self.declared: Optional[NodeAddress] = None

    def step(self) -> TraceStep:
        node = self.position
        kids = self.tree.children(node)
        p = self.p0_of(node)
        alpha = p if node.l > 1 else self.declare_alpha
        records = []
        for i, child in enumerate(kids):
            bit, recs = self.probe(child, alpha, p)
            records.extend(recs)
            if bit:
                if node.l > 1:
                    self.position = child
                    return TraceStep(node, _descend_action(i, len(kids)), tuple(records), child)
                self.declared = child
                return TraceStep(node, Action.DECLARE, tuple(records), child)
        self.position = self.tree.parent(node)
        return TraceStep(node, Action.ASCEND, tuple(records), self.position)


class HierarchicalWalker:
    """Walk that tests the current node too and stays put, halving alpha and beta, on pattern (1, 0, ..., 0)."""

    def __init__(self, tree: TreeModel, probe: Probe, p0_of: Callable[[NodeAddress], float],
                 declare_alpha: float):
        self.tree = tree
        self.probe = probe
        self.p0_of = p0_of
        self.declare_alpha = declare_alpha
        self.position = tree.root
        self.declared: Optional[NodeAddress] = None
        self.alpha = self.beta = p0_of(tree.root)

    def _move(self, node: NodeAddress) -> None:
        self.position = node
        self.alpha = self.beta = self.p0_of(node)

    def step(self) -> TraceStep:
        node = self.position
        if node.l == 0:
            bit, recs = self.probe(node, self.declare_alpha, self.beta)
            if bit:
                self.declared = node
                return TraceStep(node, Action.DECLARE, recs, node)
            self._move(self.tree.parent(node))
            return TraceStep(node, Action.ASCEND, recs, self.position)
        bit, recs = self.probe(node, self.alpha, self.beta)
        records = list(recs)
        if not bit:
            self._move(self.tree.parent(node))
            return TraceStep(node, Action.ASCEND, tuple(records), self.position)
        kids = self.tree.children(node)
        for i, child in enumerate(kids):
            bit, recs = self.probe(child, self.alpha, self.beta)
            records.extend(recs)
            if bit:
                self._move(child)
                return TraceStep(node, _descend_action(i, len(kids)), tuple(records), child)
        if self.alpha < self.declare_alpha:
            self.declared = node
            return TraceStep(node, Action.DECLARE, tuple(records), node)
        self.alpha /= 2.0
        self.beta /= 2.0
        return TraceStep(node, Action.STAY_SHARPEN, tuple(records), node)


def default_step_cap(depth: int, constant: float) -> int:
    return int(math.ceil(DEFAULT_STEP_CAP_FACTOR * depth * constant))


def run_walker(walker, step_cap: int, sample_cap: Optional[int] = None) -> Detection:
    trace: List[TraceStep] = []
    samples = 0
    while True:
        if len(trace) >= step_cap:
            return Detection(None, samples, len(trace), trace, Termination.STEP_CAP)
        if sample_cap is not None and samples >= sample_cap:
            return Detection(None, samples, len(trace), trace, Termination.BUDGET)
        step = walker.step()
        trace.append(step)
        samples += sum(t.samples_used for t in step.tests)
        if walker.declared is not None:
            return Detection(walker.declared, samples, len(trace), trace, Termination.DECLARATION)


# -- single-target searches on binary trees -----------------------------------

def _leaf_walker(tree, cfg, rng, epsilon=None):
    eps = cfg.epsilon if epsilon is None else epsilon
    const = c_p0(cfg.p0)
    p0 = cfg.p0
    return LeafWalker(tree, stream_probe(tree, cfg.budget, rng), lambda node: p0,
                      eps / (2 * tree.depth * const))


def _hierarchical_walker(tree, cfg, rng, epsilon=None):
    eps = cfg.epsilon if epsilon is None else epsilon
    const = c_h_p0(cfg.p0)
    p0 = cfg.p0
    return HierarchicalWalker(tree, stream_probe(tree, cfg.budget, rng), lambda node: p0,
                              eps / (3 * tree.depth * const))


def _require_binary(tree: TreeModel) -> None:
    if not tree.is_binary:
        raise ValueError("use detect_general_tree for non-binary trees")


def detect_leaf(tree: TreeModel, cfg: WalkConfig, rng: RandomSource) -> Detection:
    """Single leaf-level target search, starting from the root."""
    if cfg.mode is not WalkMode.LEAF:
        raise ValueError("detect_leaf needs a leaf-mode WalkConfig")
    _require_binary(tree)
    cap = cfg.step_cap or default_step_cap(tree.depth, c_p0(cfg.p0))
    return run_walker(_leaf_walker(tree, cfg, rng), cap, cfg.sample_cap)


def detect_hierarchical(tree: TreeModel, cfg: WalkConfig, rng: RandomSource) -> Detection:
    """Single target search where the target may be an internal node."""
    if cfg.mode is not WalkMode.HIERARCHICAL:
        raise ValueError("detect_hierarchical needs a hierarchical-mode WalkConfig")
    _require_binary(tree)
    cap = cfg.step_cap or default_step_cap(tree.depth, c_h_p0(cfg.p0))
    return run_walker(_hierarchical_walker(tree, cfg, rng), cap, cfg.sample_cap)


def detect(tree: TreeModel, cfg: WalkConfig, rng: RandomSource) -> Detection:
    if not tree.is_binary:
        return detect_general_tree(tree, cfg, rng)
    if cfg.mode is WalkMode.LEAF:
        return detect_leaf(tree, cfg, rng)
    return detect_hierarchical(tree, cfg, rng)


# -- general trees --------------------------------------------------------------

def _tests_per_step(children: int, mode: WalkMode) -> int:
    return children if mode is WalkMode.LEAF else children + 1


def node_p0(cfg: WalkConfig, children: int) -> float:
    """p0 for a node with the given number of children.

    The configured p0 is read as a fraction of the binary-tree admissible
    range and transported to the node's own range (1 - p0)^m > 1/2, m being
    the number of tests in one step.  Binary nodes keep cfg.p0 exactly.
    """
    binary_m = _tests_per_step(2, cfg.mode)
    m = _tests_per_step(children, cfg.mode)
    if m <= binary_m:
        return cfg.p0
    limit = lambda k: 1.0 - 2.0 ** (-1.0 / k)
    return cfg.p0 * limit(m) / limit(binary_m)


def general_constant(tree: TreeModel, cfg: WalkConfig) -> float:
    """Worst-case walk constant over the internal nodes at their own p0."""
    worst = 0.0
    for node in tree.nodes():
        if node.l == 0:
            continue
        d = len(tree.children(node))
        m = _tests_per_step(d, cfg.mode)
        binary_m = _tests_per_step(2, cfg.mode)
        worst = max(worst, walk_constant(node_p0(cfg, d), max(m, binary_m)))
    return worst


def detect_general_tree(tree: TreeModel, cfg: WalkConfig, rng: RandomSource,
                        epsilon: Optional[float] = None) -> Detection:
    """CBRW on a tree with per-node degrees; reduces to detect_leaf/detect_hierarchical on binary trees."""
    walker = _general_walker(tree, cfg, rng, epsilon)
    const = general_constant(tree, cfg)
    cap = cfg.step_cap or default_step_cap(tree.depth, const)
    return run_walker(walker, cap, cfg.sample_cap)


def _general_walker(tree, cfg, rng, epsilon=None):
    eps = cfg.epsilon if epsilon is None else epsilon
    const = general_constant(tree, cfg)
    big_d = tree.max_degree
    p0_cache = {}

    def p0_of(node):
        if node not in p0_cache:
            p0_cache[node] = node_p0(cfg, len(tree.children(node))) if node.l > 0 else cfg.p0
        return p0_cache[node]

    probe = stream_probe(tree, cfg.budget, rng)
    if cfg.mode is WalkMode.LEAF:
        return LeafWalker(tree, probe, p0_of, eps / ((big_d - 1) * tree.depth * const))
    return HierarchicalWalker(tree, probe, p0_of, eps / (big_d * tree.depth * const))


# -- unknown number of targets ------------------------------------------------

def _without(tree: TreeModel, node: NodeAddress) -> TreeModel:
    if node in ground_truth_targets(tree):
        return excise_target(tree, node)
    return tree


def detect_multi(tree: TreeModel, cfg: WalkConfig, s_max: int, rng: RandomSource) -> DetectionSet:
    """Find targets one by one until a scheduled root test reports no remaining anomaly.

    Each single-target search runs at confidence epsilon / (2 s_max); a found
    target is excised before the next search.  The root is tested with
    L(eps0, eps0, eta_L) every ceil(L * C) walk moves of the current search.
    """
    if s_max < 1:
        raise ValueError("s_max must be >= 1")
    if tree.origin is None:
        raise ValueError("multi-target search needs a tree that knows how to excise a found target")
    eps0 = cfg.epsilon / (2 * s_max)
    if tree.is_binary:
        const = cfg.constant
        make = _leaf_walker if cfg.mode is WalkMode.LEAF else _hierarchical_walker
    else:
        const = general_constant(tree, cfg)
        make = _general_walker
    every = int(math.ceil(tree.depth * const))
    cap = (cfg.step_cap or default_step_cap(tree.depth, const)) * (s_max + 1)
    found: List[NodeAddress] = []
    detections: List[Detection] = []
    root_checks: List[TestRecord] = []
    samples = steps = 0
    current = tree

    def closing(term):
        return DetectionSet(frozenset(found), detections, root_checks, samples, steps, term)

    while True:
        walker = make(current, cfg, rng, eps0)
        root_probe = stream_probe(current, cfg.budget, rng)
        trace: List[TraceStep] = []
        search_samples = 0
        while walker.declared is None:
            if steps >= cap:
                detections.append(Detection(None, search_samples, len(trace), trace, Termination.STEP_CAP))
                return closing(Termination.STEP_CAP)
            if cfg.sample_cap is not None and samples >= cfg.sample_cap:
                detections.append(Detection(None, search_samples, len(trace), trace, Termination.BUDGET))
                return closing(Termination.BUDGET)
            step = walker.step()
            trace.append(step)
            used = sum(t.samples_used for t in step.tests)
            search_samples += used
            samples += used
            steps += 1
            if walker.declared is None and len(trace) % every == 0:
                bit, recs = root_probe(current.root, eps0, eps0)
                root_checks.extend(recs)
                samples += recs[0].samples_used
                if not bit:
                    detections.append(Detection(None, search_samples, len(trace), trace, Termination.ROOT_TEST))
                    return closing(Termination.ROOT_TEST)
        detections.append(Detection(walker.declared, search_samples, len(trace), trace, Termination.DECLARATION))
        if walker.declared not in found:
            found.append(walker.declared)
        current = _without(current, walker.declared)
