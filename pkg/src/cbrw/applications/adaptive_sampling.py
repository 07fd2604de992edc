"""Locating the jump of a step function on [0, 1] from noisy point samples.

The unknown function is h(x) = 1{x > z*}.  The unit interval is cut into
2^L cells of width delta; node (k, l) covers cells (k-1) 2^l + 1 .. k 2^l, so
children partition their parent.  A node holds the jump when its left edge
reads 0 and its right edge reads 1, and the leaf-target walk finds the cell
[a, b) containing z*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Tuple, Union

from ..hierarchy import NodeAddress, TreeModel
from ..seqtest import DEFAULT_BUDGET, Output, TestParams, run_local_test
from ..streams import RandomSource, StreamSpec, bernoulli, gaussian
from ..walk import Detection, LeafWalker, TestRecord, c_p0, default_step_cap, run_walker

P0_MAX = 1.0 - 2.0 ** (-1.0 / 4.0)
THRESHOLD = 0.5


@dataclass(frozen=True)
class AdditiveNoise:
    """Zero-mean Gaussian noise added to the 0/1 label."""

    variance: float = 0.25
    xi: Optional[float] = None

    def __post_init__(self):
        if not self.variance > 0:
            raise ValueError("additive noise variance must be > 0")

    def stream(self, label: int) -> StreamSpec:
        return gaussian(float(label), self.variance, xi=self.xi)


@dataclass(frozen=True)
class FlipNoise:
    """The label is flipped with probability p(x) < 1/2; p may be a constant or a function of x."""

    p: Union[float, Callable[[float], float]] = 0.2

    def __post_init__(self):
        if not callable(self.p) and not 0 <= self.p < 0.5:
            raise ValueError(f"flip probability must lie in [0, 1/2), got {self.p}")

    def at(self, x: float) -> float:
        p = self.p(x) if callable(self.p) else self.p
        if not 0 <= p < 0.5:
            raise ValueError(f"flip probability p({x}) = {p} is not below 1/2")
        return p

    def stream(self, label: int, x: float) -> StreamSpec:
        p = self.at(x)
        return bernoulli(1.0 - p if label else p)


NOISELESS = FlipNoise(0.0)


@dataclass(frozen=True)
class StepOracle:
    z_star: float
    noise: Union[AdditiveNoise, FlipNoise] = NOISELESS

    def __post_init__(self):
        if not 0 < self.z_star < 1:
            raise ValueError(f"z* must lie in (0, 1), got {self.z_star}")

    def label(self, x: float) -> int:
        return 1 if x > self.z_star else 0

    def stream(self, x: float) -> StreamSpec:
        if isinstance(self.noise, AdditiveNoise):
            return self.noise.stream(self.label(x))
        return self.noise.stream(self.label(x), x)


class Interval(NamedTuple):
    lo: float
    hi: float

    def contains(self, z: float) -> bool:
        """Membership under the label convention: the cell [a, b) holds z* when h(a)=0 and h(b)=1."""
        return self.lo <= z < self.hi


def node_interval(node: NodeAddress, depth: int) -> Interval:
    width = 2.0 ** (node.l - depth)
    return Interval((node.k - 1) * width, node.k * width)


def interval_probe(node: NodeAddress, oracle: StepOracle, params: TestParams, rng: RandomSource,
                   depth: int) -> Tuple[int, Tuple[TestRecord, ...]]:
    """1 iff the left-edge test reads 0 and the right-edge test reads 1.

    The right edge is not sampled once the left edge has failed to read 0,
    since the answer is already 0.
    """
    lo, hi = node_interval(node, depth)
    left = run_local_test(oracle.stream(lo), params, rng)
    records = [TestRecord(node, params.alpha, params.beta, params.eta, left.output, left.samples_used)]
    if left.output is not Output.ZERO:
        return 0, tuple(records)
    right = run_local_test(oracle.stream(hi), params, rng)
    records.append(TestRecord(node, params.alpha, params.beta, params.eta, right.output, right.samples_used))
    return right.bit, tuple(records)


def _depth_of(delta_resolution: float) -> int:
    depth = round(-math.log2(delta_resolution))
    if depth < 1 or not math.isclose(2.0 ** -depth, delta_resolution, rel_tol=1e-12):
        raise ValueError(f"delta_resolution must be 2^-L with L >= 1, got {delta_resolution}")
    return depth


def adaptive_sampling_walk(oracle: StepOracle, delta_resolution: float, epsilon: float, p0: float,
                           rng: RandomSource, budget: int = DEFAULT_BUDGET,
                           step_cap: Optional[int] = None) -> Detection:
    if not 0 < p0 < P0_MAX:
        raise ValueError(f"p0={p0} outside (0, {P0_MAX:.6f})")
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    depth = _depth_of(delta_resolution)
    tree = TreeModel(depth, THRESHOLD)
    const = c_p0(p0)

    def probe(node, alpha, beta):
        return interval_probe(node, oracle, TestParams(alpha, beta, THRESHOLD, budget=budget), rng, depth)

    walker = LeafWalker(tree, probe, lambda node: p0, epsilon / (2 * depth * const))
    return run_walker(walker, step_cap or default_step_cap(depth, const))


def adaptive_sampling_search(oracle: StepOracle, delta_resolution: float, epsilon: float, p0: float,
                             rng: RandomSource, **kw) -> Optional[Interval]:
    """The declared cell of width delta_resolution, or None if the walk hit its step cap."""
    det = adaptive_sampling_walk(oracle, delta_resolution, epsilon, p0, rng, **kw)
    if det.declared is None:
        return None
    return node_interval(det.declared, _depth_of(delta_resolution))
