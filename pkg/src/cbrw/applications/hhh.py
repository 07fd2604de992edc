"""Hierarchical heavy hitters on a binary prefix tree built from a packet trace.

Node (k, l) of a depth-L tree is the (L - l)-bit prefix with value k - 1.
Sampling a node picks a packet uniformly from the trace and reports whether
its address carries the prefix, i.e. a Bernoulli stream with the prefix's
traffic fraction as mean.  A prefix is a hierarchical heavy hitter when its
traffic, after removing the traffic of heavy-hitter descendants, still
exceeds its level's volume threshold.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Sequence

import numpy as np

from ..hierarchy import NodeAddress, TreeModel, level_thresholds
from ..streams import bernoulli


def parse_address(text: str, width: int = 32) -> int:
    """Dotted-quad IPv4 or hexadecimal (with or without 0x) to an unsigned int of ``width`` bits."""
    s = text.strip()
    if "." in s:
        if width != 32:
            raise ValueError("dotted-quad addresses are 32 bits wide")
        return int(ipaddress.IPv4Address(s))
    value = int(s, 16)
    if value >> width:
        raise ValueError(f"address {s} does not fit in {width} bits")
    return value


def read_trace(path, width: int = 32) -> np.ndarray:
    out = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                out.append(parse_address(line, width))
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from None
    return np.asarray(out, dtype=np.uint64)


def prefix_counts(addresses: Sequence[int], depth: int, width: int = 32) -> Dict[NodeAddress, int]:
    """Packet count of every prefix node of a depth-``depth`` tree."""
    if depth > width:
        raise ValueError(f"depth {depth} exceeds address width {width}")
    leaves = np.asarray(addresses, dtype=np.uint64) >> np.uint64(width - depth)
    counts = np.bincount(leaves.astype(np.int64), minlength=1 << depth)
    out = {}
    for l in range(depth + 1):
        for k, c in enumerate(counts, 1):
            out[NodeAddress(k, l)] = int(c)
        counts = counts.reshape(-1, 2).sum(axis=1) if counts.size > 1 else counts
    return out


def discounted_targets(counts: Mapping[NodeAddress, int], total: int, depth: int, thresholds,
                       hierarchical: bool = True):
    """Targets and per-node excess fractions, computed bottom-up.

    A target's full fraction is charged to its parent's excess; a non-target
    passes its own excess up unchanged.
    """
    thr = level_thresholds(depth, thresholds)
    excess: Dict[NodeAddress, float] = {}
    targets = set()
    for l in range(depth + 1):
        for k in range(1, (1 << (depth - l)) + 1):
            node = NodeAddress(k, l)
            ex = 0.0
            if l > 0:
                for c in (NodeAddress(2 * k - 1, l - 1), NodeAddress(2 * k, l - 1)):
                    ex += counts[c] / total if c in targets else excess.get(c, 0.0)
            if ex:
                excess[node] = ex
            eligible = l == 0 or hierarchical
            if eligible and counts[node] / total - ex > thr[l]:
                targets.add(node)
    return frozenset(targets), excess


@dataclass(frozen=True)
class HHHOrigin:
    counts: Mapping[NodeAddress, int]
    total: int
    depth: int
    thresholds: tuple
    hierarchical: bool

    def tree(self) -> TreeModel:
        _, excess = discounted_targets(self.counts, self.total, self.depth, self.thresholds, self.hierarchical)
        streams = {n: bernoulli(c / self.total) for n, c in self.counts.items()}
        return TreeModel(self.depth, self.thresholds, streams, excess, self.hierarchical, origin=self)

    def without(self, target: NodeAddress) -> TreeModel:
        """Subtract the found prefix's traffic from its ancestors and silence its subtree."""
        shell = TreeModel(self.depth, self.thresholds)
        removed = self.counts[target]
        counts = dict(self.counts)
        for a in shell.ancestors(target):
            counts[a] -= removed
        for n in shell.subtree(target):
            counts[n] = 0
        return HHHOrigin(counts, self.total, self.depth, self.thresholds, self.hierarchical).tree()


def hhh_tree_from_trace(trace: Iterable[int], depth: int, volume_fractions, width: int = 32,
                        hierarchical: bool = True) -> TreeModel:
    addresses = np.fromiter((int(a) for a in trace), dtype=np.uint64)
    if addresses.size == 0:
        raise ValueError("empty trace")
    thr = level_thresholds(depth, volume_fractions)
    counts = prefix_counts(addresses, depth, width)
    return HHHOrigin(counts, int(addresses.size), depth, thr, hierarchical).tree()
