import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbrw.applications.adaptive_sampling import (NOISELESS, P0_MAX, AdditiveNoise, FlipNoise, Interval, StepOracle,
                                                 adaptive_sampling_search, adaptive_sampling_walk, interval_probe,
                                                 node_interval)
from cbrw.applications.group_testing import GroupTestInstance, defect_targets, group_testing_tree, read_instance
from cbrw.applications.hhh import (discounted_targets, hhh_tree_from_trace, parse_address, prefix_counts,
                                   read_trace)
from cbrw.hierarchy import NodeAddress, TreeModel, excise_target, ground_truth_targets
from cbrw.seqtest import TestParams
from cbrw.streams import random_source
from cbrw.walk import WalkConfig, detect_multi

N = NodeAddress


class TestGroupTesting:
    @pytest.mark.parametrize("K", [2, 4, 16, 64, 256])
    def test_exhaustive_mapping(self, K):
        rng = np.random.default_rng(K)
        defects = set(rng.choice(np.arange(1, K + 1), size=min(3, K - 1), replace=False).tolist())
        inst = GroupTestInstance(K, defects)
        tree = group_testing_tree(inst)
        assert tree.depth == int(math.log2(K))
        for node in tree.nodes():
            dirty = any(d in inst.group(node) for d in defects)
            assert tree.mean(node) == (0.8 if dirty else 0.2)
            assert len(inst.group(node)) == 2 ** node.l
        assert ground_truth_targets(tree) == defect_targets(defects)

    def test_validation(self):
        for kw in (dict(population=12, defects=()), dict(population=8, defects=(9,)),
                   dict(population=8, defects=(), q_fa=0.5), dict(population=8, defects=(), q_d=0.5)):
            with pytest.raises(ValueError):
                GroupTestInstance(**kw)

    def test_excise_removes_defect(self):
        tree = group_testing_tree(GroupTestInstance(16, {3, 11}))
        after = excise_target(tree, N(3, 0))
        assert ground_truth_targets(after) == {N(11, 0)}
        assert after.mean(N(1, 4)) == 0.8 and after.mean(N(1, 2)) == 0.2

    def test_noiseless_multi_search(self):
        tree = group_testing_tree(GroupTestInstance(64, {5, 40}, q_fa=0.0, q_d=1.0))
        det = detect_multi(tree, WalkConfig(), 2, random_source(0))
        assert det.declared == defect_targets({5, 40})

    def test_noisy_multi_search(self):
        errors = 0
        for i in range(30):
            tree = group_testing_tree(GroupTestInstance(32, {7, 20}))
            errors += detect_multi(tree, WalkConfig(), 2, random_source(3, "gt", i)).declared != {N(7, 0), N(20, 0)}
        assert errors <= 6

    def test_instance_file(self, tmp_path):
        p = tmp_path / "gt.txt"
        p.write_text("# a population of 32\nK = 32\ndefects = 4, 19\nq_fa = 0.1\n")
        inst = read_instance(p)
        assert inst == GroupTestInstance(32, {4, 19}, 0.1, 0.8)
        p.write_text("defects = 1\n")
        with pytest.raises(ValueError, match="missing key"):
            read_instance(p)
        p.write_text("K 8\n")
        with pytest.raises(ValueError, match=":1:"):
            read_instance(p)


class TestIntervalProbe:
    def test_node_interval(self):
        assert node_interval(N(1, 3), 3) == Interval(0.0, 1.0)
        assert node_interval(N(3, 1), 3) == Interval(0.5, 0.75)
        assert node_interval(N(8, 0), 3) == Interval(0.875, 1.0)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(1e-3, 1 - 1e-3), st.integers(1, 10))
    def test_noiseless_exhaustive(self, z, depth):
        oracle = StepOracle(z)
        params = TestParams(0.1, 0.1, 0.5)
        rng = random_source(0)
        for node in TreeModel(depth, 0.5).nodes():
            bit, records = interval_probe(node, oracle, params, rng, depth)
            assert bit == int(node_interval(node, depth).contains(z))
            assert len(records) in (1, 2)

    def test_short_circuit_on_left_edge(self):
        bit, records = interval_probe(N(2, 1), StepOracle(0.2), TestParams(0.1, 0.1, 0.5), random_source(0), 2)
        assert bit == 0 and len(records) == 1

    def test_flip_noise_probe_rate(self):
        # far from z*, each edge test is a Bernoulli(0.2) vs Bernoulli(0.8) test at 1/2
        oracle = StepOracle(0.37, FlipNoise(0.2))
        node = N(2, 2)  # [0.25, 0.5)
        rng = random_source(1, "flip")
        ones = sum(interval_probe(node, oracle, TestParams(0.1, 0.1, 0.5), rng, 4)[0] for _ in range(500))
        assert ones / 500 >= 0.9 - 3 * math.sqrt(0.09 / 500)

    def test_additive_noise_stream(self):
        s = StepOracle(0.5, AdditiveNoise(0.25)).stream(0.75)
        assert s.mean == 1.0 and s.variance == 0.25

    def test_flip_function_validated(self):
        with pytest.raises(ValueError):
            StepOracle(0.5, FlipNoise(lambda x: 0.6)).stream(0.2)
        with pytest.raises(ValueError):
            FlipNoise(0.5)
        with pytest.raises(ValueError):
            StepOracle(1.0)


class TestAdaptiveSearch:
    def test_noiseless_example(self):
        cell = adaptive_sampling_search(StepOracle(0.37), 2 ** -6, 0.1, 0.1, random_source(0))
        assert cell == Interval(0.359375, 0.375) and cell.contains(0.37)

    def test_boundary_example(self):
        # z* on a grid point. The label is 0 at z*, so the cell to its right is returned.
        cell = adaptive_sampling_search(StepOracle(0.5), 0.25, 0.1, 0.1, random_source(0))
        assert cell == Interval(0.5, 0.75)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1e-3, 1 - 1e-3), st.integers(1, 10))
    def test_noiseless_always_correct(self, z, depth):
        cell = adaptive_sampling_search(StepOracle(z), 2.0 ** -depth, 0.1, 0.1, random_source(0))
        assert cell is not None and cell.contains(z) and cell.hi - cell.lo == 2.0 ** -depth

    def test_noisy_reliability(self):
        errors = 0
        for i in range(100):
            cell = adaptive_sampling_search(StepOracle(0.37, FlipNoise(0.2)), 2 ** -6, 0.1, 0.1,
                                            random_source(2, "as", i))
            errors += cell is None or not cell.contains(0.37)
        assert errors / 100 <= 0.1 + 3 * 0.03

    def test_state_dependent_noise(self):
        oracle = StepOracle(0.6, FlipNoise(lambda x: 0.4 - 0.3 * abs(x - 0.6)))
        cell = adaptive_sampling_search(oracle, 2 ** -4, 0.1, 0.1, random_source(5))
        assert cell is not None

    def test_p0_domain(self):
        with pytest.raises(ValueError):
            adaptive_sampling_walk(StepOracle(0.5), 0.25, 0.1, P0_MAX, random_source(0))
        with pytest.raises(ValueError):
            adaptive_sampling_walk(StepOracle(0.5), 0.3, 0.1, 0.1, random_source(0))
        assert NOISELESS.at(0.3) == 0.0


def _trace(spec):
    """Addresses from (prefix value, prefix bits, count) triples, padded with low bits."""
    out = []
    for value, bits, count in spec:
        for i in range(count):
            out.append((value << (32 - bits)) | (i % (1 << (32 - bits))))
    return out


class TestHHH:
    def test_parse(self):
        assert parse_address("10.0.0.1") == 0x0A000001
        assert parse_address("0xff", width=8) == 255
        assert parse_address("ff", width=8) == 255
        with pytest.raises(ValueError):
            parse_address("1ff", width=8)

    def test_read_trace(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("10.0.0.1\n# comment\n\n192.168.1.1\n")
        np.testing.assert_array_equal(read_trace(p), [0x0A000001, 0xC0A80101])
        p.write_text("10.0.0.1\nbogus.addr\n")
        with pytest.raises(ValueError, match=":2:"):
            read_trace(p)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 2**32 - 1), min_size=1, max_size=200), st.integers(1, 8))
    def test_counts_sum(self, addrs, depth):
        counts = prefix_counts(addrs, depth)
        assert counts[N(1, depth)] == len(addrs)
        for l in range(1, depth + 1):
            for k in range(1, 2 ** (depth - l) + 1):
                assert counts[N(k, l)] == counts[N(2 * k - 1, l - 1)] + counts[N(2 * k, l - 1)]

    def test_discounting_example(self):
        # depth 2: leaf 1 has 50%, leaf 3 has 20%, leaf 4 has 20%, leaf 2 has 10%
        counts = prefix_counts(_trace([(0, 2, 50), (1, 2, 10), (2, 2, 20), (3, 2, 20)]), 2)
        targets, excess = discounted_targets(counts, 100, 2, 0.3)
        # leaf 1 is heavy; (2,1) carries 40% undiscounted; root keeps only 10%
        assert targets == {N(1, 0), N(2, 1)}
        assert excess[N(1, 1)] == pytest.approx(0.5)
        assert excess[N(1, 2)] == pytest.approx(0.9)
        leaf_only, _ = discounted_targets(counts, 100, 2, 0.3, hierarchical=False)
        assert leaf_only == {N(1, 0)}

    def test_tree_and_excise(self):
        tree = hhh_tree_from_trace(_trace([(0, 2, 50), (1, 2, 10), (2, 2, 20), (3, 2, 20)]), 2, 0.3)
        assert tree.mean(N(2, 1)) == pytest.approx(0.4)
        assert ground_truth_targets(tree) == {N(1, 0), N(2, 1)}
        after = excise_target(tree, N(1, 0))
        assert after.mean(N(1, 1)) == pytest.approx(0.1) and after.mean(N(1, 0)) == 0.0
        assert ground_truth_targets(after) == {N(2, 1)}

    def test_empty_trace_rejected(self):
        with pytest.raises(ValueError):
            hhh_tree_from_trace([], 3, 0.2)

    def test_monte_carlo_recovers_hhh(self):
        trace = _trace([(0, 3, 40), (5, 3, 15), (6, 3, 15), (2, 3, 10), (3, 3, 10), (7, 3, 10)])
        tree = hhh_tree_from_trace(trace, 3, 0.3)
        truth = ground_truth_targets(tree)
        # (1,1) is heavy only through (1,0); the root keeps 20% after discounting
        assert truth == {N(1, 0), N(2, 2)}
        cfg = WalkConfig(p0=0.1, epsilon=0.1, mode="hierarchical")
        hits = sum(detect_multi(tree, cfg, 4, random_source(7, "hhh", i)).declared == truth for i in range(20))
        assert hits >= 16
