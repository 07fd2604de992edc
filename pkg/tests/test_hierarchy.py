import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbrw.hierarchy import (Direction, NodeAddress, PlacementMode, StreamFamily, TargetPlacement, TreeModel,
                            assign_means, check_ancestor_consistency, excise_target, general_tree,
                            ground_truth_targets, navigate, random_leaf_placement, read_tree,
                            subtree_decomposition, synthesize_means, uniform_tree, write_tree)
from cbrw.streams import Family

N = NodeAddress


def mixed_targets():
    """Depth-3 tree with leaf target (1,0) and hierarchical target (3,1)."""
    return synthesize_means(3, 0.0, TargetPlacement({(1, 0), (3, 1)}, 1.0, PlacementMode.HIERARCHICAL))


@st.composite
def binary_node(draw, max_depth=12):
    depth = draw(st.integers(1, max_depth))
    l = draw(st.integers(0, depth))
    k = draw(st.integers(1, 2 ** (depth - l)))
    return depth, N(k, l)


class TestTopology:
    def test_depth3_navigation(self):
        t = TreeModel(3, 0.0)
        assert navigate(t, N(1, 0), Direction.PARENT) == N(1, 1)
        assert t.children(N(1, 3)) == (N(1, 2), N(2, 2))
        assert navigate(t, N(1, 3), Direction.PARENT) == N(1, 3)

    def test_child_of_leaf_rejected(self):
        t = TreeModel(3, 0.0)
        with pytest.raises(ValueError):
            navigate(t, N(4, 0), Direction.LEFT_CHILD)
        with pytest.raises(ValueError):
            navigate(t, N(9, 0), Direction.PARENT)

    @given(binary_node())
    def test_child_parent_round_trip(self, dn):
        depth, node = dn
        t = TreeModel(depth, 0.0)
        if node.l == 0:
            return
        for d in (Direction.LEFT_CHILD, Direction.RIGHT_CHILD, 0, 1):
            assert navigate(t, navigate(t, node, d), Direction.PARENT) == node

    def test_sizes(self):
        for L in range(1, 8):
            t = TreeModel(L, 0.0)
            assert len(list(t.nodes())) == 2 ** (L + 1) - 1
            assert len(t.leaves()) == 2 ** L

    @given(binary_node(8), st.data())
    def test_distance_matches_path_length(self, dn, data):
        depth, a = dn
        t = TreeModel(depth, 0.0)
        nodes = list(t.nodes())
        b = nodes[data.draw(st.integers(0, len(nodes) - 1))]
        up_a = [a] + t.ancestors(a)
        up_b = [b] + t.ancestors(b)
        common = next(x for x in up_a if x in up_b)
        assert t.distance(a, b) == up_a.index(common) + up_b.index(common)

    def test_threshold_forms(self):
        assert TreeModel(2, 0.5).thresholds == (0.5, 0.5, 0.5)
        assert TreeModel(2, [0.1, 0.2, 0.3]).thresholds == (0.1, 0.2, 0.3)
        assert TreeModel(2, {0: 1, 1: 2, 2: 3}).thresholds == (1.0, 2.0, 3.0)
        with pytest.raises(ValueError):
            TreeModel(2, [0.1, 0.2])
        with pytest.raises(ValueError):
            TreeModel(0, 0.0)


class TestSynthesize:
    def test_empty_placement(self):
        t = synthesize_means(4, 0.0, TargetPlacement(set(), 1.0))
        assert all(t.mean(n) == -1.0 for n in t.nodes())
        assert ground_truth_targets(t) == frozenset()

    def test_single_leaf_path(self):
        t = synthesize_means(3, 0.0, TargetPlacement({(1, 0)}, 1.0))
        up = {N(1, 0), N(1, 1), N(1, 2), N(1, 3)}
        for n in t.nodes():
            assert t.mean(n) == (1.0 if n in up else -1.0)

    def test_mixed_target_labels(self):
        t = mixed_targets()
        assert ground_truth_targets(t) == {N(1, 0), N(3, 1)}
        for n in (N(3, 1), N(2, 2), N(1, 3)):
            assert t.mean(n) > 0
        for n in (N(5, 0), N(6, 0)):
            assert t.mean(n) < 0

    def test_reflecting_points_below_on_residual(self):
        t = synthesize_means(4, 0.0, TargetPlacement({(2, 0), (7, 0)}, 1.0))
        assert ground_truth_targets(t) == {N(2, 0), N(7, 0)}
        assert t.residual(N(1, 4)) == pytest.approx(-1.0)  # two targets below, 2 delta of excess

    def test_leaf_only_rejects_upper_targets(self):
        with pytest.raises(ValueError):
            TargetPlacement({(1, 1)}, 1.0)
        with pytest.raises(ValueError):
            TargetPlacement({(1, 0)}, 0.0)
        with pytest.raises(ValueError):
            synthesize_means(2, 0.0, TargetPlacement({(5, 0)}, 1.0))

    def test_stream_family_attached(self):
        t = synthesize_means(2, 0.0, TargetPlacement({(1, 0)}, 1.0), StreamFamily(Family.GAUSSIAN, variance=2.0))
        assert all(t.stream(n).family is Family.GAUSSIAN and t.stream(n).variance == 2.0 for n in t.nodes())

    def test_round_trip_every_single_placement(self):
        for depth in range(1, 7):
            for node in TreeModel(depth, 0.0).nodes():
                mode = PlacementMode.LEAF_ONLY if node.l == 0 else PlacementMode.HIERARCHICAL
                t = synthesize_means(depth, 0.0, TargetPlacement({node}, 1.0, mode))
                assert ground_truth_targets(t) == {node}
                assert check_ancestor_consistency(t)

    @settings(max_examples=150, deadline=None)
    @given(st.integers(1, 6), st.data())
    def test_round_trip_random_placements(self, depth, data):
        nodes = list(TreeModel(depth, 0.0).nodes())
        idx = data.draw(st.sets(st.integers(0, len(nodes) - 1), max_size=6))
        targets = {nodes[i] for i in idx}
        delta = data.draw(st.floats(0.1, 3.0))
        thr = data.draw(st.lists(st.floats(-2, 2), min_size=depth + 1, max_size=depth + 1))
        t = synthesize_means(depth, thr, TargetPlacement(targets, delta, PlacementMode.HIERARCHICAL))
        assert ground_truth_targets(t) == targets
        assert check_ancestor_consistency(t)

    def test_random_leaf_placement(self):
        p = random_leaf_placement(5, 3, 1.0, np.random.default_rng(0))
        assert len(p.targets) == 3 and all(t.l == 0 and 1 <= t.k <= 32 for t in p.targets)


class TestExcise:
    def test_excise_leaf_keeps_upper_target(self):
        t = excise_target(mixed_targets(), N(1, 0))
        assert ground_truth_targets(t) == {N(3, 1)}
        assert t.mean(N(1, 1)) < 0 and t.mean(N(1, 2)) < 0
        assert t.mean(N(1, 3)) > 0 and t.mean(N(2, 2)) > 0

    def test_single_target_to_empty(self):
        t = synthesize_means(3, 0.0, TargetPlacement({(4, 0)}, 1.0))
        e = excise_target(t, N(4, 0))
        assert ground_truth_targets(e) == frozenset()
        assert all(e.mean(n) < 0 for n in e.nodes())

    def test_twice_rejected(self):
        t = excise_target(mixed_targets(), N(1, 0))
        with pytest.raises(ValueError):
            excise_target(t, N(1, 0))


class TestDecomposition:
    def test_depth3_leftmost_leaf(self):
        sets = subtree_decomposition(TreeModel(3, 0.0), N(1, 0))
        assert [set(s) for s in sets] == [
            {N(1, 3), N(2, 2), N(3, 1), N(4, 1), N(5, 0), N(6, 0), N(7, 0), N(8, 0)},
            {N(1, 2), N(2, 1), N(3, 0), N(4, 0)},
            {N(1, 1), N(2, 0)},
        ]

    def test_depth_one(self):
        assert [set(s) for s in subtree_decomposition(TreeModel(1, 0.0), N(1, 0))] == [{N(1, 1), N(2, 0)}]

    @settings(max_examples=200, deadline=None)
    @given(binary_node(12))
    def test_partition(self, dn):
        depth, target = dn
        t = TreeModel(depth, 0.0)
        parts = [set(s) for s in subtree_decomposition(t, target)] + [set(t.subtree(target))]
        assert len(parts) == depth - target.l + 1
        assert sum(len(p) for p in parts) == 2 ** (depth + 1) - 1
        assert set().union(*parts) == set(t.nodes())


class TestGeneralTrees:
    def test_uniform_ternary(self):
        t = uniform_tree(2, 3)
        assert len(t.leaves()) == 9 and t.max_degree == 4 and not t.is_binary
        assert t.children(N(2, 1)) == (N(4, 0), N(5, 0), N(6, 0))
        assert t.parent(N(5, 0)) == N(2, 1)

    def test_irregular(self):
        t = general_tree(2, {N(1, 2): 2, N(1, 1): 1, N(2, 1): 4})
        assert [n for n in t.leaves()] == [N(k, 0) for k in range(1, 6)]
        assert t.max_children == 4

    def test_leaves_must_sit_at_level_zero(self):
        with pytest.raises(ValueError):
            general_tree(2, {N(1, 2): 2, N(1, 1): 2})

    def test_assign_means_round_trip(self):
        t = assign_means(uniform_tree(3, 3), {N(14, 0)}, 1.0)
        assert ground_truth_targets(t) == {N(14, 0)}
        assert check_ancestor_consistency(t)


class TestTextFormat:
    def test_round_trip(self, tmp_path):
        fam = StreamFamily(Family.GAUSSIAN, variance=1.5)
        t = synthesize_means(3, [0.0, 0.1, 0.2, 0.3], TargetPlacement({(1, 0), (3, 1)}, 0.7, "hierarchical"), fam)
        path = tmp_path / "tree.txt"
        write_tree(t, path)
        back = read_tree(path)
        assert back.thresholds == t.thresholds and back.hierarchical
        for n in t.nodes():
            assert back.stream(n) == t.stream(n)
        assert ground_truth_targets(back) == ground_truth_targets(t)

    def test_heavy_round_trip(self, tmp_path):
        fam = StreamFamily(Family.HEAVY_TAIL, b=1.5)
        t = synthesize_means(2, 0.0, TargetPlacement({(3, 0)}, 1.0), fam)
        write_tree(t, tmp_path / "h.txt")
        back = read_tree(tmp_path / "h.txt")
        assert all(back.stream(n) == t.stream(n) for n in t.nodes())

    def test_errors_carry_line_numbers(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("depth = 1\nthresholds = 0 0\n1 1 constant 1.0\n1 0 wibble 2\n")
        with pytest.raises(ValueError, match=r"bad.txt:4"):
            read_tree(p)
        p.write_text("depth = 1\nthresholds = 0 0\n1 1 constant 1.0\n")
        with pytest.raises(ValueError, match="no stream"):
            read_tree(p)
