"""The twelve acceptance checks, each returning a CriterionResult.

Trial counts default to the full sizes; ``scale`` shrinks them for quick
runs (the statistical tolerances follow the actual trial count).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from ..applications.adaptive_sampling import StepOracle, adaptive_sampling_search
from ..hierarchy import (NodeAddress, PlacementMode, StreamFamily, TargetPlacement, TreeModel,
                         ground_truth_targets, subtree_decomposition, synthesize_means)
from ..seqtest import Output, TestParams, lemma1_bound, run_local_test
from ..streams import Family, gaussian, random_source
from ..walk import Action, WalkConfig, c_p0, detect_hierarchical, detect_leaf
from .config import ExperimentSpec, InstanceSpec
from .diagnostics import last_passage_diagnostics, step_bias
from .runner import run_experiment, run_trials
from .stats import binomial_se, fit_scaling, rate_bound

GAUSSIAN = StreamFamily(Family.GAUSSIAN, variance=1.0)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number:>2}: {self.name} -- {self.detail}"


def _n(full: int, scale: float, floor: int = 50) -> int:
    return max(floor, int(round(full * scale)))


def _spec(scale, trials, workers, seed=2024, **kw) -> ExperimentSpec:
    inst = kw.pop("instance")
    return ExperimentSpec(instance=inst, trials=_n(trials, scale), seed=seed, workers=workers,
                          wall_clock=False, **kw)


def local_test_reliability(scale=1.0, workers=1, seed=1) -> CriterionResult:
    runs = _n(5000, scale)
    rng = random_source(seed, "local-test")
    params = TestParams(0.1, 0.1, 0.0)
    stream = gaussian(1.0, 1.0)
    outs = [run_local_test(stream, params, rng) for _ in range(runs)]
    wrong = sum(1 for v in outs if v.output is not Output.ONE)
    mean_s = float(np.mean([v.samples_used for v in outs]))
    limit = rate_bound(0.1, runs)
    bound = lemma1_bound(1.0, 0.1)
    ok = wrong / runs <= limit and mean_s <= bound
    return CriterionResult(1, "local test reliability", ok,
                           f"wrong={wrong / runs:.4f} <= {limit:.4f}, mean samples {mean_s:.1f} <= {bound:.1f}")


def end_to_end_reliability(scale=1.0, workers=1) -> CriterionResult:
    spec = _spec(scale, 2000, workers, instance=InstanceSpec(depth=6, random_targets=1, delta=1.0),
                 streams=GAUSSIAN, walk=WalkConfig(p0=0.2, epsilon=0.1))
    s, _ = run_experiment(spec)
    limit = rate_bound(0.1, s.trials)
    return CriterionResult(2, "leaf-target reliability, L=6", s.error_rate <= limit,
                           f"error={s.error_rate:.4f} <= {limit:.4f} over {s.trials} trials")


def hierarchical_reliability(scale=1.0, workers=1) -> CriterionResult:
    spec = _spec(scale, 2000, workers,
                 instance=InstanceSpec(depth=3, targets=(NodeAddress(3, 1),), delta=1.0,
                                       placement=PlacementMode.HIERARCHICAL),
                 streams=GAUSSIAN, walk=WalkConfig(p0=0.1, epsilon=0.1, mode="hierarchical"))
    s, _ = run_experiment(spec)
    limit = rate_bound(0.1, s.trials)
    return CriterionResult(3, "hierarchical-target reliability", s.error_rate <= limit,
                           f"error={s.error_rate:.4f} <= {limit:.4f} over {s.trials} trials")


def _ldepth_spec(scale, workers, depth=6, epsilon=0.1):
    return _spec(scale, 2000, workers, instance=InstanceSpec(depth=depth, random_targets=1, delta=1.0),
                 streams=GAUSSIAN, walk=WalkConfig(p0=0.2, epsilon=epsilon))


def log_n_scaling(scale=1.0, workers=1) -> CriterionResult:
    means = {}
    for L in (4, 6, 8, 10):
        s, _ = run_experiment(_ldepth_spec(scale, workers, depth=L))
        means[L] = s.mean_samples
    fit = fit_scaling(means)
    ratio = means[10] / means[4]
    ok = fit.r_squared >= 0.9 and ratio < 4.0
    pts = ", ".join(f"L={k}: {v:.1f}" for k, v in means.items())
    return CriterionResult(4, "log N scaling", ok, f"{pts}; R^2={fit.r_squared:.4f}, ratio {ratio:.2f} < 4")


def log_eps_scaling(scale=1.0, workers=1) -> CriterionResult:
    means = {}
    for eps in (1e-1, 1e-2, 1e-3):
        s, _ = run_experiment(_ldepth_spec(scale, workers, epsilon=eps))
        means[eps] = s.mean_samples
    d1 = means[1e-2] - means[1e-1]
    d2 = means[1e-3] - means[1e-2]
    ok = d1 > 0 and d2 > 0 and max(d1, d2) <= 2.0 * min(d1, d2)
    return CriterionResult(5, "log(1/eps) scaling", ok,
                           f"means {[round(v, 2) for v in means.values()]}; increments {d1:.2f}, {d2:.2f}")


def _instance_tree(spec: ExperimentSpec, index: int) -> TreeModel:
    from .runner import build_tree
    return build_tree(spec, random_source(spec.seed, "instance", index))


def walk_bias(scale=1.0, workers=1, p0=0.2) -> CriterionResult:
    spec = _spec(scale, 2000, workers, instance=InstanceSpec(depth=8, random_targets=1, delta=1.0),
                 streams=GAUSSIAN, walk=WalkConfig(p0=p0, epsilon=0.1))
    reports = run_trials(spec, keep_detections=True)
    pairs = []
    for r in reports:
        tree = _instance_tree(spec, r.trial)
        (target,) = ground_truth_targets(tree)
        pairs.append((tree, target))
    mean, se, n = step_bias([r.detection for r in reports], pairs)
    limit = 1.0 - 2.0 * (1.0 - p0) ** 2 + 3.0 * se
    need = 10_000 if scale >= 1.0 else 1
    ok = mean <= limit and n >= need
    return CriterionResult(6, "random-walk bias", ok, f"E[W]={mean:.4f} <= {limit:.4f} over {n} interior steps")


def last_passage(scale=1.0, workers=1, p0=0.2) -> CriterionResult:
    target = NodeAddress(64, 0)
    spec = _spec(scale, 2000, workers, instance=InstanceSpec(depth=6, targets=(target,), delta=1.0),
                 streams=GAUSSIAN, walk=WalkConfig(p0=p0, epsilon=0.1))
    reports = run_trials(spec, keep_detections=True)
    tree = _instance_tree(spec, 0)
    rows = last_passage_diagnostics([r.detection for r in reports], tree, target, c_p0(p0))
    ok = all(r.mean <= r.bound for r in rows)
    worst = max(rows, key=lambda r: r.mean)
    return CriterionResult(7, "last-passage bound", ok,
                           f"max mean T_l={worst.mean:.3f} (l={worst.level}) <= C={c_p0(p0):.2f}")


def heavy_tail_reliability(scale=1.0, workers=1) -> CriterionResult:
    spec = _spec(scale, 2000, workers, instance=InstanceSpec(depth=5, random_targets=1, delta=1.0),
                 streams=StreamFamily(Family.HEAVY_TAIL, b=1.5, tail_index=2.5, scale=1.0),
                 walk=WalkConfig(p0=0.2, epsilon=0.1))
    s, _ = run_experiment(spec)
    limit = rate_bound(0.1, s.trials)
    return CriterionResult(8, "heavy-tailed variant reliability", s.error_rate <= limit,
                           f"error={s.error_rate:.4f} <= {limit:.4f} over {s.trials} trials")


def multi_target(scale=1.0, workers=1) -> CriterionResult:
    cfg = WalkConfig(p0=0.2, epsilon=0.1)
    three = _spec(scale, 1000, workers, instance=InstanceSpec(depth=6, random_targets=3, delta=1.0),
                  streams=GAUSSIAN, walk=cfg, s_max=4)
    empty = _spec(scale, 1000, workers, instance=InstanceSpec(depth=6, delta=1.0),
                  streams=GAUSSIAN, walk=cfg, s_max=4)
    s3, _ = run_experiment(three)
    s0, _ = run_experiment(empty)
    l3, l0 = rate_bound(0.1, s3.trials), rate_bound(0.1, s0.trials)
    ok = s3.error_rate <= l3 and s0.error_rate <= l0
    return CriterionResult(9, "multi-target recovery", ok,
                           f"3 targets: failure {s3.error_rate:.4f} <= {l3:.4f}; "
                           f"no target: failure {s0.error_rate:.4f} <= {l0:.4f}")


def group_testing(scale=1.0, workers=1) -> CriterionResult:
    spec = _spec(scale, 1000, workers,
                 instance=InstanceSpec(kind="group-testing", population=64, random_defects=2, q_fa=0.2, q_d=0.8),
                 walk=WalkConfig(p0=0.2, epsilon=0.1), s_max=2)
    s, _ = run_experiment(spec)
    recovery = 1.0 - s.error_rate
    limit = 0.9 - 3.0 * binomial_se(0.9, s.trials)
    return CriterionResult(10, "noisy group testing", recovery >= limit,
                           f"exact recovery {recovery:.4f} >= {limit:.4f} over {s.trials} trials")


def adaptive_sampling(scale=1.0, workers=1) -> CriterionResult:
    spec = _spec(scale, 2000, workers,
                 instance=InstanceSpec(kind="adaptive-sampling", depth=6, z_star=0.37, noise="flip",
                                       noise_level=0.2),
                 walk=WalkConfig(p0=0.1, epsilon=0.1))
    s, _ = run_experiment(spec)
    hit = 1.0 - s.error_rate
    limit = 0.9 - 3.0 * binomial_se(0.9, s.trials)
    cells = {adaptive_sampling_search(StepOracle(0.37), 1 / 64, 0.1, 0.1, random_source(i, "noiseless"))
             for i in range(5)}
    exact = cells == {(0.359375, 0.375)}
    return CriterionResult(11, "adaptive sampling", hit >= limit and exact,
                           f"coverage {hit:.4f} >= {limit:.4f}; noiseless cells {sorted(cells)}")


def _expected_leaf_trace(depth: int, k: int):
    """Actions and test count of a perfect-test leaf walk toward leaf k."""
    actions, tests = [], 0
    for l in range(depth, 0, -1):
        left = ((k - 1) >> (l - 1)) % 2 == 0
        tests += 1 if left else 2
        if l > 1:
            actions.append(Action.DESCEND_LEFT if left else Action.DESCEND_RIGHT)
        else:
            actions.append(Action.DECLARE)
    return actions, tests


def structural_suites(max_roundtrip=6, max_partition=12, max_trace=4) -> CriterionResult:
    failures: List[str] = []
    for depth in range(1, max_roundtrip + 1):
        shell = TreeModel(depth, 0.0)
        for node in shell.nodes():
            mode = PlacementMode.LEAF_ONLY if node.l == 0 else PlacementMode.HIERARCHICAL
            tree = synthesize_means(depth, 0.0, TargetPlacement({node}, 1.0, mode))
            if ground_truth_targets(tree) != {node}:
                failures.append(f"round trip {node} at L={depth}")
    for depth in range(1, max_partition + 1):
        shell = TreeModel(depth, 0.0)
        all_nodes = set(shell.nodes())
        for target in all_nodes:
            flat = [n for part in subtree_decomposition(shell, target) for n in part] + shell.subtree(target)
            if len(flat) != len(all_nodes) or set(flat) != all_nodes:
                failures.append(f"partition {target} at L={depth}")
    cfg = WalkConfig(p0=0.2, epsilon=0.1)
    for depth in range(1, max_trace + 1):
        for k in range(1, 2 ** depth + 1):
            tree = synthesize_means(depth, 0.0, TargetPlacement({(k, 0)}, 1.0))
            det = detect_leaf(tree, cfg, random_source(0, "structural", k))
            actions, tests = _expected_leaf_trace(depth, k)
            if det.declared != (k, 0) or [s.action for s in det.trace] != actions or len(det.tests) != tests:
                failures.append(f"leaf trace k={k} L={depth}")
    hcfg = WalkConfig(p0=0.1, epsilon=0.1, mode="hierarchical")
    for depth in range(1, max_trace + 1):
        for node in TreeModel(depth, 0.0).nodes():
            mode = PlacementMode.LEAF_ONLY if node.l == 0 else PlacementMode.HIERARCHICAL
            tree = synthesize_means(depth, 0.0, TargetPlacement({node}, 1.0, mode))
            det = detect_hierarchical(tree, hcfg, random_source(0, "structural-h", node.k))
            if det.declared != node or det.path[-1] != node:
                failures.append(f"hierarchical trace {node} L={depth}")
    detail = "all structural checks hold" if not failures else f"{len(failures)} failures, e.g. {failures[:3]}"
    return CriterionResult(12, "exhaustive structural suites", not failures, detail)


CRITERIA: Dict[int, Callable[..., CriterionResult]] = {
    1: local_test_reliability, 2: end_to_end_reliability, 3: hierarchical_reliability,
    4: log_n_scaling, 5: log_eps_scaling, 6: walk_bias, 7: last_passage, 8: heavy_tail_reliability,
    9: multi_target, 10: group_testing, 11: adaptive_sampling, 12: structural_suites,
}


def run_all(scale: float = 1.0, workers: int = 1, only: Optional[List[int]] = None,
            report: Optional[Callable[[CriterionResult], None]] = None) -> List[CriterionResult]:
    out = []
    for number, fn in CRITERIA.items():
        if only and number not in only:
            continue
        res = fn() if number == 12 else fn(scale=scale, workers=workers)
        if report:
            report(res)
        out.append(res)
    return out
