"""Monte-Carlo trial execution.

Trial i draws its instance from substream ("instance", i) and runs the walk on
substream ("walk", i) of the master seed, so results do not depend on how
trials are scheduled across workers.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..applications.adaptive_sampling import (AdditiveNoise, FlipNoise, StepOracle, adaptive_sampling_walk,
                                              node_interval)
from ..applications.group_testing import GroupTestInstance, group_testing_tree
from ..applications.hhh import hhh_tree_from_trace, read_trace
from ..hierarchy import (NodeAddress, PlacementMode, TargetPlacement, TreeModel, ground_truth_targets,
                         read_tree, synthesize_means)
from ..streams import random_source
from ..walk import Detection, DetectionSet, detect, detect_multi
from .config import ConfigError, ExperimentSpec
from .stats import SummaryReport, summarize

TRIAL_COLUMNS = ("trial", "correct", "declared", "samples", "steps", "terminated_by", "wall_ms")
TEST_COLUMNS = ("trial", "step", "node_k", "node_l", "alpha", "beta", "eta", "output", "samples_used")


@dataclass
class TrialReport:
    trial: int
    correct: bool
    declared: str
    samples: int
    steps: int
    terminated_by: str
    wall_ms: float
    detection: Optional[object] = None

    def row(self) -> dict:
        return {"trial": self.trial, "correct": int(self.correct), "declared": self.declared,
                "samples": self.samples, "steps": self.steps, "terminated_by": self.terminated_by,
                "wall_ms": f"{self.wall_ms:.3f}"}


def build_tree(spec: ExperimentSpec, rng) -> TreeModel:
    """The trial's tree instance; random placements draw from ``rng``."""
    inst = spec.instance
    if inst.kind == "synthetic":
        targets = set(inst.targets)
        if inst.random_targets:
            if inst.placement is PlacementMode.HIERARCHICAL:
                raise ConfigError("random targets are placed at leaves; use leaf-only placement",
                                  "instance", "targets")
            picks = rng.choice(2 ** inst.depth, size=inst.random_targets, replace=False) + 1
            targets |= {NodeAddress(int(k), 0) for k in picks}
        thresholds = inst.thresholds[0] if len(inst.thresholds) == 1 else inst.thresholds
        return synthesize_means(inst.depth, thresholds, TargetPlacement(frozenset(targets), inst.delta,
                                                                        inst.placement), spec.streams)
    if inst.kind == "file":
        return read_tree(inst.path)
    if inst.kind == "group-testing":
        defects = set(inst.defects)
        if inst.random_defects:
            defects |= {int(d) + 1 for d in rng.choice(inst.population, size=inst.random_defects, replace=False)}
        return group_testing_tree(GroupTestInstance(inst.population, frozenset(defects), inst.q_fa, inst.q_d))
    if inst.kind == "hhh":
        trace = read_trace(inst.path, inst.width)
        thresholds = inst.thresholds[0] if len(inst.thresholds) == 1 else inst.thresholds
        return hhh_tree_from_trace(trace, inst.depth, thresholds, inst.width, inst.hierarchical)
    raise ConfigError(f"kind={inst.kind} has no tree", "instance", "kind")


def _oracle(spec: ExperimentSpec, rng) -> StepOracle:
    inst = spec.instance
    z = inst.z_star if inst.z_star is not None else float(rng.uniform(0.0, 1.0))
    if inst.noise == "additive":
        noise = AdditiveNoise(inst.noise_level)
    else:
        noise = FlipNoise(0.0 if inst.noise == "none" else inst.noise_level)
    return StepOracle(z, noise)


def _declared_text(nodes) -> str:
    return " ".join(str(n) for n in sorted(nodes, key=lambda n: (-n.l, n.k)))


def run_trial(spec: ExperimentSpec, index: int, keep_detection: bool = False) -> TrialReport:
    start = time.perf_counter()
    inst_rng = random_source(spec.seed, "instance", index)
    walk_rng = random_source(spec.seed, "walk", index)
    if spec.instance.kind == "adaptive-sampling":
        oracle = _oracle(spec, inst_rng)
        delta = 2.0 ** -spec.instance.depth
        det = adaptive_sampling_walk(oracle, delta, spec.walk.epsilon, spec.walk.p0, walk_rng,
                                     budget=spec.walk.budget, step_cap=spec.walk.step_cap)
        if det.declared is None:
            correct, declared = False, ""
        else:
            cell = node_interval(det.declared, spec.instance.depth)
            correct, declared = cell.contains(oracle.z_star), f"[{cell.lo!r},{cell.hi!r})"
    else:
        tree = build_tree(spec, inst_rng)
        truth = ground_truth_targets(tree)
        if spec.s_max is not None:
            det = detect_multi(tree, spec.walk, spec.s_max, walk_rng)
            found = det.declared
        else:
            det = detect(tree, spec.walk, walk_rng)
            found = frozenset() if det.declared is None else frozenset({det.declared})
        correct = found == truth and det.terminated_by.value in ("declaration", "root-test")
        declared = _declared_text(found)
    wall = (time.perf_counter() - start) * 1000.0 if spec.wall_clock else 0.0
    return TrialReport(index, bool(correct), declared, int(det.total_samples), int(det.steps),
                       det.terminated_by.value, wall, det if keep_detection else None)


def _run_chunk(args) -> List[TrialReport]:
    spec, indices, keep = args
    return [run_trial(spec, i, keep) for i in indices]


def run_trials(spec: ExperimentSpec, keep_detections: bool = False) -> List[TrialReport]:
    indices = list(range(spec.trials))
    if spec.workers <= 1 or spec.trials < 2:
        return [run_trial(spec, i, keep_detections) for i in indices]
    chunks = [indices[i::spec.workers * 4] for i in range(spec.workers * 4)]
    chunks = [c for c in chunks if c]
    with ProcessPoolExecutor(max_workers=spec.workers) as pool:
        parts = list(pool.map(_run_chunk, [(spec, c, keep_detections) for c in chunks]))
    reports = [r for part in parts for r in part]
    reports.sort(key=lambda r: r.trial)
    return reports


def _detections(report: TrialReport) -> Sequence[Detection]:
    det = report.detection
    if isinstance(det, DetectionSet):
        return det.detections
    return [det] if det is not None else []


def write_trials(reports: Sequence[TrialReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRIAL_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.row())


def write_trace(reports: Sequence[TrialReport], jsonl_path, tests_path) -> None:
    with open(jsonl_path, "w") as jf, open(tests_path, "w", newline="") as tf:
        tw = csv.writer(tf, lineterminator="\n")
        tw.writerow(TEST_COLUMNS)
        for r in reports:
            step_no = 0
            for search, det in enumerate(_detections(r)):
                for step in det.trace:
                    jf.write(json.dumps({
                        "trial": r.trial, "search": search, "step": step_no,
                        "position": list(step.position), "action": step.action.value,
                        "destination": list(step.destination),
                        "tests": [[t.node.k, t.node.l, t.output.name.lower(), t.samples_used] for t in step.tests],
                    }) + "\n")
                    for t in step.tests:
                        tw.writerow([r.trial, step_no, t.node.k, t.node.l, repr(t.alpha), repr(t.beta),
                                     repr(t.eta), t.output.name.lower(), t.samples_used])
                    step_no += 1
            if isinstance(r.detection, DetectionSet):
                for t in r.detection.root_checks:
                    tw.writerow([r.trial, "", t.node.k, t.node.l, repr(t.alpha), repr(t.beta),
                                 repr(t.eta), t.output.name.lower(), t.samples_used])


def run_experiment(spec: ExperimentSpec, out: Optional[str] = None, trace: bool = False,
                   bounds: Optional[dict] = None) -> Tuple[SummaryReport, List[TrialReport]]:
    """Run every trial, write trials.csv (and summary files) under ``out``, return the summary."""
    reports = run_trials(spec, keep_detections=trace)
    summary = summarize(r.row() for r in reports)
    if bounds:
        summary.bounds.update(bounds)
    out = out or spec.out
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        write_trials(reports, d / "trials.csv")
        (d / "summary.txt").write_text(summary.text() + "\n")
        (d / "summary.kv").write_text("\n".join(summary.kv_lines()) + "\n")
        if trace:
            write_trace(reports, d / "trace.jsonl", d / "tests.csv")
    return summary, reports


def sweep(spec: ExperimentSpec, param: str, values: Sequence[str], out: Optional[str] = None):
    """One experiment per value; returns [(value, SummaryReport)] in the given order."""
    results = []
    for v in values:
        point = spec.with_param(param, v)
        sub = str(Path(out) / f"{param}={v}") if out else None
        summary, _ = run_experiment(point, out=sub)
        results.append((v, summary))
    if out:
        keys = [line.split("=", 1)[0] for line in results[0][1].kv_lines()]
        with open(Path(out) / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([param] + keys)
            for v, s in results:
                w.writerow([v] + [line.split("=", 1)[1] for line in s.kv_lines()])
    return results


def sweep_axis(param: str, value: str) -> float:
    """x coordinate for scaling fits: log(1/epsilon) on the reliability axis, the raw value otherwise."""
    x = float(value)
    if param.endswith("epsilon"):
        return float(np.log(1.0 / x))
    return x
