"""Reduction of per-trial results into error rates, sample statistics and scaling fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np
from scipy import stats as sps

CI_LEVEL = 0.95


def wilson_interval(errors: int, trials: int, level: float = CI_LEVEL) -> Tuple[float, float]:
    if trials < 1:
        raise ValueError("need at least one trial")
    ci = sps.binomtest(int(errors), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def binomial_se(q: float, n: int) -> float:
    return math.sqrt(q * (1.0 - q) / n)


def rate_bound(target: float, n: int, k: float = 3.0) -> float:
    """target + k standard errors of a binomial proportion at ``target``."""
    return target + k * binomial_se(target, n)


@dataclass
class SummaryReport:
    trials: int
    errors: int
    error_rate: float
    ci_low: float
    ci_high: float
    mean_samples: float
    samples_p50: float
    samples_p90: float
    samples_max: int
    mean_steps: float
    cap_terminations: int
    bounds: Dict[str, float] = field(default_factory=dict)

    def kv_lines(self) -> List[str]:
        rows = [
            ("trials", self.trials), ("errors", self.errors), ("error_rate", self.error_rate),
            ("error_ci_low", self.ci_low), ("error_ci_high", self.ci_high),
            ("mean_samples", self.mean_samples), ("samples_p50", self.samples_p50),
            ("samples_p90", self.samples_p90), ("samples_max", self.samples_max),
            ("mean_steps", self.mean_steps), ("cap_terminations", self.cap_terminations),
        ]
        rows += sorted(self.bounds.items())
        return [f"{k}={_fmt(v)}" for k, v in rows]

    def text(self) -> str:
        lines = [
            f"trials            {self.trials}",
            f"error rate        {self.error_rate:.4f}  (95% Wilson CI {self.ci_low:.4f} .. {self.ci_high:.4f},"
            f" {self.errors} errors)",
            f"mean samples      {self.mean_samples:.1f}  (median {self.samples_p50:.0f},"
            f" p90 {self.samples_p90:.0f}, max {self.samples_max})",
            f"mean steps        {self.mean_steps:.2f}",
            f"cap terminations  {self.cap_terminations}",
        ]
        for k, v in sorted(self.bounds.items()):
            lines.append(f"{k:<18}{v:.1f}")
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def summarize(rows: Iterable[Mapping]) -> SummaryReport:
    """Fold trial rows (dicts with correct, samples, steps, terminated_by) in the given order."""
    rows = list(rows)
    if not rows:
        raise ValueError("no trials to summarize")
    correct = np.array([_truthy(r["correct"]) for r in rows])
    samples = np.array([int(r["samples"]) for r in rows], dtype=np.int64)
    steps = np.array([int(r["steps"]) for r in rows], dtype=np.int64)
    caps = sum(1 for r in rows if r["terminated_by"] in ("step-cap", "budget"))
    n = len(rows)
    errors = int(n - correct.sum())
    lo, hi = wilson_interval(errors, n)
    return SummaryReport(
        trials=n, errors=errors, error_rate=errors / n, ci_low=lo, ci_high=hi,
        mean_samples=float(samples.sum()) / n,
        samples_p50=float(np.quantile(samples, 0.5)), samples_p90=float(np.quantile(samples, 0.9)),
        samples_max=int(samples.max()), mean_steps=float(steps.sum()) / n, cap_terminations=caps,
    )


def _truthy(v) -> bool:
    if isinstance(v, str):
        return v.strip() in ("1", "true", "True")
    return bool(v)


def summary_from_csv(path) -> SummaryReport:
    with open(path, newline="") as fh:
        return summarize(csv.DictReader(fh))


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r_squared: float
    x: Tuple[float, ...]
    y: Tuple[float, ...]


def fit_scaling(points: Union[Mapping[float, object], Sequence[Tuple[float, object]]]) -> ScalingFit:
    """Least-squares line of mean samples against the swept quantity.

    Values may be SummaryReports or plain numbers.  At least three points with
    distinct x are required.
    """
    items = list(points.items()) if isinstance(points, Mapping) else list(points)
    if len(items) < 3:
        raise ValueError(f"need >= 3 sweep points, got {len(items)}")
    x = np.array([float(k) for k, _ in items])
    y = np.array([float(v.mean_samples if isinstance(v, SummaryReport) else v) for _, v in items])
    if np.ptp(x) == 0:
        raise ValueError("degenerate sweep: all x values are equal")
    res = sps.linregress(x, y)
    return ScalingFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), tuple(x), tuple(y))
