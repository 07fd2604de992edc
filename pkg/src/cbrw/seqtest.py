"""The local confidence-bound sequential test L(alpha, beta, eta).

The test draws fresh samples one at a time and stops as soon as the lower
confidence bound clears the threshold (output 1) or the upper confidence bound
falls below it (output 0).  Samples are generated in geometrically growing
blocks and the stopping rule is evaluated at every sample count inside a
block; the unused tail of the final block is discarded, which keeps the
observed samples i.i.d.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .streams import RandomSource, SampleBuffer, StreamSpec, TailModel, draw_batch

DEFAULT_BUDGET = 10_000_000
_FIRST_BLOCK = 32
_MAX_BLOCK = 1 << 16


class Output(enum.IntEnum):
    ZERO = 0
    ONE = 1
    INCONCLUSIVE = 2

    @property
    def as_bit(self) -> int:
        """Inconclusive evidence counts as 0 wherever a binary answer is needed."""
        return 1 if self is Output.ONE else 0


@dataclass(frozen=True)
class TestParams:
    alpha: float
    beta: float
    eta: float
    tail: Optional[TailModel] = None
    budget: int = DEFAULT_BUDGET

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0 < self.alpha < 1 or not 0 < self.beta < 1:
            raise ValueError(f"alpha and beta must lie in (0, 1), got {self.alpha}, {self.beta}")
        if not math.isfinite(self.eta):
            raise ValueError("eta must be finite")
        if int(self.budget) < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")


@dataclass(frozen=True)
class TestVerdict:
    output: Output
    samples_used: int
    final_mean: float
    final_radius_upper: float
    final_radius_lower: float
    final_mean_lower: Optional[float] = None

    __test__ = False

    @property
    def bit(self) -> int:
        return self.output.as_bit


def _check_prob(p: float) -> None:
    if not 0 < p < 1:
        raise ValueError(f"confidence parameter must lie in (0, 1), got {p}")


def radius_subgaussian(s: int, p: float, xi: float) -> float:
    """sqrt(2 xi ln(2 s^3 / p) / s)."""
    _check_prob(p)
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if xi < 0:
        raise ValueError(f"xi must be >= 0, got {xi}")
    return math.sqrt(2.0 * xi * math.log(2.0 * s ** 3 / p) / s)


def radius_heavy(s: int, p: float, u: float, b: float) -> float:
    """4 u^(1/b) (ln(2 s^3 / p) / s)^((b-1)/b)."""
    _check_prob(p)
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if not u > 0 or not 1 < b < 2:
        raise ValueError(f"need u > 0 and 1 < b < 2, got u={u}, b={b}")
    return 4.0 * u ** (1.0 / b) * (math.log(2.0 * s ** 3 / p) / s) ** ((b - 1.0) / b)


def lemma1_bound(gap: float, p_opposite: float) -> float:
    """Upper bound on the expected stopping time of L when |mu - eta| = gap.

    ``p_opposite`` is alpha when the mean is above the threshold and beta when
    it is below.
    """
    if not gap > 0:
        raise ValueError(f"gap must be > 0, got {gap}")
    _check_prob(p_opposite)
    g2 = gap * gap
    return 48.0 / g2 * math.log(24.0 * (2.0 / p_opposite) ** (1.0 / 3.0) / g2) + 2.0


_TABLE = 4096


@functools.lru_cache(maxsize=1024)
def _subgaussian_table(p: float, xi: float) -> np.ndarray:
    return _subgaussian_radii(p, xi, 0, _TABLE, cached=False)


@functools.lru_cache(maxsize=1024)
def _heavy_table(p: float, u: float, b: float) -> np.ndarray:
    return _heavy_radii(p, u, b, 0, _TABLE, cached=False)


def _subgaussian_radii(p: float, xi: float, lo: int, hi: int, cached: bool = True) -> np.ndarray:
    """Radii for s = lo+1 .. hi."""
    if cached and hi <= _TABLE:
        return _subgaussian_table(p, xi)[lo:hi]
    s = np.arange(lo + 1, hi + 1, dtype=float)
    return np.sqrt(2.0 * xi * np.log(2.0 * s ** 3 / p) / s)


def _heavy_radii(p: float, u: float, b: float, lo: int, hi: int, cached: bool = True) -> np.ndarray:
    if cached and hi <= _TABLE:
        return _heavy_table(p, u, b)[lo:hi]
    s = np.arange(lo + 1, hi + 1, dtype=float)
    return 4.0 * u ** (1.0 / b) * (np.log(2.0 * s ** 3 / p) / s) ** ((b - 1.0) / b)


def truncated_mean_path(x: np.ndarray, p: float, u: float, b: float) -> np.ndarray:
    """Truncated means for every prefix length s = 1..n, each at level p / (2 s^3).

    Entry s-1 equals ``truncated_mean(x[:s], p / (2 s**3), u, b)``.  A sample
    t survives at prefix s iff ln(2 s^3 / p) <= u t / |x_t|^b; the left side
    increases in s, so each sample is kept on one contiguous run of prefixes
    [t, last_t] and the whole path costs O(n).
    """
    n = x.size
    t = np.arange(1, n + 1, dtype=float)
    ax = np.abs(x)

    def keep(s):
        return ax <= (u * t / np.log(2.0 * s ** 3 / p)) ** (1.0 / b)

    with np.errstate(divide="ignore"):
        capacity = u * t / ax ** b
    log_last = (math.log(p) - math.log(2.0) + capacity) / 3.0
    last = np.floor(np.exp(np.minimum(log_last, math.log(n + 1.0))))
    last = np.clip(last, 0, n)
    # one-step corrections make the boundary agree with the direct predicate
    probe = np.maximum(last, 1.0)
    last = np.where((last >= 1) & ~keep(probe), last - 1, last)
    probe = np.minimum(last + 1, n)
    last = np.where((last < n) & keep(probe), last + 1, last)
    live = last >= t
    idx = t[live].astype(np.int64)
    ends = last[live].astype(np.int64) + 1
    vals = x[live]
    delta = np.bincount(idx, weights=vals, minlength=n + 2) - np.bincount(ends, weights=vals, minlength=n + 2)
    return np.cumsum(delta)[1: n + 1] / t


def run_local_test(stream: StreamSpec, params: TestParams, rng: RandomSource) -> TestVerdict:
    """Run L(alpha, beta, eta) on fresh draws from ``stream``.

    Ties with the threshold continue sampling.  When the budget is exhausted
    without either bound clearing eta the verdict is inconclusive.
    """
    tail = params.tail or stream.tail
    if tail.is_heavy != stream.tail.is_heavy:
        raise ValueError("test tail model does not match the stream's tail model")
    if tail.is_heavy:
        return _run_heavy(stream, params, tail, rng)
    return _run_subgaussian(stream, params, tail, rng)


def _run_subgaussian(stream, params, tail, rng) -> TestVerdict:
    xi = stream.xi if tail.xi is None else max(stream.xi, tail.xi)
    alpha, beta, eta, budget = params.alpha, params.beta, params.eta, int(params.budget)
    checked = 0
    block = _FIRST_BLOCK
    total = 0.0
    while checked < budget:
        n_new = min(block, budget - checked)
        sums = total + np.cumsum(draw_batch(stream, rng, n_new))
        n = checked + n_new
        means = sums / np.arange(checked + 1, n + 1, dtype=float)
        r_up = _subgaussian_radii(alpha, xi, checked, n)
        r_lo = r_up if beta == alpha else _subgaussian_radii(beta, xi, checked, n)
        hit = (means - r_up > eta) | (means + r_lo < eta)
        if hit.any():
            i = int(np.argmax(hit))
            out = Output.ONE if means[i] - r_up[i] > eta else Output.ZERO
            return TestVerdict(out, checked + i + 1, float(means[i]), float(r_up[i]), float(r_lo[i]))
        total = float(sums[-1])
        checked = n
        block = min(2 * block, _MAX_BLOCK)
    return TestVerdict(Output.INCONCLUSIVE, budget, float(means[-1]), float(r_up[-1]), float(r_lo[-1]))


def _run_heavy(stream, params, tail, rng) -> TestVerdict:
    u, b = tail.u if tail.u is not None else stream.u, tail.b
    alpha, beta, eta, budget = params.alpha, params.beta, params.eta, int(params.budget)
    buf = SampleBuffer()
    checked = 0
    block = _FIRST_BLOCK
    while checked < budget:
        n_new = min(block, budget - checked)
        buf.extend(draw_batch(stream, rng, n_new))
        n = checked + n_new
        x = buf.values
        m_up = truncated_mean_path(x, alpha, u, b)[checked:n]
        m_lo = m_up if beta == alpha else truncated_mean_path(x, beta, u, b)[checked:n]
        r_up = _heavy_radii(alpha, u, b, checked, n)
        r_lo = r_up if beta == alpha else _heavy_radii(beta, u, b, checked, n)
        hit = (m_up - r_up > eta) | (m_lo + r_lo < eta)
        if hit.any():
            i = int(np.argmax(hit))
            out = Output.ONE if m_up[i] - r_up[i] > eta else Output.ZERO
            return TestVerdict(out, checked + i + 1, float(m_up[i]), float(r_up[i]), float(r_lo[i]),
                               float(m_lo[i]))
        checked = n
        block = n
    return TestVerdict(Output.INCONCLUSIVE, budget, float(m_up[-1]), float(r_up[-1]), float(r_lo[-1]),
                       float(m_lo[-1]))
