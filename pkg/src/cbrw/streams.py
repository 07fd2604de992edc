"""Observation processes attached to tree nodes, and the statistics computed on them."""

from __future__ import annotations

import enum
import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate

RandomSource = np.random.Generator


def random_source(seed: int, label: str = "trial", index: int = 0) -> RandomSource:
    """Return an independent counter-based substream keyed by (seed, label, index).

    Two calls with the same key produce bit-identical sequences regardless of
    how many other substreams were created in between.
    """
    key = (zlib.crc32(label.encode("utf-8")), int(index))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


class Family(str, enum.Enum):
    CONSTANT = "constant"
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"
    HEAVY_TAIL = "heavy-tail"


class TailKind(str, enum.Enum):
    SUB_GAUSSIAN = "sub-gaussian"
    HEAVY_TAILED = "heavy-tailed"


@dataclass(frozen=True)
class TailModel:
    """Concentration assumption used by the local test.

    ``xi`` is the proxy-variance override for sub-Gaussian streams (``None``
    means "use the family's own bound"); ``b`` and ``u`` bound the b-th
    absolute moment for heavy-tailed streams (``u=None`` means "exact moment").
    """

    kind: TailKind = TailKind.SUB_GAUSSIAN
    xi: Optional[float] = None
    b: Optional[float] = None
    u: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", TailKind(self.kind))
        if self.kind is TailKind.SUB_GAUSSIAN:
            if self.b is not None or self.u is not None:
                raise ValueError("sub-gaussian tail model takes xi only")
            if self.xi is not None and not self.xi >= 0:
                raise ValueError(f"xi must be >= 0, got {self.xi}")
        else:
            if self.xi is not None:
                raise ValueError("heavy-tailed tail model takes (b, u) only")
            if self.b is None or not 1 < self.b < 2:
                raise ValueError(f"b must lie in (1, 2), got {self.b}")
            if self.u is not None and not self.u > 0:
                raise ValueError(f"u must be > 0, got {self.u}")

    @classmethod
    def subgaussian(cls, xi: Optional[float] = None) -> "TailModel":
        return cls(TailKind.SUB_GAUSSIAN, xi=xi)

    @classmethod
    def heavy(cls, b: float, u: Optional[float] = None) -> "TailModel":
        return cls(TailKind.HEAVY_TAILED, b=b, u=u)

    @property
    def is_heavy(self) -> bool:
        return self.kind is TailKind.HEAVY_TAILED


@dataclass(frozen=True)
class StreamSpec:
    """An i.i.d. observation process with a known family and mean.

    The heavy-tail family is ``mean + S * P`` with ``S`` a fair random sign and
    ``P`` Lomax(tail_index, scale); its b-th absolute moment is finite iff
    ``b < tail_index``.
    """

    family: Family
    mean: float
    variance: float = 0.0
    tail_index: Optional[float] = None
    scale: Optional[float] = None
    tail: TailModel = field(default_factory=TailModel)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "mean", float(self.mean))
        fam = self.family
        if not math.isfinite(self.mean):
            raise ValueError("mean must be finite")
        if fam is Family.BERNOULLI and not 0.0 <= self.mean <= 1.0:
            raise ValueError(f"bernoulli mean must lie in [0, 1], got {self.mean}")
        if fam is Family.GAUSSIAN and not self.variance > 0:
            raise ValueError(f"gaussian variance must be > 0, got {self.variance}")
        if fam is Family.HEAVY_TAIL:
            if self.tail_index is None or not self.tail_index > 1:
                raise ValueError("heavy-tail family needs tail_index > 1")
            if self.scale is None or not self.scale > 0:
                raise ValueError("heavy-tail family needs scale > 0")
            if not self.tail.is_heavy:
                raise ValueError("heavy-tail family is not sub-gaussian; attach a heavy-tailed TailModel")
        if self.tail.is_heavy:
            if fam is Family.HEAVY_TAIL and not self.tail.b < self.tail_index:
                raise ValueError(
                    f"b={self.tail.b} must be below tail_index={self.tail_index} for a finite moment"
                )
            exact = absolute_moment(self, self.tail.b)
            if self.tail.u is None:
                object.__setattr__(self, "tail", TailModel.heavy(self.tail.b, exact))
            elif self.tail.u < exact * (1 - 1e-9):
                raise ValueError(f"declared u={self.tail.u} is below the exact moment {exact}")

    @property
    def xi(self) -> float:
        return subgaussian_proxy(self)

    @property
    def u(self) -> float:
        return self.tail.u

    @property
    def b(self) -> float:
        return self.tail.b

    def with_mean(self, mean: float) -> "StreamSpec":
        """Same family and tail assumption, shifted to a new mean."""
        tail = self.tail
        if tail.is_heavy:
            tail = TailModel.heavy(tail.b)
        return StreamSpec(self.family, mean, self.variance, self.tail_index, self.scale, tail)


def constant(mean: float, xi: Optional[float] = None, tail: Optional[TailModel] = None) -> StreamSpec:
    return StreamSpec(Family.CONSTANT, mean, tail=tail or TailModel.subgaussian(xi))


def gaussian(mean: float, variance: float = 1.0, xi: Optional[float] = None,
             tail: Optional[TailModel] = None) -> StreamSpec:
    return StreamSpec(Family.GAUSSIAN, mean, variance=variance, tail=tail or TailModel.subgaussian(xi))


def bernoulli(p: float, xi: Optional[float] = None, tail: Optional[TailModel] = None) -> StreamSpec:
    return StreamSpec(Family.BERNOULLI, p, tail=tail or TailModel.subgaussian(xi))


def heavy_tail(mean: float, b: float, tail_index: float = 2.5, scale: float = 1.0,
               u: Optional[float] = None) -> StreamSpec:
    return StreamSpec(Family.HEAVY_TAIL, mean, tail_index=tail_index, scale=scale,
                      tail=TailModel.heavy(b, u))


def subgaussian_proxy(spec: StreamSpec) -> float:
    """Known upper bound on the proxy variance of a sub-Gaussian stream."""
    if spec.tail.is_heavy:
        raise ValueError("subgaussian_proxy is undefined for heavy-tailed streams")
    base = {
        Family.CONSTANT: 0.0,
        Family.GAUSSIAN: spec.variance,
        Family.BERNOULLI: 0.25,
    }[spec.family]
    if spec.tail.xi is not None:
        return max(base, spec.tail.xi)
    return base


def absolute_moment(spec: StreamSpec, b: float) -> float:
    """E|X|^b for the stream's distribution, by closed form or adaptive quadrature."""
    mu = spec.mean
    fam = spec.family
    if fam is Family.CONSTANT:
        return abs(mu) ** b
    if fam is Family.BERNOULLI:
        return mu
    if fam is Family.GAUSSIAN:
        sd = math.sqrt(spec.variance)

        def integrand(z):
            return abs(mu + sd * z) ** b * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

        val, _ = integrate.quad(integrand, -np.inf, np.inf, points=None, limit=200, epsabs=0, epsrel=1e-11)
        return val
    a, sigma = spec.tail_index, spec.scale

    def lomax_pdf(x):
        return (a / sigma) * (1.0 + x / sigma) ** (-(a + 1.0))

    def integrand(x):
        return 0.5 * (abs(mu + x) ** b + abs(mu - x) ** b) * lomax_pdf(x)

    kink = abs(mu)
    if kink > 0:
        head, _ = integrate.quad(integrand, 0.0, kink, limit=200, epsabs=0, epsrel=1e-11)
        tail, _ = integrate.quad(integrand, kink, np.inf, limit=400, epsabs=0, epsrel=1e-11)
        return head + tail
    val, _ = integrate.quad(integrand, 0.0, np.inf, limit=400, epsabs=0, epsrel=1e-11)
    return val


def draw_batch(spec: StreamSpec, rng: RandomSource, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. observations.

    Random families consume exactly one generator call per batch, so a batch of
    ``n`` equals ``n`` consecutive single draws.
    """
    fam = spec.family
    if fam is Family.CONSTANT:
        return np.full(n, spec.mean)
    if fam is Family.GAUSSIAN:
        return spec.mean + math.sqrt(spec.variance) * rng.standard_normal(n)
    if fam is Family.BERNOULLI:
        return (rng.random(n) < spec.mean).astype(float)
    v = rng.random(n)
    sign = np.where(v < 0.5, -1.0, 1.0)
    w = 2.0 * v - (v >= 0.5)
    magnitude = spec.scale * ((1.0 - w) ** (-1.0 / spec.tail_index) - 1.0)
    return spec.mean + sign * magnitude


def draw(spec: StreamSpec, rng: RandomSource) -> float:
    return float(draw_batch(spec, rng, 1)[0])


class SampleBuffer:
    """Observations of one stream in draw order, with a running sum."""

    def __init__(self, values: Sequence[float] = ()):
        self._data = np.empty(max(16, len(values)))
        self._count = 0
        self.total = 0.0
        if len(values):
            self.extend(values)

    @property
    def count(self) -> int:
        return self._count

    def __len__(self) -> int:
        return self._count

    @property
    def values(self) -> np.ndarray:
        return self._data[: self._count]

    def append(self, x: float) -> None:
        self.extend([x])

    def extend(self, xs) -> None:
        xs = np.asarray(xs, dtype=float)
        need = self._count + xs.size
        if need > self._data.size:
            grown = np.empty(max(need, 2 * self._data.size))
            grown[: self._count] = self.values
            self._data = grown
        self._data[self._count: need] = xs
        self._count = need
        self.total += float(xs.sum())

    def mean(self) -> float:
        if not self._count:
            raise ValueError("empty buffer")
        return self.total / self._count


def _as_array(samples: Union[SampleBuffer, Sequence[float], np.ndarray]) -> np.ndarray:
    if isinstance(samples, SampleBuffer):
        return samples.values
    return np.asarray(samples, dtype=float)


def truncated_mean(samples, p: float, u: float, b: float) -> float:
    """(1/s) * sum_t X(t) * 1{|X(t)| <= (u t / ln(1/p))^(1/b)} with t the 1-based draw index."""
    x = _as_array(samples)
    if x.size == 0:
        raise ValueError("truncated_mean of an empty buffer")
    if not 0 < p <= 0.5:
        raise ValueError(f"p must lie in (0, 1/2], got {p}")
    if not u > 0 or not 1 < b < 2:
        raise ValueError(f"need u > 0 and 1 < b < 2, got u={u}, b={b}")
    t = np.arange(1, x.size + 1)
    kept = np.abs(x) <= (u * t / math.log(1.0 / p)) ** (1.0 / b)
    return float(np.sum(x[kept]) / x.size)


def kept_indices(samples, p: float, u: float, b: float) -> np.ndarray:
    """1-based indices of the samples that survive truncation."""
    x = _as_array(samples)
    t = np.arange(1, x.size + 1)
    return t[np.abs(x) <= (u * t / math.log(1.0 / p)) ** (1.0 / b)]
