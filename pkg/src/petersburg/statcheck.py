"""Statistical checks used to verify the samplers against the limit laws.

KS critical values are fixed at the asymptotic ``p = 0.001`` level; there is
no p-value computation.  Tail frequencies carry Wilson intervals, which stay
sensible for probabilities close to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Union

import numpy as np
from scipy.special import ndtri

__all__ = [
    "KS_CRITICAL_001",
    "SampleBatch",
    "KSResult",
    "TailEstimate",
    "CFEstimate",
    "MeanEstimate",
    "ks_one_sample",
    "ks_two_sample",
    "tail_frequency",
    "wilson_interval",
    "empirical_cf",
    "mean_with_ci",
]

#: sqrt(-ln(0.0005) / 2), the asymptotic Kolmogorov quantile at p = 0.001
KS_CRITICAL_001 = 1.949


@dataclass(frozen=True)
class SampleBatch:
    """Sample values plus a description of how they were generated."""

    values: np.ndarray
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if values.size == 0:
            raise ValueError("empty batch")
        if not np.all(np.isfinite(values)):
            raise ValueError("batch contains non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self) -> int:
        return self.values.size


BatchLike = Union[SampleBatch, np.ndarray, list]


def _as_batch(batch: BatchLike) -> SampleBatch:
    return batch if isinstance(batch, SampleBatch) else SampleBatch(batch)


@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical_001: float

    @property
    def rejects(self) -> bool:
        return self.statistic > self.critical_001


def ks_one_sample(batch: BatchLike, cdf: Callable[[np.ndarray], np.ndarray]) -> KSResult:
    """Sup distance between the ECDF of ``batch`` and ``cdf``.

    Ties are handled exactly: at each distinct value both one-sided gaps
    ``F_n(x) - F(x)`` and ``F(x) - F_n(x-)`` are checked, so lattice samples
    against a continuous ``cdf`` are measured correctly.
    """
    b = _as_batch(batch)
    n = len(b)
    xs, counts = np.unique(b.values, return_counts=True)
    upper = np.cumsum(counts) / n
    lower = upper - counts / n
    f = np.asarray(cdf(xs), dtype=np.float64)
    d = max(float(np.max(upper - f)), float(np.max(f - lower)))
    return KSResult(statistic=d, critical_001=KS_CRITICAL_001 / math.sqrt(n))


def ks_two_sample(a: BatchLike, b: BatchLike) -> KSResult:
    """Two-sample KS statistic with the ``p = 0.001`` asymptotic critical value."""
    x, y = _as_batch(a).values, _as_batch(b).values
    x, y = np.sort(x), np.sort(y)
    grid = np.concatenate([x, y])
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    crit = KS_CRITICAL_001 * math.sqrt((x.size + y.size) / (x.size * y.size))
    return KSResult(statistic=float(np.max(np.abs(fx - fy))), critical_001=crit)


@dataclass(frozen=True)
class TailEstimate:
    threshold: float
    p_hat: float
    n: int
    ci_lo: float
    ci_hi: float
    level: float

    @property
    def count(self) -> int:
        return round(self.p_hat * self.n)


def _z(level: float) -> float:
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    return float(ndtri(0.5 + 0.5 * level))


def wilson_interval(k: int, n: int, level: float) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion ``k / n``."""
    z = _z(level)
    p = k / n
    z2n = z * z / n
    centre = (p + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n)) / (1.0 + z2n)
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # guard against rounding pushing p outside its own interval
    return min(lo, p), max(hi, p)


def tail_frequency(batch: BatchLike, threshold: float, level: float = 0.999) -> TailEstimate:
    """Fraction of the batch strictly above ``threshold`` with a Wilson interval.

    If the batch metadata records the Levy band cut ``l_max``, thresholds
    above ``2**(l_max - 1)`` are refused.
    """
    b = _as_batch(batch)
    l_max = b.meta.get("l_max")
    if l_max is not None and threshold > math.ldexp(1.0, int(l_max) - 1):
        raise ValueError(f"threshold {threshold} is biased by the band cut l_max = {l_max}")
    _z(level)
    n = len(b)
    k = int(np.count_nonzero(b.values > threshold))
    lo, hi = wilson_interval(k, n, level)
    return TailEstimate(threshold=float(threshold), p_hat=k / n, n=n, ci_lo=lo, ci_hi=hi, level=level)


@dataclass(frozen=True)
class CFEstimate:
    value: complex
    stderr_re: float
    stderr_im: float

    def within(self, target: complex, k: float = 3.0) -> bool:
        """Componentwise agreement with ``target`` to ``k`` standard errors."""
        return (abs(self.value.real - target.real) <= k * self.stderr_re
                and abs(self.value.imag - target.imag) <= k * self.stderr_im)


def empirical_cf(batch: BatchLike, z: float) -> CFEstimate:
    """Sample mean of ``exp(i z v)`` with componentwise standard errors."""
    v = _as_batch(batch).values
    n = v.size
    if z == 0:
        return CFEstimate(1 + 0j, 0.0, 0.0)
    c, s = np.cos(z * v), np.sin(z * v)
    se = lambda w: float(np.std(w, ddof=1)) / math.sqrt(n) if n > 1 else 0.0  # noqa: E731
    return CFEstimate(complex(c.mean(), s.mean()), se(c), se(s))


@dataclass(frozen=True)
class MeanEstimate:
    mean: float
    ci_lo: float
    ci_hi: float
    stderr: float
    n: int

    def contains(self, value: float) -> bool:
        return self.ci_lo <= value <= self.ci_hi


def mean_with_ci(batch: BatchLike, level: float = 0.999) -> MeanEstimate:
    """Sample mean with a normal-approximation confidence interval."""
    v = _as_batch(batch).values
    if v.size < 2:
        raise ValueError("need at least two values")
    z = _z(level)
    mean = float(v.mean())
    se = float(v.std(ddof=1)) / math.sqrt(v.size)
    return MeanEstimate(mean, mean - z * se, mean + z * se, se, v.size)
