"""Deterministic formulas: Levy exponents, Levy-measure tails, premium and ruin.

All logarithms are natural.  ``2 ln 2 - ln x`` appears throughout as the
Levy-measure tail profile on one dyadic band.

Complex values are returned as Python ``complex``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import integrate

from .engine import DiscountScaling, LevyTruncation

__all__ = [
    "ConvergenceError",
    "DyadicThreshold",
    "QuadratureSpec",
    "PremiumEstimate",
    "RuinEstimate",
    "dyadic_decompose",
    "exp_limit_sf",
    "truncated_expected_gain",
    "mean_discounted_single",
    "mean_discounted_total",
    "levy_exponent_l",
    "band_integral",
    "levy_exponent_g",
    "levy_tail_Lbar",
    "tail_approx_U",
    "premium_tail",
    "ruin_probability",
]

LN2 = math.log(2.0)
TWO_LN2 = 2.0 * LN2

# largest |band index| the exponent sums may extend to
_MAX_BAND = 1021
# above this |theta| the uncentered band integral uses the Fourier-weighted rule
_OSCILLATORY_THETA = 8.0


class ConvergenceError(ArithmeticError):
    """A series could not be brought below the requested tolerance."""

    def __init__(self, message: str, remainder: float):
        super().__init__(f"{message} (remainder estimate {remainder:.3g})")
        self.remainder = remainder


def dyadic_decompose(y: float) -> tuple[int, float]:
    """Split ``y > 0`` as ``x * 2**m`` with ``1 <= x < 2`` (exact)."""
    if not y > 0:
        raise ValueError(f"y must be positive, got {y}")
    mant, e = math.frexp(y)
    return e - 1, 2.0 * mant


@dataclass(frozen=True)
class DyadicThreshold:
    """A positive level ``y = x * 2**m`` with ``1 <= x < 2``."""

    y: float
    m: int
    x: float

    def __post_init__(self):
        if not self.y > 0:
            raise ValueError("y must be positive")
        if not 1.0 <= self.x < 2.0:
            raise ValueError(f"x must lie in [1, 2), got {self.x}")
        if abs(math.ldexp(self.x, self.m) - self.y) > math.ulp(self.y):
            raise ValueError("y must equal x * 2**m")

    @classmethod
    def from_value(cls, y: float) -> "DyadicThreshold":
        m, x = dyadic_decompose(y)
        return cls(y=y, m=m, x=x)

    @classmethod
    def from_parts(cls, m: int, x: float) -> "DyadicThreshold":
        if x == 2.0:
            m, x = m + 1, 1.0
        return cls(y=math.ldexp(x, m), m=m, x=x)


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for the exponent series and band integrals.

    ``abs_tol`` bounds both the error of each scaled band integral and the
    remainder of the discarded bands; ``band_range`` is the starting range,
    extended as needed.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    band_range: LevyTruncation = LevyTruncation()

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")


DEFAULT_QUAD = QuadratureSpec()


# ----------------------------------------------------------------------------
# Elementary formulas


def exp_limit_sf(u: float) -> float:
    """Survival function ``P(U >= u) = exp(-u)`` of the exponential limit."""
    if u < 0:
        raise ValueError(f"u must be nonnegative, got {u}")
    return math.exp(-u)


def truncated_expected_gain(c: int) -> float:
    """``1 (1 - 2**-c) - (2**c - 1) 2**-c``, evaluated as written in floats.

    Both products are exact dyadic rationals for ``c <= 52``, so this is
    exactly ``0.0``.
    """
    if isinstance(c, bool) or not isinstance(c, (int, np.integer)) or not 1 <= c <= 52:
        raise ValueError(f"c must be an integer in [1, 52], got {c!r}")
    p_stop = 2.0 ** -c
    return 1.0 * (1.0 - p_stop) - (2.0 ** c - 1.0) * p_stop


def _check_r(r: float) -> None:
    if not (0.0 < r < 1.0):
        raise ValueError(f"r must lie in (0, 1), got {r}")


def mean_discounted_single(r: float) -> float:
    """``E[(2r)**T] = r / (1 - r)``."""
    _check_r(r)
    return r / (1.0 - r)


def mean_discounted_total(r: float) -> float:
    """``E[V(r)] = r(2 - r) / (2 (1 - r)**2)``: per-game mean times ``sum E[r**T_i]``."""
    _check_r(r)
    return r * (2.0 - r) / (2.0 * (1.0 - r) ** 2)


# ----------------------------------------------------------------------------
# Levy exponents


def _sin_minus_x(x: float) -> float:
    if abs(x) < 1e-2:
        x2 = x * x
        return -x * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
    return math.sin(x) - x


def _cos_minus_1(x: float) -> float:
    s = math.sin(0.5 * x)
    return -2.0 * s * s


def _extend_range(lo: int, hi: int, low_rem, high_rem, tol: float) -> tuple[int, int]:
    while low_rem(lo) >= tol:
        lo -= 1
        if lo < -_MAX_BAND:
            raise ConvergenceError("lower band sum did not converge", low_rem(lo))
    while high_rem(hi) >= tol:
        hi += 1
        if hi > _MAX_BAND:
            raise ConvergenceError("upper band sum did not converge", high_rem(hi))
    return lo, hi


def _inside_out(lo: int, hi: int) -> list[int]:
    return sorted(range(lo, hi + 1), key=lambda k: (abs(k), k))


def levy_exponent_l(z: float, k_range: tuple[int, int] = (-40, 40),
                    quad: QuadratureSpec = DEFAULT_QUAD) -> complex:
    """Levy exponent of the centered limit process of the game payoffs.

    ``l(z) = sum_{k<=0} 2**-k (e^{iz2^k} - 1 - iz2^k) + sum_{k>=1} 2**-k (e^{iz2^k} - 1)``

    The range is widened until the remainders ``z**2 2**k_min / 2`` and
    ``2 * 2**-k_max`` are below ``quad.abs_tol``.
    """
    k_min, k_max = k_range
    if k_min > -40 or k_max < 40:
        raise ValueError("k_range must cover at least [-40, 40]")
    z = float(z)
    if z == 0.0:
        return 0j
    k_min, k_max = _extend_range(
        k_min, k_max,
        lambda k: 0.5 * z * z * math.ldexp(1.0, k),
        lambda k: math.ldexp(2.0, -k),
        quad.abs_tol,
    )
    re, im = [], []
    for k in _inside_out(k_min, k_max):
        theta = math.ldexp(z, k)
        w = math.ldexp(1.0, -k)
        re.append(w * _cos_minus_1(theta))
        im.append(w * (_sin_minus_x(theta) if k <= 0 else math.sin(theta)))
    return complex(math.fsum(re), math.fsum(im))


def band_integral(theta: float, centered: bool, epsabs: float = 1e-13,
                  epsrel: float = 1e-12) -> complex:
    """``int_1^2 (e^{i theta y} - 1 - i theta y [centered]) dy / y`` by adaptive quadrature.

    For large ``|theta|`` both variants use QUADPACK's Fourier-weighted rule
    on ``1/y`` (the centering term integrates to ``theta``); otherwise a
    cancellation-free form of the integrand is integrated.
    """
    if theta == 0.0:
        return 0j
    opts = dict(epsabs=epsabs, epsrel=epsrel, limit=200)
    if abs(theta) > _OSCILLATORY_THETA:
        inv = lambda y: 1.0 / y  # noqa: E731
        re = integrate.quad(inv, 1.0, 2.0, weight="cos", wvar=theta, **opts)[0] - LN2
        im = integrate.quad(inv, 1.0, 2.0, weight="sin", wvar=theta, **opts)[0]
        return complex(re, im - theta if centered else im)
    re = integrate.quad(lambda y: _cos_minus_1(theta * y) / y, 1.0, 2.0, **opts)[0]
    if centered:
        im = integrate.quad(lambda y: _sin_minus_x(theta * y) / y, 1.0, 2.0, **opts)[0]
    else:
        im = integrate.quad(lambda y: math.sin(theta * y) / y, 1.0, 2.0, **opts)[0]
    return complex(re, im)


@lru_cache(maxsize=4096)
def _g_cached(z: float, quad: QuadratureSpec) -> complex:
    tol = quad.abs_tol
    lo, hi = _extend_range(
        quad.band_range.l_min, quad.band_range.l_max,
        lambda l: 0.75 * z * z * math.ldexp(1.0, l),
        lambda l: TWO_LN2 * math.ldexp(1.0, -l),
        tol,
    )
    re, im = [], []
    for l in _inside_out(lo, hi):
        scale = math.ldexp(1.0, -l)
        # error of the scaled band is scale * epsabs
        val = band_integral(math.ldexp(z, l), l <= 0, epsabs=tol / scale, epsrel=quad.rel_tol)
        re.append(scale * val.real)
        im.append(scale * val.imag)
    return complex(math.fsum(re), 2.0 * z + math.fsum(im))


def levy_exponent_g(z: float, quad: QuadratureSpec = DEFAULT_QUAD) -> complex:
    """Exponent ``g`` with ``E[exp(izU)] = exp(g(z) / 2a)`` for the discounted limit.

    ``g(z) = 2iz + sum_l 2**-l int_{2^l}^{2^{l+1}} (e^{izx} - 1 - izx [l <= 0]) dx/x``

    Each band is integrated on ``[1, 2]`` after the substitution
    ``x = 2**l y``.  Bands are summed from ``l = 0`` outwards and the range is
    widened until the remainders ``2 ln2 2**-l_max`` and
    ``(3/4) z**2 2**l_min`` drop below ``quad.abs_tol``.
    """
    z = float(z)
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    if z == 0.0:
        return 0j
    return _g_cached(z, quad)


# ----------------------------------------------------------------------------
# Tails


def levy_tail_Lbar(y: float, a: float) -> float:
    """Levy-measure mass above ``y``: ``2**-k (2 ln2 - ln x) / (2a)`` for ``y = x 2**k``."""
    if not 1.0 <= a < 2.0:
        raise ValueError(f"a must lie in [1, 2), got {a}")
    k, x = dyadic_decompose(y)
    return math.ldexp((TWO_LN2 - math.log(x)) / (2.0 * a), -k)


def tail_approx_U(threshold: DyadicThreshold, a: float) -> float:
    """Large-deviation approximation ``P(U > x 2**m + m/2a) ~ 2**-m (2 ln2 - ln x) / 2a``.

    The shift ``m/2a`` is part of the event being approximated, not of the
    returned value; Monte Carlo comparisons must apply it to the threshold.
    """
    if threshold.m < 0:
        raise ValueError("threshold.m must be nonnegative")
    return math.ldexp((TWO_LN2 - math.log(threshold.x)) / (2.0 * a), -threshold.m)


@dataclass(frozen=True)
class PremiumEstimate:
    """Approximate ``P(V(r) > v)`` in its two algebraically equivalent forms.

    ``probability`` uses ``1 - r`` exactly; ``scaled_form`` uses the time
    scale ``N`` and ``a``.  They differ by the factor ``(1 - r) N / a``, whose
    deviation from one is ``discount_gap``.
    """

    probability: float
    scaled_form: float
    m: int
    x: float
    a: float
    n: int
    discount_gap: float

    @property
    def form_discrepancy(self) -> float:
        return abs(self.probability - self.scaled_form) / self.scaled_form


def premium_tail(v: float, r: float) -> PremiumEstimate:
    """Tail estimate of the total discounted gain ``V(r)`` above a premium ``v``.

    With ``v/N = x 2**m``: ``P(V(r) > v) ~ x (2 ln2 - ln x) / (2 (1-r) v)``.
    The drift ``n/2a`` of ``V(r)/N`` is neglected.
    """
    if not v > 0:
        raise ValueError(f"v must be positive, got {v}")
    _check_r(r)
    scaling = DiscountScaling.from_r(r)
    big_n, a = scaling.n_big, scaling.a
    m, x = dyadic_decompose(v / big_n)
    profile = TWO_LN2 - math.log(x)
    one_minus_r = 1.0 - r
    return PremiumEstimate(
        probability=x * profile / (2.0 * one_minus_r * v),
        scaled_form=(big_n / v) * profile * (x / (2.0 * a)),
        m=m,
        x=x,
        a=a,
        n=scaling.n,
        discount_gap=one_minus_r * big_n / a - 1.0,
    )


@dataclass(frozen=True)
class RuinEstimate:
    """Two candidate approximations of the ruin probability of the doubling stream.

    ``discount_form = (1-r) 2a x (2 ln2 - ln x)``;
    ``tail_form = 2**-m (2 ln2 - ln x) / 2a`` from the tail asymptotic at
    ``N/2a**2 = x 2**m``.  They differ by a factor of about ``2a``.
    """

    discount_form: float
    tail_form: float
    m: int
    x: float
    a: float
    n: int
    one_minus_r: float
    threshold: float

    @property
    def ratio(self) -> float:
        return self.discount_form / self.tail_form


def ruin_probability(r: Union[float, DiscountScaling]) -> RuinEstimate:
    """``R = P(V~(r) < 0) ~ P(U > N / 2a**2)`` in both candidate forms.

    ``r`` may be a discount factor or a :class:`DiscountScaling`; for a
    discount factor ``1 - r`` is taken literally.
    """
    if isinstance(r, DiscountScaling):
        scaling = r
        one_minus_r = scaling.one_minus_r
    else:
        _check_r(r)
        scaling = DiscountScaling.from_r(r)
        one_minus_r = 1.0 - r
    a = scaling.a
    threshold = scaling.n_big / (2.0 * a * a)
    m, x = dyadic_decompose(threshold)
    profile = TWO_LN2 - math.log(x)
    return RuinEstimate(
        discount_form=one_minus_r * 2.0 * a * x * profile,
        tail_form=math.ldexp(profile / (2.0 * a), -m),
        m=m,
        x=x,
        a=a,
        n=scaling.n,
        one_minus_r=one_minus_r,
        threshold=threshold,
    )
