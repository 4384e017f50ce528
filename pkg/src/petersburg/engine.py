"""Samplers for the Petersburg game variants and for the discounted-gain limit.

Conventions
-----------
* ``T`` is the number of tosses up to and including the first heads,
  ``P(T = k) = 2**-k``; the payoff of one game is ``2**T``.
* Samplers take an ``rng`` that is either an :class:`~petersburg.rng.RngStream`
  (pure: same stream, same output) or a ``numpy.random.Generator`` (advances).
* ``size=None`` returns a scalar, otherwise an array.

The limit variable of the discounted game has two independent constructions
here: :func:`sample_U_via_scaling` plays the discounted game at a large time
scale and normalizes, :func:`sample_U_levy` sums compound-Poisson bands of the
limiting Levy measure.  They are meant to be compared against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngLike, as_generator

__all__ = [
    "T_CAP",
    "DEFAULT_EPSILON",
    "GameOutcome",
    "TruncatedSession",
    "DiscountScaling",
    "DiscountedSessionTrace",
    "DoublingSessionTrace",
    "DiscountedBatch",
    "DoublingOutcome",
    "LevyTruncation",
    "sample_T",
    "sample_game",
    "play_truncated_session",
    "play_truncated_sessions",
    "sample_Mc_fast",
    "discounted_single_game_value",
    "truncation_bound",
    "simulate_discounted_pv",
    "discounted_pv_batch",
    "sample_U_via_scaling",
    "levy_band_rate",
    "sample_band_jumps",
    "sample_levy_band",
    "sample_U_levy",
    "check_tail_threshold",
    "doubling_game_unlimited",
    "doubling_game_discounted_pv",
    "doubling_game_discounted_pv_unreduced",
    "simulate_doubling_discounted_pv",
    "doubling_pv_batch",
]

LN2 = math.log(2.0)

#: ``T`` is capped here so that ``2.0**T`` stays finite; P(T > T_CAP) = 2**-1023.
T_CAP = 1023
#: Default cut-off for the leading discount of infinite discounted sums.
DEFAULT_EPSILON = 1e-12
#: Largest capital exponent for the truncated game.
C_MAX = 60

# elements per renewal matrix chunk (int64 + float64 temporaries)
_CHUNK_ELEMS = 1 << 22
# Levy draws are produced in chunks of this many values
_LEVY_CHUNK = 1 << 16


# ----------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class GameOutcome:
    """One Petersburg game: stopping time ``t`` and payoff ``2**payoff_log2``."""

    t: int
    payoff_log2: int

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.payoff_log2 != self.t:
            raise ValueError("payoff_log2 must equal t")

    @property
    def payoff(self) -> int:
        return 1 << self.payoff_log2


@dataclass(frozen=True)
class TruncatedSession:
    """A session of the truncated game with capital ``2**c``.

    ``m_c`` counts the unit gains before the first game with ``T > c``;
    ``v_c = m_c - (2**c - 1)`` is the net gain.  Python integers, so exact.
    """

    c: int
    m_c: int
    v_c: int

    def __post_init__(self):
        _check_c(self.c)
        if self.m_c < 0:
            raise ValueError("m_c must be nonnegative")
        if self.v_c != self.m_c - (1 << self.c) + 1:
            raise ValueError("v_c must equal m_c - 2**c + 1")


@dataclass(frozen=True)
class DiscountScaling:
    """Discount factor in time-scaled coordinates: ``r = exp(-a / 2**n)``.

    The ``(a, n)`` pair with ``1 <= a < 2`` is canonical; use
    :meth:`from_r` to convert a plain discount factor.
    """

    a: float
    n: int

    def __post_init__(self):
        if not (1.0 <= self.a < 2.0):
            raise ValueError(f"a must lie in [1, 2), got {self.a}")
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 0:
            raise ValueError(f"n must be a nonnegative integer, got {self.n!r}")

    @classmethod
    def from_r(cls, r: float) -> "DiscountScaling":
        """Map ``r`` in ``(exp(-2), 1)`` to ``(a, n)`` with ``2**n * (-ln r) = a``."""
        if not (0.0 < r < 1.0):
            raise ValueError(f"r must lie in (0, 1), got {r}")
        lam = -math.log(r)
        n = math.floor(math.log2(1.0 / lam))
        a = math.ldexp(lam, n)
        while a < 1.0:
            n += 1
            a *= 2.0
        while a >= 2.0:
            n -= 1
            a /= 2.0
        if n < 0:
            raise ValueError(f"r = {r} is too small: need r > exp(-2) for n >= 0")
        return cls(a, n)

    @property
    def n_big(self) -> float:
        """The time scale ``N = 2**n``."""
        return math.ldexp(1.0, self.n)

    @property
    def log_r(self) -> float:
        return -self.a / self.n_big

    @property
    def r(self) -> float:
        return math.exp(self.log_r)

    @property
    def one_minus_r(self) -> float:
        return -math.expm1(self.log_r)

    @property
    def d(self) -> float:
        """Interest rate per period, ``1/r - 1``."""
        return math.expm1(-self.log_r)


@dataclass(frozen=True)
class DiscountedSessionTrace:
    """One truncated realization of ``V(r)``.

    ``renewal_times`` runs up to the first renewal time whose discount falls
    below the cut-off; ``truncation_bound`` is the expected value of the
    discarded tail given that time.
    """

    renewal_times: np.ndarray
    pv_gain: float
    truncation_bound: float


@dataclass(frozen=True)
class DoublingSessionTrace:
    """One truncated realization of the discounted doubling stream.

    ``value`` is accumulated game by game; ``value_identity`` is the same sum
    rebuilt from the plain discount sum and ``V(r)`` on the same renewal
    times.  ``truncation_bound`` bounds the expected absolute value of the
    discarded tail.
    """

    renewal_times: np.ndarray
    value: float
    value_identity: float
    discount_sum: float
    pv_gain: float
    truncation_bound: float


@dataclass(frozen=True)
class DiscountedBatch:
    """Per-session arrays from :func:`discounted_pv_batch` / :func:`doubling_pv_batch`."""

    pv_gain: np.ndarray
    discount_sum: np.ndarray
    stop_time: np.ndarray
    truncation_bound: np.ndarray
    doubling_value: np.ndarray | None = None


@dataclass(frozen=True)
class DoublingOutcome:
    """Cash flows of one doubling-strategy game with unlimited capital."""

    t: int
    total_spent: int
    gross: int
    net: int
    peak_stake: int


@dataclass(frozen=True)
class LevyTruncation:
    """Band range ``l_min..l_max`` (inclusive) of the Levy representation."""

    l_min: int = -40
    l_max: int = 40

    def __post_init__(self):
        if not (self.l_min < 0 < self.l_max):
            raise ValueError(f"need l_min < 0 < l_max, got {self.l_min}, {self.l_max}")

    @property
    def bands(self) -> range:
        return range(self.l_min, self.l_max + 1)

    @property
    def max_tail_threshold(self) -> float:
        """Largest threshold for which tail frequencies are not biased by the cut."""
        return math.ldexp(1.0, self.l_max - 1)


# ----------------------------------------------------------------------------
# Single games


def _check_c(c: int) -> None:
    if isinstance(c, bool) or not isinstance(c, (int, np.integer)) or not 1 <= c <= C_MAX:
        raise ValueError(f"c must be an integer in [1, {C_MAX}], got {c!r}")


def _geometric_half(gen: np.random.Generator, count: int) -> np.ndarray:
    # Inversion on a single 53-bit uniform k / 2**53: T = 54 - bit_length(k).
    # k == 0 encodes T >= 54 and is resolved by memorylessness.
    def draw(k):
        raw = gen.bit_generator.random_raw(k)
        _, e = np.frexp((raw >> np.uint64(11)).astype(np.float64))
        return 54 - e.astype(np.int64)

    t = draw(count)
    tail = np.flatnonzero(t == 54)
    offset = 53
    while tail.size and offset < T_CAP:
        more = draw(tail.size)
        t[tail] = offset + more
        tail = tail[more == 54]
        offset += 53
    np.minimum(t, T_CAP, out=t)
    return t


def sample_T(rng: RngLike, size=None):
    """Sample the stopping time ``T`` with ``P(T = k) = 2**-k``.

    Each draw inverts the CDF on one 53-bit uniform; the rare value
    ``T >= 54`` is continued with a fresh draw, so the law is exact up to the
    cap ``T_CAP = 1023`` (cap probability ``2**-1023``).

    With ``RngStream(0, 0)`` the first ten draws are
    ``[3, 1, 1, 2, 4, 1, 1, 1, 2, 1]``.
    """
    gen = as_generator(rng)
    if size is None:
        return int(_geometric_half(gen, 1)[0])
    shape = (size,) if np.isscalar(size) else tuple(size)
    return _geometric_half(gen, int(np.prod(shape))).reshape(shape)


def sample_game(rng: RngLike) -> GameOutcome:
    t = sample_T(rng)
    return GameOutcome(t=t, payoff_log2=t)


# ----------------------------------------------------------------------------
# Truncated game


def _games_won(words: np.ndarray, c: int) -> np.ndarray:
    """Outcome of consecutive games encoded in raw 64-bit words.

    Every game consumes ``c`` fair bits (its first ``c`` tosses); the game is a
    gain iff at least one of them is heads, i.e. the ``c``-bit chunk is
    nonzero.
    """
    if c in (8, 16, 32):
        return words.view(np.dtype(f"uint{c}")) != 0
    per_word = 64 // c
    mask = np.uint64((1 << c) - 1)
    cols = [((words >> np.uint64(j * c)) & mask) != 0 for j in range(per_word)]
    return np.stack(cols, axis=1).ravel()


def play_truncated_sessions(c: int, size: int, rng: RngLike) -> np.ndarray:
    """Gain counts ``M_c`` of ``size`` independent sessions, game by game.

    This is the honest simulation: each game is played (from its coin
    tosses) until one is lost.  Expected cost is ``2**c`` games per session,
    so it is practical only for moderate ``c``; :func:`sample_Mc_fast` is the
    shortcut.
    """
    _check_c(c)
    gen = as_generator(rng)
    per_word = 64 // c
    out = np.empty(size, dtype=np.int64)
    filled = 0
    carry = 0
    while filled < size:
        want = (size - filled) * (2.0 ** c) * 1.05 / per_word + 64
        words = gen.bit_generator.random_raw(int(min(max(want, 1024), 1 << 22)))
        won = _games_won(words, c)
        losses = np.flatnonzero(~won)
        if losses.size == 0:
            carry += won.size
            continue
        m = np.diff(losses, prepend=-1) - 1
        m[0] += carry
        take = min(m.size, size - filled)
        out[filled:filled + take] = m[:take]
        filled += take
        carry = won.size - int(losses[-1]) - 1
    return out


def play_truncated_session(c: int, rng: RngLike) -> TruncatedSession:
    """Play the truncated game with capital ``2**c`` until the first loss."""
    m = int(play_truncated_sessions(c, 1, rng)[0])
    return TruncatedSession(c=c, m_c=m, v_c=m - (1 << c) + 1)


def sample_Mc_fast(c: int, rng: RngLike, size=None):
    """Sample ``M_c`` directly from ``P(M_c >= m) = (1 - 2**-c)**m``.

    Uses ``m = floor(ln(u) / ln(1 - 2**-c))`` with ``u`` uniform on ``(0, 1]``.
    Arrays are ``int64`` for ``c <= 57``; above that ``M_c`` can exceed the
    int64 range and an object array of Python ints is returned.
    """
    _check_c(c)
    gen = as_generator(rng)
    u = 1.0 - gen.random(1 if size is None else size)
    m = np.floor(np.log(u) / math.log1p(-(2.0 ** -c)))
    if size is None:
        return int(m[0])
    if c <= 57:
        return m.astype(np.int64)
    return np.array([int(v) for v in m.ravel()], dtype=object).reshape(m.shape)


# ----------------------------------------------------------------------------
# Discounted game


def discounted_single_game_value(t, r: float):
    """Present value ``(2r)**t`` of the payoff of a game of duration ``t``."""
    return np.power(2.0 * r, t)


def truncation_bound(r: float, stop_time) -> np.ndarray | float:
    """Expected value of the discarded tail of ``V(r)`` after renewal ``stop_time``.

    Every later game contributes ``r/(1-r)`` in expectation and each renewal
    discounts by ``E[r**T] = r/(2-r)``.
    """
    per_game = r / (1.0 - r)
    return np.power(r, stop_time) * per_game / (1.0 - r / (2.0 - r))


def _doubling_bound(r: float, stop_time):
    # E|single doubling game PV| <= r/(2r-1) + (1-r)/(2r-1) * r/(1-r)
    per_game = 2.0 * r / (2.0 * r - 1.0)
    return np.power(r, stop_time) * per_game / (1.0 - r / (2.0 - r))


def _check_epsilon(epsilon: float) -> None:
    if not (0.0 < epsilon < 1.0):
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")


class _RenewalSums:
    """Accumulates the discounted sums of one or more renewal streams."""

    def __init__(self, scaling: DiscountScaling, epsilon: float, doubling: bool):
        _check_epsilon(epsilon)
        self.log_r = scaling.log_r
        self.log_eps = math.log(epsilon)
        self.r = scaling.r
        self.one_minus_r = scaling.one_minus_r
        self.doubling = doubling
        if doubling:
            if not self.r > 0.5:
                raise ValueError(f"doubling stream needs r > 1/2, got r = {self.r}")
            self.k_gain = self.r / (2.0 * self.r - 1.0)
            self.k_loss = self.one_minus_r / (2.0 * self.r - 1.0)
        t_max = self.log_eps / self.log_r
        self.games = int(t_max / 2.0 + 8.0 * math.sqrt(t_max) + 32)

    def terms(self, t_prev: np.ndarray, dt: np.ndarray):
        """Per-term sums along the last axis; excluded terms are dropped."""
        t = t_prev + dt
        keep = t_prev * self.log_r >= self.log_eps
        pv = np.where(keep, np.exp(t * self.log_r + dt * LN2), 0.0)
        disc = np.where(keep, np.exp(t_prev * self.log_r), 0.0)
        out = [pv.sum(axis=-1), disc.sum(axis=-1)]
        if self.doubling:
            out.append((self.k_gain * disc - self.k_loss * pv).sum(axis=-1))
        return out

    def stopped(self, t: np.ndarray) -> np.ndarray:
        return t * self.log_r < self.log_eps

    def continue_row(self, gen: np.random.Generator, t0: int, keep_times: bool = False):
        """Play one stream from renewal time ``t0`` until it stops."""
        totals = [0.0] * (3 if self.doubling else 2)
        times = []
        while not self.stopped(t0):
            dt = _geometric_half(gen, self.games)
            t = t0 + np.cumsum(dt)
            t_prev = t - dt
            stop = np.flatnonzero(self.stopped(t))
            if stop.size:
                k = int(stop[0]) + 1
                dt, t, t_prev = dt[:k], t[:k], t_prev[:k]
            for i, v in enumerate(self.terms(t_prev, dt)):
                totals[i] += float(v)
            if keep_times:
                times.append(t)
            t0 = int(t[-1])
        return totals, t0, times

    def batch(self, gen: np.random.Generator, count: int):
        rows = max(1, _CHUNK_ELEMS // self.games)
        n_out = 3 if self.doubling else 2
        sums = [np.empty(count) for _ in range(n_out)]
        stop_time = np.empty(count, dtype=np.int64)
        for start in range(0, count, rows):
            b = min(rows, count - start)
            dt = _geometric_half(gen, b * self.games).reshape(b, self.games)
            t = np.cumsum(dt, axis=1)
            t_prev = t - dt
            for i, v in enumerate(self.terms(t_prev, dt)):
                sums[i][start:start + b] = v
            done = self.stopped(t)
            reached = done[:, -1]
            first = np.argmax(done, axis=1)
            stop_time[start:start + b] = t[np.arange(b), first]
            for j in np.flatnonzero(~reached):
                extra, t_stop, _ = self.continue_row(gen, int(t[j, -1]))
                for i in range(n_out):
                    sums[i][start + j] += extra[i]
                stop_time[start + j] = t_stop
        return sums, stop_time


def simulate_discounted_pv(
    scaling: DiscountScaling, rng: RngLike, epsilon: float = DEFAULT_EPSILON
) -> DiscountedSessionTrace:
    """Truncated present value ``V(r) = sum r**T_{i-1} (2r)**(T_i - T_{i-1})``.

    Terms are added while the leading discount ``r**T_{i-1}`` is at least
    ``epsilon``.
    """
    acc = _RenewalSums(scaling, epsilon, doubling=False)
    (pv, _), t_stop, times = acc.continue_row(as_generator(rng), 0, keep_times=True)
    return DiscountedSessionTrace(
        renewal_times=np.concatenate(times),
        pv_gain=pv,
        truncation_bound=float(truncation_bound(acc.r, t_stop)),
    )


def discounted_pv_batch(
    scaling: DiscountScaling, size: int, rng: RngLike, epsilon: float = DEFAULT_EPSILON
) -> DiscountedBatch:
    """Vectorized :func:`simulate_discounted_pv` over ``size`` sessions."""
    acc = _RenewalSums(scaling, epsilon, doubling=False)
    (pv, disc), t_stop = acc.batch(as_generator(rng), size)
    return DiscountedBatch(pv, disc, t_stop, truncation_bound(acc.r, t_stop))


def sample_U_via_scaling(
    scaling: DiscountScaling, rng: RngLike, size=None, epsilon: float = DEFAULT_EPSILON
):
    """Approximate draw of the limit ``U`` as ``(2(1-r) V(r) - n) / (2a)``.

    Converges in distribution as ``n`` grows; no rate is known, so the bias at
    a given ``n`` has to be measured against :func:`sample_U_levy`.
    """
    batch = discounted_pv_batch(scaling, 1 if size is None else size, rng, epsilon)
    u = (2.0 * scaling.one_minus_r * batch.pv_gain - scaling.n) / (2.0 * scaling.a)
    return float(u[0]) if size is None else u


# ----------------------------------------------------------------------------
# Levy representation of U


def _check_a(a: float) -> None:
    if not (1.0 <= a < 2.0):
        raise ValueError(f"a must lie in [1, 2), got {a}")


def levy_band_rate(l: int, a: float) -> float:
    """Total Levy mass ``2**-l ln2 / (2a)`` of the jumps in ``[2**l, 2**(l+1))``."""
    return math.ldexp(LN2 / (2.0 * a), -l)


def sample_band_jumps(l: int, a: float, rng: RngLike, size: int):
    """Jump counts and jump sizes of band ``l`` for ``size`` independent draws.

    Returns ``(counts, jumps)`` where ``jumps`` holds ``counts.sum()`` values
    in ``[2**l, 2**(l+1))`` with density proportional to ``1/x``, grouped by
    draw in order.
    """
    _check_a(a)
    gen = as_generator(rng)
    counts = gen.poisson(levy_band_rate(l, a), size)
    jumps = np.ldexp(np.exp2(gen.random(int(counts.sum()))), l)
    return counts, jumps


def _band_sum(gen: np.random.Generator, l: int, a: float, size: int) -> np.ndarray:
    counts, jumps = sample_band_jumps(l, a, gen, size)
    if jumps.size:
        total = np.bincount(np.repeat(np.arange(size), counts), weights=jumps, minlength=size)
    else:
        total = np.zeros(size)
    if l <= 0:
        # compensator: rate * mean jump (1/ln2) * 2**l
        total -= 1.0 / (2.0 * a)
    return total


def sample_levy_band(l: int, a: float, rng: RngLike, size=None):
    """Exact draw of ``2**l * W_l``: compound Poisson, centered for ``l <= 0``."""
    _check_a(a)
    out = _band_sum(as_generator(rng), l, a, 1 if size is None else size)
    return float(out[0]) if size is None else out


def _levy_chunk(gen, a, trunc, size, max_exact_rate):
    u = np.full(size, 1.0 / a)
    gauss_var = 0.0
    for l in trunc.bands:
        if levy_band_rate(l, a) > max_exact_rate:
            # variance 2**(2l) * rate * E[X**2] with E[X**2] = 3/(2 ln2)
            gauss_var += math.ldexp(0.75 / a, l)
            continue
        u += _band_sum(gen, l, a, size)
    if gauss_var:
        u += math.sqrt(gauss_var) * gen.standard_normal(size)
    return u


def sample_U_levy(
    a: float,
    rng: RngLike,
    size=None,
    trunc: LevyTruncation = LevyTruncation(),
    max_exact_rate: float = 64.0,
):
    """Draw ``U = 1/a + sum_l 2**l W_l`` band by band.

    Bands whose jump rate is at most ``max_exact_rate`` are simulated exactly
    (Poisson count, jumps ``2**(l+u)``).  Bands with a higher rate sit deep in
    the small-jump region, where millions of jumps per draw would be needed;
    their centered sum is replaced by a normal with the same variance.  With
    the default the largest such band has third cumulant ``< 2e-5/a``.
    """
    _check_a(a)
    gen = as_generator(rng)
    n = 1 if size is None else int(size)
    out = np.empty(n)
    for start in range(0, n, _LEVY_CHUNK):
        b = min(_LEVY_CHUNK, n - start)
        out[start:start + b] = _levy_chunk(gen, a, trunc, b, max_exact_rate)
    return float(out[0]) if size is None else out


def check_tail_threshold(threshold: float, trunc: LevyTruncation) -> None:
    """Refuse tail queries that the band cut-off would bias."""
    if threshold > trunc.max_tail_threshold:
        raise ValueError(
            f"threshold {threshold} exceeds 2**(l_max-1) = {trunc.max_tail_threshold}; "
            "raise l_max"
        )


# ----------------------------------------------------------------------------
# Doubling strategy


def doubling_game_unlimited(rng: RngLike) -> DoublingOutcome:
    """One doubling game with free unlimited capital: stake 1, 2, 4, ... until heads."""
    t = sample_T(rng)
    spent = 0
    stake = 1
    for _ in range(t):
        spent += stake
        stake <<= 1
    gross = 1 << t
    return DoublingOutcome(t=t, total_spent=spent, gross=gross, net=gross - spent,
                           peak_stake=1 << (t - 1))


def _check_doubling_r(r: float) -> None:
    if not (0.5 < r < 1.0):
        raise ValueError(f"r must lie in (1/2, 1), got {r}")


def doubling_game_discounted_pv(t, r: float):
    """Present value ``r/(2r-1) - (2r)**t (1-r)/(2r-1)`` of one doubling game."""
    _check_doubling_r(r)
    q = 2.0 * r - 1.0
    return r / q - np.power(2.0 * r, t) * (1.0 - r) / q


def doubling_game_discounted_pv_unreduced(t, r: float):
    """Same value as the unsimplified ``(2r)**t - r((2r)**t - 1)/(2r - 1)``."""
    _check_doubling_r(r)
    g = np.power(2.0 * r, t)
    return g - r * (g - 1.0) / (2.0 * r - 1.0)


def simulate_doubling_discounted_pv(
    scaling: DiscountScaling, rng: RngLike, epsilon: float = DEFAULT_EPSILON
) -> DoublingSessionTrace:
    """Truncated PV of an infinite sequence of discounted doubling games."""
    acc = _RenewalSums(scaling, epsilon, doubling=True)
    (pv, disc, value), t_stop, times = acc.continue_row(as_generator(rng), 0, keep_times=True)
    return DoublingSessionTrace(
        renewal_times=np.concatenate(times),
        value=value,
        value_identity=acc.k_gain * disc - acc.k_loss * pv,
        discount_sum=disc,
        pv_gain=pv,
        truncation_bound=float(_doubling_bound(acc.r, t_stop)),
    )


def doubling_pv_batch(
    scaling: DiscountScaling, size: int, rng: RngLike, epsilon: float = DEFAULT_EPSILON
) -> DiscountedBatch:
    """Vectorized :func:`simulate_doubling_discounted_pv`."""
    acc = _RenewalSums(scaling, epsilon, doubling=True)
    (pv, disc, value), t_stop = acc.batch(as_generator(rng), size)
    return DiscountedBatch(pv, disc, t_stop, _doubling_bound(acc.r, t_stop), value)
