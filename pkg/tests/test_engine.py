import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from petersburg import engine as eng
from petersburg.rng import RngStream
from petersburg.statcheck import ks_two_sample

import oracles

SEED0_FIRST_TEN = [3, 1, 1, 2, 4, 1, 1, 1, 2, 1]


class _ScriptedBits:
    """Stand-in generator whose raw 64-bit words come from a script, then zeros."""

    def __init__(self, words):
        self.words = list(words)
        self.bit_generator = self

    def random_raw(self, count):
        out = [self.words.pop(0) if self.words else 0 for _ in range(count)]
        return np.array(out, dtype=np.uint64)


# --- stopping time ----------------------------------------------------------

def test_T_frozen_sequence_seed0():
    assert list(eng.sample_T(RngStream(0, 0), 10)) == SEED0_FIRST_TEN


def test_T_scalar_and_shape():
    assert eng.sample_T(RngStream(0, 0)) == SEED0_FIRST_TEN[0]
    assert eng.sample_T(RngStream(1), (3, 4)).shape == (3, 4)


def test_T_inversion_boundaries():
    top = 1 << 63
    # top bit set -> heads on the first toss; only the last of 53 bits -> T = 53
    assert list(eng._geometric_half(_ScriptedBits([top, 1 << 11]), 2)) == [1, 53]


def test_T_memoryless_continuation():
    # an all-zero 53-bit word means T >= 54; the next word decides the rest
    t = eng._geometric_half(_ScriptedBits([0, (1 << 63) >> 2]), 1)
    assert t[0] == 53 + 3


def test_T_cap():
    assert eng._geometric_half(_ScriptedBits([]), 1)[0] == eng.T_CAP


def test_T_law():
    t = eng.sample_T(RngStream(8), 1_000_000)
    n = t.size
    for k in range(1, 8):
        p = 2.0 ** -k
        assert abs(np.mean(t == k) - p) <= 4 * math.sqrt(p * (1 - p) / n)
    se = math.sqrt(2.0 / n)  # Var T = 2
    assert abs(t.mean() - oracles.mean_T_series()) <= 4 * se


def test_T_matches_coin_tossing():
    g = np.random.default_rng(4)
    honest = [oracles.honest_T(g) for _ in range(20_000)]
    fast = eng.sample_T(RngStream(4), 20_000)
    assert not ks_two_sample(honest, fast).rejects


def test_game_outcome():
    game = eng.sample_game(RngStream(0, 0))
    assert game.t == 3 and game.payoff == 8
    with pytest.raises(ValueError):
        eng.GameOutcome(t=0, payoff_log2=0)
    with pytest.raises(ValueError):
        eng.GameOutcome(t=2, payoff_log2=3)


# --- truncated game ---------------------------------------------------------

def _games_won_reference(words, c):
    bits = []
    for w in map(int, words):
        bits.extend((w >> (j * c)) & ((1 << c) - 1) != 0 for j in range(64 // c))
    return np.array(bits)


@pytest.mark.parametrize("c", [1, 3, 5, 7, 8, 16, 32, 60])
def test_games_won_bit_layout(c):
    words = RngStream(11).generator().bit_generator.random_raw(16)
    np.testing.assert_array_equal(eng._games_won(words, c), _games_won_reference(words, c))


def test_session_c1_stops_half_the_time():
    m = eng.play_truncated_sessions(1, 1_000_000, RngStream(12))
    p = np.mean(m == 0)
    assert abs(p - 0.5) <= 4 * math.sqrt(0.25 / m.size)


@pytest.mark.parametrize("c", [2, 3])
def test_session_matches_toss_by_toss_play(c):
    g = np.random.default_rng(c)
    honest = [oracles.honest_session(c, g) for _ in range(5_000)]
    sessions = eng.play_truncated_sessions(c, 5_000, RngStream(13, c))
    assert not ks_two_sample(honest, sessions).rejects


def test_session_carry_across_buffers():
    # 200 sessions of ~2**18 games need several 2**22-word buffers
    c = 18
    m = eng.play_truncated_sessions(c, 200, RngStream(14))
    sd = math.sqrt((1 - 2.0 ** -c) / 4.0 ** -c)
    assert abs(m.mean() - (2 ** c - 1)) <= 4 * sd / math.sqrt(m.size)


def test_truncated_session_identity():
    s = eng.play_truncated_session(6, RngStream(15))
    assert s.v_c == s.m_c - 2 ** 6 + 1
    with pytest.raises(ValueError):
        eng.TruncatedSession(c=6, m_c=3, v_c=0)


@pytest.mark.parametrize("c", [0, 61, 2.0, True])
def test_c_validation(c):
    with pytest.raises(ValueError):
        eng.sample_Mc_fast(c, RngStream(0))
    with pytest.raises(ValueError):
        eng.play_truncated_sessions(c, 1, RngStream(0))


class _ZeroUniforms(np.random.Generator):
    def random(self, size=None):
        return np.zeros(size)


def test_fast_Mc_u_one_gives_zero():
    g = _ZeroUniforms(np.random.PCG64DXSM(0))
    assert eng.sample_Mc_fast(10, g) == 0
    assert list(eng.sample_Mc_fast(60, g, 2)) == [0, 0]


def test_fast_Mc_geometric_law():
    c = 4
    m = eng.sample_Mc_fast(c, RngStream(16), 1_000_000)
    q = 1 - 2.0 ** -c
    for k in (0, 5, 20, 40):
        p = q ** k
        assert abs(np.mean(m >= k) - p) <= 4 * math.sqrt(p * (1 - p) / m.size)


def test_fast_Mc_dtypes():
    assert eng.sample_Mc_fast(57, RngStream(1), 5).dtype == np.int64
    big = eng.sample_Mc_fast(60, RngStream(1), 5)
    assert big.dtype == object and all(isinstance(v, int) for v in big)
    assert isinstance(eng.sample_Mc_fast(8, RngStream(1)), int)


@pytest.mark.parametrize("c", [4, 8])
def test_fast_Mc_matches_honest(c):
    honest = eng.play_truncated_sessions(c, 50_000, RngStream(17, c))
    fast = eng.sample_Mc_fast(c, RngStream(18, c), 50_000)
    assert not ks_two_sample(honest, fast).rejects


# --- scaling ----------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(r=hst.floats(math.exp(-2) * 1.0001, 1 - 1e-12))
def test_scaling_from_r(r):
    s = eng.DiscountScaling.from_r(r)
    assert 1.0 <= s.a < 2.0 and s.n >= 0
    assert abs(s.n_big * -math.log(r) - s.a) <= 1e-12 * s.a
    assert math.isclose(s.r, r, rel_tol=1e-14)


def test_scaling_properties():
    s = eng.DiscountScaling(1.0, 13)
    assert s.n_big == 8192.0
    assert math.isclose(s.one_minus_r, 1 - math.exp(-1 / 8192), rel_tol=1e-12)
    assert math.isclose(s.d, 1 / s.r - 1, rel_tol=1e-9)


@pytest.mark.parametrize("a, n", [(0.99, 3), (2.0, 3), (1.5, -1), (1.5, 2.0)])
def test_scaling_rejects(a, n):
    with pytest.raises(ValueError):
        eng.DiscountScaling(a, n)


def test_scaling_rejects_small_r():
    with pytest.raises(ValueError):
        eng.DiscountScaling.from_r(0.1)


# --- discounted game --------------------------------------------------------

def test_single_game_pv_mean():
    r = 0.6
    t = eng.sample_T(RngStream(20), 1_000_000)
    v = eng.discounted_single_game_value(t, r)
    target = oracles.discounted_mean_series(r)
    assert abs(v.mean() - target) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


def test_single_game_pv_at_half_is_one():
    t = eng.sample_T(RngStream(21), 1000)
    np.testing.assert_allclose(eng.discounted_single_game_value(t, 0.5), 1.0, rtol=0, atol=0)


def _pv_from_times(times, r):
    prev = 0
    total = 0.0
    for t in map(int, times):
        total += r ** prev * (2 * r) ** (t - prev)
        prev = t
    return total


def test_trace_recomputes_from_renewal_times():
    s = eng.DiscountScaling.from_r(0.9)
    eps = 1e-12
    tr = eng.simulate_discounted_pv(s, RngStream(22), eps)
    times = tr.renewal_times
    assert np.all(np.diff(times) >= 1)
    assert s.r ** times[-1] < eps <= s.r ** times[-2]
    assert math.isclose(tr.pv_gain, _pv_from_times(times, s.r), rel_tol=1e-11)
    assert tr.truncation_bound == pytest.approx(eng.truncation_bound(s.r, times[-1]))


def test_truncation_bound_monotone_and_small():
    r = 0.6
    b = eng.truncation_bound(r, np.arange(0, 200))
    assert np.all(np.diff(b) < 0)
    tr = eng.simulate_discounted_pv(eng.DiscountScaling.from_r(r), RngStream(23))
    assert tr.truncation_bound < 1e-10


def test_total_pv_mean():
    r = 0.6
    b = eng.discounted_pv_batch(eng.DiscountScaling.from_r(r), 200_000, RngStream(24))
    target = oracles.total_pv_mean_series(r)
    assert abs(b.pv_gain.mean() - target) <= 3 * b.pv_gain.std(ddof=1) / math.sqrt(b.pv_gain.size)


def test_batch_continuation_matches_single_row():
    s = eng.DiscountScaling(1.0, 6)
    acc = eng._RenewalSums(s, 1e-12, doubling=False)
    acc.games = 5  # forces the row continuation path
    (pv, disc), t_stop = acc.batch(RngStream(25).generator(), 1)
    (pv1, disc1), t1, _ = acc.continue_row(RngStream(25).generator(), 0)
    assert t_stop[0] == t1
    assert math.isclose(pv[0], pv1, rel_tol=1e-12)
    assert math.isclose(disc[0], disc1, rel_tol=1e-12)


def test_epsilon_validation():
    s = eng.DiscountScaling(1.0, 3)
    for eps in (0.0, 1.0, -1e-3):
        with pytest.raises(ValueError):
            eng.simulate_discounted_pv(s, RngStream(0), eps)


def test_U_via_scaling_scalar_and_finite():
    s = eng.DiscountScaling(1.0, 4)
    assert isinstance(eng.sample_U_via_scaling(s, RngStream(26)), float)
    assert np.all(np.isfinite(eng.sample_U_via_scaling(s, RngStream(26), 100)))


def test_U_via_scaling_approaches_levy():
    levy = eng.sample_U_levy(1.0, RngStream(27), 20_000)
    ks = [ks_two_sample(eng.sample_U_via_scaling(eng.DiscountScaling(1.0, n), RngStream(28, n),
                                                 5_000), levy).statistic
          for n in (3, 9)]
    assert ks[1] < ks[0]


# --- Levy representation ----------------------------------------------------

def test_band_rate_value():
    lam = eng.levy_band_rate(5, 1.0)
    assert lam == pytest.approx(2.0 ** -5 * math.log(2) / 2, rel=1e-15)
    assert -math.expm1(-lam) == pytest.approx(0.0107720, abs=5e-8)


def test_band_jump_frequency():
    counts, _ = eng.sample_band_jumps(5, 1.0, RngStream(30), 1_000_000)
    p = -math.expm1(-2.0 ** -5 * math.log(2) / 2)
    assert abs(np.mean(counts >= 1) - p) <= 4 * math.sqrt(p * (1 - p) / counts.size)


@pytest.mark.parametrize("l", [-6, -1, 0, 3, 7])
def test_band_jumps_in_range(l):
    counts, jumps = eng.sample_band_jumps(l, 1.3, RngStream(31, l + 10), 20_000)
    assert jumps.size == counts.sum() > 0
    assert np.all(jumps >= 2.0 ** l) and np.all(jumps < 2.0 ** (l + 1))


@pytest.mark.parametrize("l", [-3, -1, 0])
def test_centered_band_mean_zero(l):
    a = 1.0
    v = eng.sample_levy_band(l, a, RngStream(32, l + 10), 1_000_000)
    # Var = rate * E[(2**l X)**2], E X**2 = 3 / (2 ln 2)
    sd = math.sqrt(eng.levy_band_rate(l, a) * 4.0 ** l * 1.5 / math.log(2))
    assert abs(v.mean()) <= 3 * sd / math.sqrt(v.size)


def test_uncentered_band_mean():
    l, a = 2, 1.0
    v = eng.sample_levy_band(l, a, RngStream(33), 1_000_000)
    sd = math.sqrt(eng.levy_band_rate(l, a) * 4.0 ** l * 1.5 / math.log(2))
    assert abs(v.mean() - 1 / (2 * a)) <= 4 * sd / math.sqrt(v.size)


def test_gaussian_aggregation_matches_exact_bands():
    a = 1.5
    approx = eng.sample_U_levy(a, RngStream(34), 50_000)
    exact = eng.sample_U_levy(a, RngStream(35), 50_000, max_exact_rate=2.0 ** 10)
    assert not ks_two_sample(approx, exact).rejects


def test_levy_rejects_a():
    for a in (0.5, 2.0):
        with pytest.raises(ValueError):
            eng.sample_U_levy(a, RngStream(0), 10)


def test_levy_truncation():
    t = eng.LevyTruncation(-10, 12)
    assert list(t.bands) == list(range(-10, 13))
    assert t.max_tail_threshold == 2.0 ** 11
    eng.check_tail_threshold(2.0 ** 11, t)
    with pytest.raises(ValueError):
        eng.check_tail_threshold(2.0 ** 11 + 1, t)
    with pytest.raises(ValueError):
        eng.LevyTruncation(0, 5)


def test_levy_scalar_draw():
    assert isinstance(eng.sample_U_levy(1.0, RngStream(36)), float)
    assert isinstance(eng.sample_levy_band(0, 1.0, RngStream(36)), float)


# --- doubling strategy ------------------------------------------------------

def test_doubling_unlimited_nets_one():
    g = RngStream(40).generator()
    seen = {}
    for _ in range(5_000):
        out = eng.doubling_game_unlimited(g)
        assert out.net == 1
        assert out.total_spent == 2 ** out.t - 1
        assert out.gross == 2 ** out.t
        assert out.peak_stake == 2 ** (out.t - 1)
        seen[out.t] = out
    assert seen[1].total_spent == 1 and seen[1].gross == 2
    assert seen[5].total_spent == 31 and seen[5].gross == 32


def _doubling_pv_reference(t, r):
    stakes = sum(r ** (j - 1) * 2 ** (j - 1) * r for j in range(1, t + 1))
    return (2 * r) ** t - stakes


def test_doubling_pv_values():
    assert eng.doubling_game_discounted_pv(1, 0.6) == pytest.approx(0.6, abs=1e-15)
    for t in (1, 2, 5, 17):
        for r in (0.55, 0.6, 0.9):
            assert eng.doubling_game_discounted_pv(t, r) == pytest.approx(
                _doubling_pv_reference(t, r), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(t=hst.integers(1, 40), r=hst.floats(0.5001, 0.9999))
def test_doubling_pv_forms_agree(t, r):
    a = eng.doubling_game_discounted_pv(t, r)
    b = eng.doubling_game_discounted_pv_unreduced(t, r)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a), (2 * r) ** t) / (2 * r - 1)


def test_doubling_pv_rejects_r():
    for r in (0.5, 0.3, 1.0):
        with pytest.raises(ValueError):
            eng.doubling_game_discounted_pv(1, r)
    with pytest.raises(ValueError):
        eng.doubling_pv_batch(eng.DiscountScaling.from_r(0.4), 2, RngStream(0))


def test_doubling_single_game_fair():
    r = 0.6
    v = eng.doubling_game_discounted_pv(eng.sample_T(RngStream(41), 1_000_000), r)
    assert abs(v.mean()) <= 3 * v.std(ddof=1) / math.sqrt(v.size)


def test_doubling_trace_identity_and_oracle():
    s = eng.DiscountScaling(1.0, 7)
    tr = eng.simulate_doubling_discounted_pv(s, RngStream(42))
    times = [0, *map(int, tr.renewal_times)]
    ref = sum(s.r ** p * eng.doubling_game_discounted_pv(b - p, s.r) for p, b in zip(times, times[1:]))
    scale = max(1.0, abs(tr.value), tr.discount_sum)
    assert abs(tr.value - ref) <= 1e-10 * scale
    assert abs(tr.value - tr.value_identity) <= 1e-10 * scale
    assert tr.truncation_bound < 1e-9


def test_doubling_session_scaled_mean():
    s = eng.DiscountScaling(1.0, 8)
    b = eng.doubling_pv_batch(s, 2000, RngStream(43))
    assert abs(b.doubling_value.mean() / s.n_big - 0.5) <= 0.1


def test_doubling_value_below_gain_term():
    s = eng.DiscountScaling(1.0, 6)
    b = eng.doubling_pv_batch(s, 500, RngStream(44))
    k_gain = s.r / (2 * s.r - 1)
    assert np.all(b.doubling_value <= k_gain * b.discount_sum * (1 + 1e-12))
    assert np.all(b.pv_gain >= 0) and np.all(b.truncation_bound >= 0)
