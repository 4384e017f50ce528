"""
A fair game with finite capital
===============================

A player with capital ``2**c`` wins one unit per game until the first game
that lasts longer than ``c`` tosses, which costs the whole capital.  The
expected gain is zero, and the number of wins, rescaled by ``2**c``, is
approximately exponential.
"""

import numpy as np

from petersburg import closed_form as cf, engine as eng
from petersburg.rng import RngStream
from petersburg.statcheck import ks_one_sample, mean_with_ci

# The expected net gain is an exact dyadic computation.
print("E[V_c] for c = 1..52:", {cf.truncated_expected_gain(c) for c in range(1, 53)})

# %%
# Playing sessions game by game.  Each game reads ``c`` fair bits; a session
# ends at the first all-tails chunk.
c = 8
m = eng.play_truncated_sessions(c, 200_000, RngStream(1))
est = mean_with_ci(m - (2 ** c - 1))
print(f"c = {c}: mean net gain {est.mean:+.3f}, 99.9% CI [{est.ci_lo:.3f}, {est.ci_hi:.3f}]")

# %%
# The shortcut sampler draws the session length directly from its
# geometric law.  The rescaled count approaches Exp(1) as c grows.
for c in (4, 10, 20, 40):
    u = eng.sample_Mc_fast(c, RngStream(2, c), 100_000) * 2.0 ** -c
    ks = ks_one_sample(u, lambda x: -np.expm1(-x))
    print(f"c = {c:2d}: mean M_c 2^-c = {u.mean():.4f}, KS vs Exp(1) = {ks.statistic:.4f} "
          f"(critical {ks.critical_001:.4f})")

# %%
# Most sessions end in a loss of the whole capital minus a little; a few pay
# off hugely.  The probability of finishing ahead is about 1/e.
u = eng.sample_Mc_fast(20, RngStream(3), 1_000_000) * 2.0 ** -20
print(f"P(ahead) ~ {np.mean(u >= 1):.4f}   (1/e = {np.exp(-1):.4f})")
