"""
Discounting makes the value finite
==================================

A payoff received at time ``T`` is worth ``r**T`` today, so a single game is
worth ``(2r)**T``, with mean ``r / (1 - r)``.  Playing forever gives the
present value ``V(r)``; the doubling strategy becomes an exactly fair game.
"""

import numpy as np

from petersburg import closed_form as cf, engine as eng
from petersburg.rng import RngStream
from petersburg.statcheck import mean_with_ci

r = 0.6
t = eng.sample_T(RngStream(10), 1_000_000)
est = mean_with_ci(eng.discounted_single_game_value(t, r))
print(f"single game, r = {r}: mean PV {est.mean:.4f}  (closed form {cf.mean_discounted_single(r):.4f})")

# %%
# A stream of games, truncated once the remaining discount is below 1e-12;
# the expected size of the dropped tail is reported alongside.
s = eng.DiscountScaling.from_r(r)
batch = eng.discounted_pv_batch(s, 100_000, RngStream(11))
print(f"stream of games: mean V(r) {batch.pv_gain.mean():.4f}  "
      f"(closed form {cf.mean_discounted_total(r):.4f}), "
      f"largest dropped tail {batch.truncation_bound.max():.2e}")

# %%
# Doubling: stake 1, 2, 4, ... until heads.  Undiscounted, the net gain is
# always 1.  Discounted, the stakes paid early weigh more than the late
# payoff, and the game is fair.
g = RngStream(12).generator()
print("undiscounted doubling nets:", {eng.doubling_game_unlimited(g).net for _ in range(10_000)})
pv = eng.doubling_game_discounted_pv(t, r)
est = mean_with_ci(pv)
print(f"discounted doubling, r = {r}: mean PV {est.mean:+.4f} +- {est.stderr:.4f}")

# %%
# The whole discounted doubling stream, with r = exp(-a/N), has a typical
# value per unit N that approaches 1/2a as N grows.  It is occasionally
# negative: that is the ruin event.
for n in (6, 8, 10):
    s = eng.DiscountScaling(1.0, n)
    b = eng.doubling_pv_batch(s, 2_000, RngStream(13, n))
    print(f"n = {n:2d}: mean value / N = {b.doubling_value.mean() / s.n_big:.3f}, "
          f"P(value < 0) ~ {np.mean(b.doubling_value < 0):.4f}")
