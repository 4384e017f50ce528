"""
Premiums and ruin
=================

An insurer that sells the discounted game at premium ``v`` wants
``P(V(r) > v)``.  A bank running the discounted doubling stream cares about
ruin, a negative present value.  Both come from the tail of the limit law.
"""

from petersburg import closed_form as cf, engine as eng
from petersburg.rng import RngStream
from petersburg.statcheck import tail_frequency

# A yearly interest rate of 4.46% with daily play gives 1 - r close to 2**-13.
one_minus_r = 0.0446 / 365
s = eng.DiscountScaling.from_r(1 - one_minus_r)
print(f"1 - r = {one_minus_r:.4g}, a = {s.a:.4f}, n = {s.n}")

# %%
# Premium tails for multiples of N.
for k in (2, 4, 6, 8):
    est = cf.premium_tail(2.0 ** k * s.n_big, 1 - one_minus_r)
    print(f"v = 2^{k} N: P(V > v) ~ {est.probability:.3e}  (forms differ by {est.form_discrepancy:.1e})")

# %%
# Ruin.  Two approximations circulate; they differ by a factor 2a.  A Monte
# Carlo estimate of P(U > N / 2a**2) tells them apart.
scaling = eng.DiscountScaling(1.0, 13)
est = cf.ruin_probability(scaling)
u = eng.sample_U_levy(1.0, RngStream(30), 2_000_000)
freq = tail_frequency(u, est.threshold)
print(f"threshold {est.threshold:g}: discount form {est.discount_form:.3e}, "
      f"tail form {est.tail_form:.3e}")
print(f"Monte Carlo {freq.p_hat:.3e}, 99.9% CI [{freq.ci_lo:.3e}, {freq.ci_hi:.3e}]")
