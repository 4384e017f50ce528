"""Named experiments: each one samples, compares with the closed forms and
returns metric rows.

Every experiment draws from its own fixed stream ids, so running it alone or
as part of ``all`` gives the same numbers for the same seed.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from . import closed_form as cf
from . import engine as eng
from . import statcheck as st
from .rng import DEFAULT_BLOCK_SIZE, RngStream, parallel_draw

__all__ = ["Metric", "ConfigError", "Param", "EXPERIMENTS", "resolve_params", "run_experiment"]


class ConfigError(ValueError):
    """Invalid experiment parameter; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class Metric:
    """One report row.  ``passed`` is ``None`` for informational rows."""

    experiment: str
    metric: str
    value: float
    ci_lo: float | None = None
    ci_hi: float | None = None
    target: float | None = None
    tolerance: float | None = None
    passed: bool | None = None
    # wall-clock seconds; kept out of report bodies
    elapsed: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class Param:
    default: Any
    kind: str  # int | float | ints | floats
    check: Callable[[Any], bool] | None = None
    help: str = ""


def _to_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"not an integer: {text}")
    return int(value)


def _parse(kind: str, raw: Any) -> Any:
    if not isinstance(raw, str):
        return list(raw) if kind in ("ints", "floats") else raw
    if kind == "int":
        return _to_int(raw)
    if kind == "float":
        return float(raw)
    items = [s for s in raw.replace(" ", "").split(",") if s]
    if not items:
        raise ValueError("empty list")
    return [(_to_int if kind == "ints" else float)(s) for s in items]


class _Context:
    def __init__(self, name: str, seed: int, params: dict, workers: int, block_size: int):
        self.name = name
        self.seed = seed
        self.p = params
        self.workers = workers
        self.block_size = block_size
        self.metrics: list[Metric] = []

    def stream(self, sub: int) -> RngStream:
        return RngStream(self.seed, _STREAM_BASE[self.name] + sub)

    def draw(self, sampler, size: int, sub: int, block_size: int | None = None) -> np.ndarray:
        return parallel_draw(sampler, size, self.stream(sub),
                             block_size=block_size or self.block_size, workers=self.workers)

    @contextmanager
    def timed(self):
        """Attribute the wall-clock time of the block to the rows it adds."""
        start, first = time.perf_counter(), len(self.metrics)
        yield
        dt = time.perf_counter() - start
        for m in self.metrics[first:]:
            m.elapsed = dt

    def add(self, metric: str, value, **kw) -> Metric:
        row = Metric(self.name, metric, float(value), **kw)
        self.metrics.append(row)
        return row


def _within(value: float, target: float, tol: float) -> bool:
    return abs(value - target) <= tol


# ----------------------------------------------------------------------------


def _truncated_limit(ctx: _Context) -> None:
    p = ctx.p
    with ctx.timed():
        worst = max(abs(cf.truncated_expected_gain(c)) for c in range(1, 53))
        ctx.add("fairness_exact_max_abs", worst, target=0.0, tolerance=0.0, passed=worst == 0.0)
        c = p["fair_c"]
        m = ctx.draw(lambda k, g: eng.play_truncated_sessions(c, k, g), p["fair_samples"], 0)
        est = st.mean_with_ci(m - (2.0 ** c - 1.0), p["level"])
        ctx.add(f"mean_v_c{c}", est.mean, ci_lo=est.ci_lo, ci_hi=est.ci_hi, target=0.0,
                passed=est.contains(0.0))
    with ctx.timed():
        c = p["c"]
        m = ctx.draw(lambda k, g: eng.sample_Mc_fast(c, g, k), p["samples"], 1)
        ks = st.ks_one_sample(np.ldexp(m.astype(np.float64), -c), lambda u: -np.expm1(-u))
        ctx.add(f"ks_exp_limit_c{c}", ks.statistic, target=0.0, tolerance=ks.critical_001,
                passed=not ks.rejects)
    with ctx.timed():
        for i, c in enumerate(p["oracle_c"]):
            n = p["oracle_samples"]
            honest = ctx.draw(lambda k, g: eng.play_truncated_sessions(c, k, g), n, 10 + 2 * i)
            fast = ctx.draw(lambda k, g: eng.sample_Mc_fast(c, g, k), n, 11 + 2 * i)
            ks = st.ks_two_sample(np.ldexp(honest.astype(float), -c), np.ldexp(fast.astype(float), -c))
            ctx.add(f"ks_honest_vs_fast_c{c}", ks.statistic, target=0.0,
                    tolerance=ks.critical_001, passed=not ks.rejects)


def _discounted_fairness(ctx: _Context) -> None:
    p = ctx.p
    r = p["r"]
    with ctx.timed():
        t = ctx.draw(lambda k, g: eng.sample_T(g, k), p["samples"], 0)
        est = st.mean_with_ci(eng.discounted_single_game_value(t, r), p["level"])
        target = cf.mean_discounted_single(r)
        ctx.add("mean_single_game_pv", est.mean, ci_lo=est.mean - 3 * est.stderr,
                ci_hi=est.mean + 3 * est.stderr, target=target, tolerance=3 * est.stderr,
                passed=_within(est.mean, target, 3 * est.stderr))
    with ctx.timed():
        scaling = eng.DiscountScaling.from_r(r)
        eps = p["epsilon"]

        def sessions(k, g):
            b = eng.discounted_pv_batch(scaling, k, g, eps)
            return np.column_stack([b.pv_gain, b.truncation_bound])

        out = ctx.draw(sessions, p["sessions"], 1)
        pv, bound = out[:, 0], out[:, 1]
        est = st.mean_with_ci(pv, p["level"])
        target = cf.mean_discounted_total(r)
        ctx.add("mean_total_pv", est.mean, ci_lo=est.mean - 3 * est.stderr,
                ci_hi=est.mean + 3 * est.stderr, target=target, tolerance=3 * est.stderr,
                passed=_within(est.mean, target, 3 * est.stderr))
        tol = 0.01 * est.stderr
        ctx.add("max_truncation_bound", float(bound.max()), target=0.0, tolerance=tol,
                passed=float(bound.max()) <= tol)


def _doubling(ctx: _Context) -> None:
    p = ctx.p
    with ctx.timed():
        g = ctx.stream(0).generator()
        nets = [eng.doubling_game_unlimited(g).net for _ in range(p["unlimited_samples"])]
        ctx.add("unlimited_net_gain_min", min(nets), target=1.0, tolerance=0.0, passed=min(nets) == 1)
        ctx.add("unlimited_net_gain_max", max(nets), target=1.0, tolerance=0.0, passed=max(nets) == 1)
    with ctx.timed():
        r = p["r"]
        t = ctx.draw(lambda k, g: eng.sample_T(g, k), p["samples"], 1)
        est = st.mean_with_ci(eng.doubling_game_discounted_pv(t, r), p["level"])
        ctx.add("mean_single_game_pv", est.mean, ci_lo=est.mean - 3 * est.stderr,
                ci_hi=est.mean + 3 * est.stderr, target=0.0, tolerance=3 * est.stderr,
                passed=_within(est.mean, 0.0, 3 * est.stderr))
    with ctx.timed():
        scaling = eng.DiscountScaling(p["a"], p["n"])
        eps = p["epsilon"]

        def sessions(k, g):
            b = eng.doubling_pv_batch(scaling, k, g, eps)
            q = 2.0 * scaling.r - 1.0
            ident = scaling.r / q * b.discount_sum - scaling.one_minus_r / q * b.pv_gain
            return np.column_stack([b.doubling_value, ident])

        out = ctx.draw(sessions, p["sessions"], 2, block_size=1024)
        value, ident = out[:, 0], out[:, 1]
        scaled = st.mean_with_ci(value / scaling.n_big, p["level"])
        target = 1.0 / (2.0 * scaling.a)
        ctx.add("mean_scaled_session_pv", scaled.mean, ci_lo=scaled.ci_lo, ci_hi=scaled.ci_hi,
                target=target, tolerance=0.1, passed=_within(scaled.mean, target, 0.1))
        rel = float(np.max(np.abs(value - ident) / np.maximum(np.abs(value), 1e-300)))
        ctx.add("identity_max_rel_diff", rel, target=0.0, tolerance=1e-10, passed=rel <= 1e-10)


def _char_fn(ctx: _Context) -> None:
    p = ctx.p
    a = p["a"]
    trunc = eng.LevyTruncation(p["l_min"], p["l_max"])
    with ctx.timed():
        worst = 0.0
        for z in p["qss_z"]:
            gz = cf.levy_exponent_g(z)
            for m in range(1, p["qss_m_max"] + 1):
                resid = abs(2.0 ** m * cf.levy_exponent_g(z * 2.0 ** -m) - gz - 1j * z * m)
                worst = max(worst, resid / (1.0 + abs(gz)))
        ctx.add("quasi_semistable_max_residual", worst, target=0.0, tolerance=1e-8,
                passed=worst < 1e-8)
    with ctx.timed():
        u = ctx.draw(lambda k, g: eng.sample_U_levy(a, g, k, trunc), p["samples"], 0)
        for z in p["z"]:
            target = complex(np.exp(cf.levy_exponent_g(z) / (2.0 * a)))
            ecf = st.empirical_cf(u, z)
            for part, val, tgt, se in (("re", ecf.value.real, target.real, ecf.stderr_re),
                                       ("im", ecf.value.imag, target.imag, ecf.stderr_im)):
                ctx.add(f"ecf_{part}_z{z:g}", val, ci_lo=val - 3 * se, ci_hi=val + 3 * se,
                        target=tgt, tolerance=3 * se, passed=_within(val, tgt, 3 * se))


def _levy_batch(ctx: _Context, a: float, size: int, sub: int) -> st.SampleBatch:
    trunc = eng.LevyTruncation(ctx.p["l_min"], ctx.p["l_max"])
    u = ctx.draw(lambda k, g: eng.sample_U_levy(a, g, k, trunc), size, sub)
    return st.SampleBatch(u, {"generator": "sample_U_levy", "a": a, "l_min": trunc.l_min,
                              "l_max": trunc.l_max, "seed": ctx.seed})


def _u_tail(ctx: _Context) -> None:
    p = ctx.p
    a, x = p["a"], p["x"]
    with ctx.timed():
        batch = _levy_batch(ctx, a, p["samples"], 0)
        limit = (cf.TWO_LN2 - math.log(x)) / (2.0 * a)
        for m in p["m"]:
            thr = cf.DyadicThreshold.from_parts(m, x)
            est = st.tail_frequency(batch, thr.y + m / (2.0 * a), p["level"])
            scale = 2.0 ** m
            value = scale * est.p_hat
            ctx.add(f"scaled_tail_m{m}", value, ci_lo=scale * est.ci_lo, ci_hi=scale * est.ci_hi,
                    target=limit, tolerance=p["rel_tol"] * limit,
                    passed=_within(value, limit, p["rel_tol"] * limit))
            ctx.add(f"tail_frequency_m{m}", est.p_hat, ci_lo=est.ci_lo, ci_hi=est.ci_hi,
                    target=cf.tail_approx_U(thr, a))


def _u_cross_check(ctx: _Context) -> None:
    p = ctx.p
    a, eps = p["a"], p["epsilon"]
    with ctx.timed():
        levy = _levy_batch(ctx, a, p["samples"], 0).values
        stats = []
        for i, n in enumerate(p["n"]):
            scaling = eng.DiscountScaling(a, n)
            u = ctx.draw(lambda k, g: eng.sample_U_via_scaling(scaling, g, k, eps),
                         p["samples"], 1 + i, block_size=1024)
            ks = st.ks_two_sample(u, levy)
            stats.append(ks.statistic)
            last = i == len(p["n"]) - 1
            ctx.add(f"ks_scaling_vs_levy_n{n}", ks.statistic, target=0.0,
                    tolerance=p["max_ks"] if last else None,
                    passed=(ks.statistic < p["max_ks"]) if last else None)
            if last:
                diff = abs(float(np.median(u)) - float(np.median(levy)))
                ctx.add(f"median_diff_n{n}", diff, target=0.0, tolerance=p["median_tol"],
                        passed=diff <= p["median_tol"])
        mono = all(s2 <= s1 for s1, s2 in zip(stats, stats[1:]))
        ctx.add("ks_nonincreasing_in_n", float(mono), target=1.0, tolerance=0.0, passed=mono)


def _ruin(ctx: _Context) -> None:
    p = ctx.p
    with ctx.timed():
        one_minus_r = p["rate"] / p["periods"]
        ctx.add("illustration_one_minus_r", one_minus_r, target=2.0 ** -13,
                tolerance=0.01 * 2.0 ** -13, passed=_within(one_minus_r, 2.0 ** -13, 0.01 * 2.0 ** -13))
        lit = cf.ruin_probability(1.0 - one_minus_r)
        ctx.add("illustration_a", lit.a)
        ctx.add("illustration_discount_form", lit.discount_form)
        ctx.add("illustration_tail_form", lit.tail_form)

        scaling = eng.DiscountScaling(p["a"], p["n"])
        est = cf.ruin_probability(scaling)
        ctx.add("threshold", est.threshold)
        ctx.add("discount_form", est.discount_form)
        ctx.add("tail_form", est.tail_form)
        batch = _levy_batch(ctx, scaling.a, p["samples"], 0)
        freq = st.tail_frequency(batch, est.threshold, p["level"])
        ctx.add("mc_ruin_frequency", freq.p_hat, ci_lo=freq.ci_lo, ci_hi=freq.ci_hi)
        tol = p["rel_tol"]
        matches = {}
        for name, form in (("discount_form", est.discount_form), ("tail_form", est.tail_form)):
            matches[name] = _within(freq.p_hat, form, tol * form)
            ctx.add(f"matches_{name}", float(matches[name]), target=form, tolerance=tol * form)
        excluded = [not (freq.ci_lo <= f <= freq.ci_hi) for f in (est.discount_form, est.tail_form)]
        ctx.add("ci_excludes_a_form", float(any(excluded)), target=1.0, tolerance=0.0,
                passed=any(excluded))
        if all(matches.values()):
            verdict = "both"
        elif matches["tail_form"]:
            verdict = "tail_form"
        elif matches["discount_form"]:
            verdict = "discount_form"
        else:
            verdict = "neither"
        ctx.add(f"conclusion_{verdict}", 1.0)


def _premium(ctx: _Context) -> None:
    p = ctx.p
    r = 1.0 - p["one_minus_r"]
    with ctx.timed():
        scaling = eng.DiscountScaling.from_r(r)
        est = cf.premium_tail(p["consistency_v"] * scaling.n_big, r)
        ctx.add("form_discrepancy", est.form_discrepancy, target=0.0, tolerance=1e-3,
                passed=est.form_discrepancy <= 1e-3)
        ctx.add("discount_gap", est.discount_gap)
        for ratio in p["v_over_n"]:
            pt = cf.premium_tail(ratio * scaling.n_big, r)
            ref = cf.tail_approx_U(cf.DyadicThreshold.from_parts(pt.m, pt.x), scaling.a)
            ctx.add(f"premium_v{ratio:g}N", pt.probability, target=ref, tolerance=0.2 * ref,
                    passed=_within(pt.probability, ref, 0.2 * ref))


# ----------------------------------------------------------------------------

_pos = lambda v: v > 0  # noqa: E731
_prob = lambda v: 0 < v < 1  # noqa: E731

_COMMON_LEVY = {
    "l_min": Param(-40, "int", lambda v: v < 0),
    "l_max": Param(40, "int", lambda v: v > 0),
}

EXPERIMENTS: dict[str, tuple[Callable[[_Context], None], dict[str, Param]]] = {
    "truncated-limit": (_truncated_limit, {
        "samples": Param(100_000, "int", _pos, "fast-sampler sessions for the KS test"),
        "c": Param(20, "int", lambda v: 1 <= v <= 60),
        "fair_c": Param(8, "int", lambda v: 1 <= v <= 24),
        "fair_samples": Param(1_000_000, "int", lambda v: v >= 2),
        "oracle_c": Param([4, 8, 16], "ints", lambda v: all(1 <= c <= 24 for c in v)),
        "oracle_samples": Param(100_000, "int", _pos),
        "level": Param(0.999, "float", _prob),
    }),
    "discounted-fairness": (_discounted_fairness, {
        "samples": Param(1_000_000, "int", lambda v: v >= 2),
        "r": Param(0.6, "float", lambda v: math.exp(-2) < v < 1),
        "sessions": Param(100_000, "int", lambda v: v >= 2),
        "epsilon": Param(1e-12, "float", _prob),
        "level": Param(0.999, "float", _prob),
    }),
    "doubling": (_doubling, {
        "samples": Param(1_000_000, "int", lambda v: v >= 2),
        "r": Param(0.6, "float", lambda v: 0.5 < v < 1),
        "a": Param(1.0, "float", lambda v: 1 <= v < 2),
        "n": Param(10, "int", lambda v: 1 <= v <= 16),
        "sessions": Param(10_000, "int", lambda v: v >= 2),
        "unlimited_samples": Param(10_000, "int", _pos),
        "epsilon": Param(1e-12, "float", _prob),
        "level": Param(0.999, "float", _prob),
    }),
    "char-fn": (_char_fn, {
        "samples": Param(1_000_000, "int", lambda v: v >= 2),
        "a": Param(1.0, "float", lambda v: 1 <= v < 2),
        "z": Param([0.1, 0.5, 1.0], "floats", lambda v: all(math.isfinite(z) for z in v)),
        "qss_z": Param([0.25, 0.5, 1.0, 2.0], "floats", lambda v: all(z != 0 for z in v)),
        "qss_m_max": Param(8, "int", lambda v: 1 <= v <= 30),
        **_COMMON_LEVY,
    }),
    "u-tail": (_u_tail, {
        "samples": Param(10_000_000, "int", _pos),
        "a": Param(1.0, "float", lambda v: 1 <= v < 2),
        "x": Param(1.0, "float", lambda v: 1 <= v < 2),
        "m": Param([4, 6, 8], "ints", lambda v: all(0 <= m <= 30 for m in v)),
        "rel_tol": Param(0.15, "float", _pos),
        "level": Param(0.999, "float", _prob),
        **_COMMON_LEVY,
    }),
    "u-cross-check": (_u_cross_check, {
        "samples": Param(20_000, "int", lambda v: v >= 2),
        "a": Param(1.0, "float", lambda v: 1 <= v < 2),
        "n": Param([8, 10, 12], "ints", lambda v: all(1 <= n <= 16 for n in v)),
        "epsilon": Param(1e-12, "float", _prob),
        "max_ks": Param(0.03, "float", _pos),
        "median_tol": Param(0.15, "float", _pos),
        **_COMMON_LEVY,
    }),
    "ruin": (_ruin, {
        "samples": Param(10_000_000, "int", _pos),
        "rate": Param(0.0446, "float", _pos),
        "periods": Param(365, "int", _pos),
        "a": Param(1.0, "float", lambda v: 1 <= v < 2),
        "n": Param(13, "int", lambda v: 1 <= v <= 30),
        "rel_tol": Param(0.15, "float", _pos),
        "level": Param(0.999, "float", _prob),
        **_COMMON_LEVY,
    }),
    "premium": (_premium, {
        "one_minus_r": Param(2.0 ** -13, "float", lambda v: 0 < v < 1 - math.exp(-2)),
        "consistency_v": Param(10.0, "float", _pos),
        "v_over_n": Param([16.0, 32.0, 64.0, 128.0, 256.0], "floats", lambda v: all(x > 0 for x in v)),
    }),
}

_STREAM_BASE = {name: 1000 * (i + 1) for i, name in enumerate(EXPERIMENTS)}


def resolve_params(name: str, overrides: dict[str, Any], samples: int | None = None) -> dict[str, Any]:
    """Defaults of ``name`` updated with ``overrides``; raises ConfigError."""
    if name not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {name!r}")
    table = EXPERIMENTS[name][1]
    resolved = {k: (list(v.default) if isinstance(v.default, list) else v.default)
                for k, v in table.items()}
    items = dict(overrides)
    if samples is not None:
        items["samples"] = samples
    for key, raw in items.items():
        if key not in table:
            raise ConfigError(key, f"unknown parameter for experiment {name!r}")
        try:
            value = _parse(table[key].kind, raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"cannot parse {raw!r} as {table[key].kind}: {exc}") from None
        check = table[key].check
        if check is not None and not check(value):
            raise ConfigError(key, f"value {value!r} out of range")
        resolved[key] = value
    return resolved


def run_experiment(name: str, params: dict[str, Any], seed: int, *, workers: int = 1,
                   block_size: int = DEFAULT_BLOCK_SIZE) -> list[Metric]:
    """Run one experiment with already resolved ``params``."""
    ctx = _Context(name, seed, params, workers, block_size)
    EXPERIMENTS[name][0](ctx)
    return ctx.metrics
