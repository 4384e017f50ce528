"""Command-line front end.

    petersburg --experiment truncated-limit --seed 7 --param c=20 --out report.csv

Precedence of settings: command-line flags, then ``--config`` file values,
then built-in defaults.  The config file is flat ``key = value`` text with
``#`` comments; keys other than the run settings below are experiment
parameters (for ``all`` write them as ``<experiment>.<key>``).

Report bodies contain no timestamps, so equal settings give byte-identical
reports; wall-clock times go to ``<out>.log`` (or stderr without ``--out``).

``--calc NAME`` evaluates one closed-form formula instead, with its inputs
given as ``--param key=value`` (``--list`` shows the names and inputs).

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from . import closed_form as cf
from . import engine as eng
from .experiments import EXPERIMENTS, ConfigError, Metric, resolve_params, run_experiment
from .rng import BIT_GENERATOR, DEFAULT_BLOCK_SIZE

__all__ = ["ExperimentConfig", "RunResult", "run", "main", "parse_config_file", "calculate",
           "CALCULATORS", "CSV_COLUMNS"]

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
DEFAULT_SEED = 20070801
DEFAULT_WORKERS = 1
CSV_COLUMNS = ("experiment", "metric", "value", "ci_lo", "ci_hi", "target", "tolerance", "pass")
_RUN_KEYS = {"experiment", "seed", "samples", "workers", "out", "format"}
ALL = "all"


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = DEFAULT_SEED
    samples: int | None = None
    params: dict[str, Any] = field(default_factory=dict)
    output_format: str = "json"
    output_path: Path | None = None
    workers: int = DEFAULT_WORKERS

    def names(self) -> list[str]:
        return list(EXPERIMENTS) if self.experiment == ALL else [self.experiment]

    def resolve(self) -> dict[str, dict[str, Any]]:
        """Validated parameters for every experiment that will run."""
        if self.experiment != ALL and self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"unknown experiment {self.experiment!r}; "
                              f"choose from {', '.join([*EXPERIMENTS, ALL])}")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise ConfigError("seed", "must be a 64-bit unsigned integer")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("workers", "must be a positive integer")
        if self.output_format not in ("csv", "json"):
            raise ConfigError("format", "must be csv or json")
        if self.samples is not None and self.samples < 1:
            raise ConfigError("samples", "must be positive")
        if self.experiment == ALL:
            if self.samples is not None:
                raise ConfigError("samples", "not allowed with 'all'; use <experiment>.samples")
            per: dict[str, dict[str, Any]] = {name: {} for name in EXPERIMENTS}
            for key, value in self.params.items():
                name, _, sub = key.partition(".")
                if not sub or name not in per:
                    raise ConfigError(key, "with 'all' parameters must be <experiment>.<key>")
                per[name][sub] = value
            return {name: resolve_params(name, per[name]) for name in EXPERIMENTS}
        return {self.experiment: resolve_params(self.experiment, self.params, self.samples)}


@dataclass
class RunResult:
    exit_code: int
    metrics: list[Metric]
    body: str
    log: list[str]
    elapsed: dict[str, float]


# ----------------------------------------------------------------------------
# Report formatting


def _num(v) -> str:
    if v is None:
        return ""
    return format(float(v), ".17g")


def _pass(v) -> str:
    return "" if v is None else ("true" if v else "false")


def _header(cfg: ExperimentConfig, resolved: dict[str, dict[str, Any]]) -> dict[str, Any]:
    return {
        "version": __version__,
        "bit_generator": BIT_GENERATOR,
        "block_size": DEFAULT_BLOCK_SIZE,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "params": resolved,
    }


def format_json(cfg, resolved, metrics: Sequence[Metric]) -> str:
    rows = [
        {
            "experiment": m.experiment,
            "metric": m.metric,
            "value": m.value,
            "ci_lo": m.ci_lo,
            "ci_hi": m.ci_hi,
            "target": m.target,
            "tolerance": m.tolerance,
            "pass": m.passed,
        }
        for m in metrics
    ]
    doc = {"config": _header(cfg, resolved), "metrics": rows}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def format_csv(cfg, resolved, metrics: Sequence[Metric]) -> str:
    buf = io.StringIO()
    head = _header(cfg, resolved)
    params = head.pop("params")
    for key, value in head.items():
        buf.write(f"# {key} = {value}\n")
    for name, values in params.items():
        for key, value in values.items():
            text = ",".join(map(str, value)) if isinstance(value, list) else value
            buf.write(f"# {name}.{key} = {text}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for m in metrics:
        writer.writerow([m.experiment, m.metric, _num(m.value), _num(m.ci_lo), _num(m.ci_hi),
                         _num(m.target), _num(m.tolerance), _pass(m.passed)])
    return buf.getvalue()


# ----------------------------------------------------------------------------


def run(cfg: ExperimentConfig) -> RunResult:
    """Validate, run and report.  Raises ConfigError before any sampling."""
    resolved = cfg.resolve()
    metrics: list[Metric] = []
    log: list[str] = []
    elapsed: dict[str, float] = {}
    for name in cfg.names():
        start = time.perf_counter()
        rows = run_experiment(name, resolved[name], cfg.seed, workers=cfg.workers)
        elapsed[name] = time.perf_counter() - start
        metrics.extend(rows)
        log.append(f"{name}: {elapsed[name]:.3f} s")
        for m in rows:
            status = {True: "pass", False: "FAIL", None: "info"}[m.passed]
            log.append(f"  {status:4s} {m.metric} = {m.value:.6g} ({m.elapsed:.3f} s)")
            if m.metric.startswith("conclusion_"):
                log.append(f"  conclusion: Monte Carlo ruin frequency matches "
                           f"{m.metric[len('conclusion_'):]}")
    fmt = format_csv if cfg.output_format == "csv" else format_json
    body = fmt(cfg, resolved, metrics)
    failed = any(m.passed is False for m in metrics)
    return RunResult(EXIT_FAIL if failed else EXIT_PASS, metrics, body, log, elapsed)


def parse_config_file(path: Path) -> dict[str, str]:
    """Read flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{path}:{lineno}", f"expected 'key = value', got {line!r}")
        out[key.strip()] = value.strip()
    return out


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="petersburg",
        description="Run Petersburg-game experiments and write CSV/JSON reports.",
    )
    ap.add_argument("--experiment", choices=[*EXPERIMENTS, ALL])
    ap.add_argument("--seed", type=int)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--workers", type=int)
    ap.add_argument("--out", type=Path)
    ap.add_argument("--format", choices=["csv", "json"])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--calc", metavar="NAME", help="evaluate a closed-form calculator and print JSON")
    ap.add_argument("--list", action="store_true", help="list experiments, defaults and calculators")
    return ap


def _to_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        pass
    try:
        value = float(text)
        if not value.is_integer():
            raise ValueError
        return int(value)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {text!r}") from None


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    settings: dict[str, Any] = {}
    params: dict[str, Any] = {}
    if args.config is not None:
        for key, value in parse_config_file(args.config).items():
            (settings if key in _RUN_KEYS else params)[key] = value
    for item in args.param:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(item, "expected --param key=value")
        params[key.strip()] = value.strip()
    for key in _RUN_KEYS:
        flag = getattr(args, key)
        if flag is not None:
            settings[key] = flag
    if "experiment" not in settings:
        raise ConfigError("experiment", "required (flag or config file)")
    fmt = settings.get("format")
    out = settings.get("out")
    if fmt is None:
        fmt = "csv" if out is not None and str(out).endswith(".csv") else "json"
    return ExperimentConfig(
        experiment=str(settings["experiment"]),
        seed=_to_int("seed", str(settings.get("seed", DEFAULT_SEED))),
        samples=None if settings.get("samples") is None else _to_int("samples", str(settings["samples"])),
        params=params,
        output_format=str(fmt),
        output_path=None if out is None else Path(out),
        workers=_to_int("workers", str(settings.get("workers", DEFAULT_WORKERS))),
    )


# ----------------------------------------------------------------------------
# Closed-form calculators


def _complex(z: complex) -> dict[str, float]:
    return {"re": z.real, "im": z.imag}


def _ruin_calc(p):
    if "r" in p:
        est = cf.ruin_probability(p["r"])
    else:
        est = cf.ruin_probability(eng.DiscountScaling(p["a"], int(p["n"])))
    return {**vars(est), "ratio": est.ratio}


def _premium_calc(p):
    est = cf.premium_tail(p["v"], p["r"])
    return {**vars(est), "form_discrepancy": est.form_discrepancy}


def _scaling_calc(p):
    s = eng.DiscountScaling.from_r(p["r"]) if "r" in p else eng.DiscountScaling(p["a"], int(p["n"]))
    return {"a": s.a, "n": s.n, "N": s.n_big, "r": s.r, "one_minus_r": s.one_minus_r, "d": s.d}


#: name -> (required keys, optional keys, function of the float params)
CALCULATORS: dict[str, tuple[tuple[str, ...], tuple[str, ...], Callable[[dict], Any]]] = {
    "truncated-expected-gain": (("c",), (), lambda p: cf.truncated_expected_gain(int(p["c"]))),
    "exp-limit-sf": (("u",), (), lambda p: cf.exp_limit_sf(p["u"])),
    "mean-discounted-single": (("r",), (), lambda p: cf.mean_discounted_single(p["r"])),
    "mean-discounted-total": (("r",), (), lambda p: cf.mean_discounted_total(p["r"])),
    "doubling-pv": (("t", "r"), (), lambda p: float(eng.doubling_game_discounted_pv(int(p["t"]), p["r"]))),
    "levy-exponent-l": (("z",), (), lambda p: _complex(cf.levy_exponent_l(p["z"]))),
    "levy-exponent-g": (("z",), (), lambda p: _complex(cf.levy_exponent_g(p["z"]))),
    "levy-tail": (("y", "a"), (), lambda p: cf.levy_tail_Lbar(p["y"], p["a"])),
    "tail-approx": (("m", "x", "a"), (),
                    lambda p: cf.tail_approx_U(cf.DyadicThreshold.from_parts(int(p["m"]), p["x"]), p["a"])),
    "premium": (("v", "r"), (), _premium_calc),
    "ruin": ((), ("r", "a", "n"), _ruin_calc),
    "scaling": ((), ("r", "a", "n"), _scaling_calc),
}


_INTEGER_INPUTS = {"c", "t", "m", "n"}


def calculate(name: str, params: dict[str, str]) -> dict[str, Any]:
    """Evaluate one closed-form calculator; raises ConfigError on bad input."""
    if name not in CALCULATORS:
        raise ConfigError("calc", f"unknown calculator {name!r}; choose from {', '.join(CALCULATORS)}")
    required, optional, fn = CALCULATORS[name]
    values: dict[str, float] = {}
    for key, raw in params.items():
        if key not in required + optional:
            raise ConfigError(key, f"not an input of calculator {name!r}")
        try:
            values[key] = float(raw)
        except ValueError:
            raise ConfigError(key, f"expected a number, got {raw!r}") from None
        if key in _INTEGER_INPUTS and not values[key].is_integer():
            raise ConfigError(key, f"expected an integer, got {raw!r}")
    missing = [k for k in required if k not in values]
    if optional and not ("r" in values or {"a", "n"} <= values.keys()):
        missing.append("r or a,n")
    if missing:
        raise ConfigError(missing[0], f"required by calculator {name!r}")
    try:
        result = fn(values)
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError(name, str(exc)) from None
    return {"calculator": name, "inputs": values, "result": result}


def _list_experiments() -> str:
    lines = []
    for name, (_, table) in EXPERIMENTS.items():
        lines.append(name)
        for key, param in table.items():
            lines.append(f"    {key} = {param.default}")
    lines.append("calculators (--calc NAME --param key=value)")
    for name, (required, optional, _) in CALCULATORS.items():
        inputs = ", ".join(required) if required else "r | a, n"
        lines.append(f"    {name}: {inputs}")
    return "\n".join(lines) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.list:
        sys.stdout.write(_list_experiments())
        return EXIT_PASS
    if args.calc is not None:
        return _run_calc(args)
    try:
        cfg = config_from_args(args)
        result = run(cfg)
    except ConfigError as exc:
        print(f"petersburg: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"petersburg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        if cfg.output_path is None:
            sys.stdout.write(result.body)
            print("\n".join(result.log), file=sys.stderr)
        else:
            cfg.output_path.write_text(result.body)
            log_path = cfg.output_path.with_name(cfg.output_path.name + ".log")
            log_path.write_text("\n".join(result.log) + "\n")
    except OSError as exc:
        print(f"petersburg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return result.exit_code


def _run_calc(args: argparse.Namespace) -> int:
    params = {}
    try:
        for item in args.param:
            key, sep, value = item.partition("=")
            if not sep or not key.strip():
                raise ConfigError(item, "expected --param key=value")
            params[key.strip()] = value.strip()
        body = json.dumps(calculate(args.calc, params), indent=2) + "\n"
    except ConfigError as exc:
        print(f"petersburg: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.out is None:
            sys.stdout.write(body)
        else:
            args.out.write_text(body)
    except OSError as exc:
        print(f"petersburg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_PASS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
