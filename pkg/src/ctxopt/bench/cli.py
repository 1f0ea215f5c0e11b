"""Command line entry point: ``ctxopt run | gen | cv | bound``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys

from .. import estimator as est
from ..errors import (
    ConfigError,
    DegenerateWeightsError,
    InvalidInputError,
    NumericalError,
    SchemaError,
)
from .config import EXPERIMENTS, load_config
from .data import gen_newsvendor, gen_portfolio, gen_wind_synthetic, make_rng, trial_streams, wind_dataset
from .io import save_dataset

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def _generate(experiment, n, rng):
    if experiment == "portfolio":
        return gen_portfolio(n, rng)
    if experiment in ("newsvendor", "bounds"):
        return gen_newsvendor(n, rng)
    prices, prod = gen_wind_synthetic(n + 1, rng)
    return wind_dataset(prices, prod)


def cmd_run(args):
    from .experiments import run_experiment

    cfg = load_config(args.config)
    out = run_experiment(cfg, output=args.out)
    json.dump(out["summary"], sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_gen(args):
    if args.n < 2:
        raise ConfigError("--n must be at least 2")
    ds = _generate(args.experiment, args.n, make_rng(args.seed))
    save_dataset(ds, args.out)
    print(f"wrote {ds.n} rows to {args.out}")


def cmd_cv(args):
    from .experiments import cross_validate

    cfg = load_config(args.config)
    if cfg.experiment == "bounds":
        raise ConfigError("cross-validation is defined for portfolio, newsvendor and wind")
    rng = trial_streams(cfg.seed, 1)[0]
    data = _generate(cfg.experiment, cfg.n, rng)
    c_h, lam = cross_validate(cfg, data)
    print(json.dumps({"bandwidth_constant": c_h, "lambda": lam}))


_CALCULATORS = [
    ("generalization", est.generalization_bound, ()),
    ("finite_set", est.finite_set_bound, ()),
    ("continuous_set", est.continuous_set_bound, ()),
    ("stddev_deviation", est.stddev_deviation_bound, ()),
    ("suboptimality", est.suboptimality_bound, ()),
    ("continuous_suboptimality", est.continuous_suboptimality_bound, ()),
    ("highdim_subgaussian", est.highdim_bound, (False,)),
    ("highdim_bounded", est.highdim_bound, (True,)),
    ("dro_equivalence_rhs", est.dro_equivalence_rhs, ()),
]


def cmd_bound(args):
    try:
        with open(args.inputs, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read bound inputs: {exc}") from None
    names = {f.name for f in dataclasses.fields(est.BoundInputs)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"unknown bound inputs: {', '.join(unknown)}")
    try:
        inp = est.BoundInputs(**raw)
    except (InvalidInputError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    width = max(len(name) for name, _, _ in _CALCULATORS)
    print(f"{'bound':<{width}}  value")
    for name, fn, extra in _CALCULATORS:
        try:
            val = fn(inp, *extra)
            text = f"{val:.6g}" if math.isfinite(val) else str(val)
        except InvalidInputError as exc:
            text = f"n/a ({exc})"
        print(f"{name:<{width}}  {text}")


def build_parser():
    p = argparse.ArgumentParser(prog="ctxopt", description="Kernel-weighted and robust decisions with side information")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", default=None, help="results CSV (overrides the config's output)")
    r.set_defaults(func=cmd_run)
    g = sub.add_parser("gen", help="write a synthetic dataset as CSV")
    g.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    g.add_argument("--n", required=True, type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)
    c = sub.add_parser("cv", help="cross-validate bandwidth constant and lambda")
    c.add_argument("--config", required=True)
    c.set_defaults(func=cmd_cv)
    b = sub.add_parser("bound", help="evaluate the bound calculators")
    b.add_argument("--inputs", required=True)
    b.set_defaults(func=cmd_bound)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        args.func(args)
    except (ConfigError, SchemaError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, DegenerateWeightsError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
