"""``nonstat-ope`` command line: gen-env, convert, run, forecast, report.

Exit codes: 0 success, 2 configuration error, 3 input-data error,
4 result-file error. ``NONSTAT_OPE_LOG`` (error, info, debug) sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from .core import ValidationError
from .environments import ParseError, parse_multilabel, supervised_to_bandit
from .forecast import DEFAULT_BASIS_DIM, fit_forecast
from .harness import (
    SUMMARY_COLUMNS,
    ConfigError,
    ExperimentConfig,
    ResultFileError,
    build_env,
    read_results_csv,
    run_experiment,
    summarize,
    write_outputs,
)


EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RESULTS = 0, 2, 3, 4


log = logging.getLogger("nsope")


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _load_json(path: str | None) -> dict:
    if not path:
        raise CliError(EXIT_CONFIG, "--config is required")
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise CliError(EXIT_CONFIG, f"config not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_CONFIG, f"cannot read config {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise CliError(EXIT_CONFIG, "config must be a JSON object")
    return obj


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True) + "\n")


def _env_spec(cfg: dict, seed: int | None) -> dict:
    spec = dict(cfg.get("env", cfg))
    if seed is not None:
        spec["seed"] = seed
    return spec


def cmd_gen_env(args) -> int:
    cfg = _load_json(args.config)
    spec = _env_spec(cfg, args.seed)
    try:
        setup = build_env(spec)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    out = Path(args.out)
    if setup.is_rl:
        mdp = setup.mdp
        dump = {
            "name": spec.get("kind"),
            "num_intervals": mdp.num_intervals,
            "horizon": mdp.horizon,
            "initial_dist": mdp.initial_dist.tolist(),
            "next_state": mdp.transition.tolist(),
            "target_policy": setup.target.to_json(),
            "reward_tables": [mdp.reward_at(k).tolist() for k in range(mdp.num_intervals + 1)],
        }
    else:
        dump = setup.env.dump()
    _write_json(out / "env.json", dump)
    print(f"wrote {out / 'env.json'}: {spec.get('kind')} with "
          f"{len(dump['reward_tables'])} reward tables")
    return EXIT_OK


def cmd_convert(args) -> int:
    if not args.input:
        raise CliError(EXIT_CONFIG, "--input is required")
    opts = _load_json(args.config) if args.config else {}
    num_actions = args.num_actions or opts.get("num_actions")
    if not num_actions:
        raise CliError(EXIT_CONFIG, "--num-actions is required")
    try:
        with open(args.input) as fh:
            records = parse_multilabel(fh)
    except FileNotFoundError:
        raise CliError(EXIT_DATA, f"input not found: {args.input}") from None
    except ParseError as exc:
        raise CliError(EXIT_DATA, f"{args.input}: {exc}") from None
    try:
        pop, target, rewards = supervised_to_bandit(
            records,
            int(num_actions),
            target_subset_frac=float(opts.get("target_subset_frac", 0.1)),
            seed=args.seed if args.seed is not None else int(opts.get("seed", 0)),
            feature_dim=opts.get("feature_dim"),
            temperature=float(opts.get("temperature", 1.0)),
        )
    except ValidationError as exc:
        raise CliError(EXIT_DATA, str(exc)) from None
    out = Path(args.out)
    _write_json(out / "population.json", pop.to_json())
    _write_json(out / "target_policy.json", target.to_json())
    _write_json(out / "base_rewards.json", rewards.tolist())
    print(f"converted {len(records)} records into {pop.num_contexts} contexts x "
          f"{pop.num_actions} actions")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_json(args.config)
    if args.seed is not None:
        cfg.setdefault("experiment", {})["seed"] = args.seed
    if args.runs is not None:
        cfg.setdefault("experiment", {})["num_runs"] = args.runs
    try:
        config = ExperimentConfig.from_json(cfg)
        setup = build_env(config.env)
        rows = run_experiment(config, workers=args.workers or os.cpu_count() or 1, setup=setup)
    except ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    summary = write_outputs(args.out, rows, config)
    _print_summary(summary)
    return EXIT_OK


def _read_results(path: str):
    if not path:
        raise CliError(EXIT_CONFIG, "--input is required")
    if not Path(path).is_file():
        raise CliError(EXIT_CONFIG, f"results file not found: {path}")
    try:
        return read_results_csv(path)
    except (ResultFileError, UnicodeDecodeError) as exc:
        raise CliError(EXIT_RESULTS, f"{path}: {exc}") from None


def cmd_forecast(args) -> int:
    rows = _read_results(args.input)
    rows = [r for r in rows if r.run == args.run and math.isfinite(r.estimate)
            and (args.estimator is None or r.estimator == args.estimator)]
    print("estimator,t,forecast")
    for est in dict.fromkeys(r.estimator for r in rows):
        series = sorted((r.interval, r.estimate) for r in rows if r.estimator == est)
        last = series[-1][0]
        normalizer = args.normalizer or float(last + args.horizon)
        model = fit_forecast(series, args.dim, normalizer)
        t = last + args.horizon
        print(f"{est},{t},{model.predict(t)!r}")
    return EXIT_OK


def _print_summary(summary) -> None:
    width = max([len("estimator")] + [len(s.estimator) for s in summary])
    print(f"{'estimator':<{width}}  " + "  ".join(f"{c:>13}" for c in SUMMARY_COLUMNS[1:]))
    for s in summary:
        vals = "  ".join(f"{getattr(s, c):>13.6g}" for c in SUMMARY_COLUMNS[1:])
        print(f"{s.estimator:<{width}}  {vals}")


def cmd_report(args) -> int:
    _print_summary(summarize(_read_results(args.input)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonstat-ope", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", metavar="PATH")
        if out:
            p.add_argument("--out", metavar="DIR", default=".")
        p.add_argument("--seed", type=int, metavar="U64")

    p = sub.add_parser("gen-env", help="write per-interval reward tables of an environment")
    common(p)
    p.set_defaults(func=cmd_gen_env)

    p = sub.add_parser("convert", help="turn a multilabel file into a bandit population")
    common(p)
    p.add_argument("--input", metavar="PATH")
    p.add_argument("--num-actions", type=int)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("run", help="run an experiment and write results and summary")
    common(p)
    p.add_argument("--workers", type=int, metavar="N")
    p.add_argument("--runs", type=int, metavar="N")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("forecast", help="forecast the next value from a results file")
    p.add_argument("--input", metavar="PATH")
    p.add_argument("--estimator")
    p.add_argument("--run", type=int, default=0)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--dim", type=int, default=DEFAULT_BASIS_DIM)
    p.add_argument("--normalizer", type=float)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("report", help="print the summary table of a results file")
    p.add_argument("--input", metavar="PATH")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("NONSTAT_OPE_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
