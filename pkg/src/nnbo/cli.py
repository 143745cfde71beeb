"""Command-line entry point: ``nnbo run | report | bench-scaling | list-builtins``.

Exit status: 0 success, 2 invalid config or incompatible logs, 3 evaluator
cannot run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

from .benchmarks import BUILTIN_NAMES, get_problem
from .config import ConfigError, RunConfig, load_config
from .evaluators import EvaluatorFatal
from .loop import Campaign
from .neural import NeuralConfig
from .runlog import LogFormatError, LogWriter, build_report, format_report, read_log, write_outputs, write_report
from .scaling import bench_scaling, doubling_ratios
from .space import denormalize

EXIT_OK, EXIT_CONFIG, EXIT_EVALUATOR = 0, 2, 3

log = logging.getLogger("nnbo")


def _load(args) -> RunConfig:
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides)


def cmd_run(args) -> int:
    try:
        cfg = _load(args)
        campaign_cfg = cfg.campaign()
        problem = cfg.build_problem()
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg.output
    if not out:
        print("config error: output: no output directory (use --out or 'output:')", file=sys.stderr)
        return EXIT_CONFIG
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(cfg.dumps())

    campaign = Campaign(problem, campaign_cfg)
    writer = LogWriter(os.path.join(out, "log.csv"), campaign.result)
    campaign.on_entry = writer.write
    try:
        result = campaign.run()
    except EvaluatorFatal as exc:
        print(f"evaluator error: {exc}", file=sys.stderr)
        return EXIT_EVALUATOR
    finally:
        writer.close()
    write_outputs(out, result, log_already_written=True)
    best = result.best()
    print(f"{len(result.log)} evaluations, best {cfg.objective.metric} = "
          f"{'none' if best is None else f'{best.objective:.6g}'}; outputs in {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        logs = [read_log(p) for p in args.logs]
        report = build_report(logs)
    except (LogFormatError, OSError, ValueError) as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or "report.csv"
    conv = args.convergence or os.path.join(os.path.dirname(out) or ".", "convergence.csv")
    write_report(report, out, conv)
    print(format_report(report))
    return EXIT_OK


def cmd_bench_scaling(args) -> int:
    name, model = "opamp_10d", NeuralConfig()
    if args.config:
        try:
            cfg = _load(args)
        except (ConfigError, OSError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if cfg.evaluator.kind != "builtin":
            print("config error: evaluator.kind: bench-scaling needs a builtin evaluator", file=sys.stderr)
            return EXIT_CONFIG
        name = cfg.evaluator.name
        m = cfg.model
        model = NeuralConfig(hidden1=m["hidden1"], hidden2=m["hidden2"], n_features=m["n_features"])
    problem = get_problem(name)
    metric = problem.objective.metric

    def target(u):
        return problem.evaluate(denormalize(problem.space, u))[metric]

    timings = bench_scaling(args.sizes, target, problem.space.dim, model, include_gp=not args.no_gp)
    out = args.out or "timing.csv"
    d = os.path.dirname(out)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "n", "seconds"])
        for t in timings:
            w.writerow([t.model, t.n, repr(t.seconds)])
    for t in timings:
        print(f"{t.model:7s} N={t.n:5d}  {t.seconds * 1e3:9.3f} ms")
    for model_name in ("neural", "gp"):
        for n, r in doubling_ratios(timings, model_name).items():
            print(f"{model_name:7s} t({n})/t({n // 2}) = {r:.2f}")
    return EXIT_OK


def cmd_list_builtins(args) -> int:
    for name in BUILTIN_NAMES:
        p = get_problem(name)
        cons = ", ".join(f"{c.metric} {c.op} {c.bound:g}" for c in p.constraints) or "none"
        print(f"{name}: d={p.space.dim}, {p.objective.direction} {p.objective.metric}, constraints: {cons}")
        if p.description:
            print(f"    {p.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nnbo", description="Constrained Bayesian optimization with neural-feature GPs.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="YAML campaign config")
        p.add_argument("--override", action="append", metavar="K=V", help="override a config key (repeatable)")
        p.add_argument("--seed", type=int, help="shorthand for --override seed=N")

    p = sub.add_parser("run", help="run one campaign")
    common(p, True)
    p.add_argument("--out", help="output directory (default: config 'output')")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize campaign logs")
    p.add_argument("logs", nargs="+", help="log.csv files")
    p.add_argument("--out", help="report CSV path (default report.csv)")
    p.add_argument("--convergence", help="convergence CSV path (default next to --out)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bench-scaling", help="time likelihood+gradient versus N")
    common(p, False)
    p.add_argument("--sizes", type=int, nargs="+", default=[200, 400, 800])
    p.add_argument("--out", help="timing CSV path (default timing.csv)")
    p.add_argument("--no-gp", action="store_true", help="skip the classic GP baseline")
    p.set_defaults(func=cmd_bench_scaling)

    p = sub.add_parser("list-builtins", help="list builtin problems")
    p.set_defaults(func=cmd_list_builtins)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
