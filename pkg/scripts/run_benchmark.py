"""Run a config over several seeds, plus a random-search baseline, and report.

    python scripts/run_benchmark.py scripts/configs/opamp.yaml --seeds 10 --out runs/opamp

Writes <out>/<strategy>/seed<k>/{log,trace,summary} and a report.csv /
convergence.csv per strategy (the same files ``nnbo report`` produces).
"""

from __future__ import annotations

import argparse
import os
import time

from nnbo.config import load_config
from nnbo.loop import run_campaign
from nnbo.runlog import build_report, format_report, read_log, write_outputs, write_report


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", default="runs/benchmark")
    ap.add_argument("--strategies", nargs="+", default=["neural", "random"])
    ap.add_argument("--override", action="append", default=[])
    args = ap.parse_args(argv)

    for strategy in args.strategies:
        logs = []
        for seed in range(args.seeds):
            cfg = load_config(args.config, args.override + [f"seed={seed}", f"strategy={strategy}"])
            out = os.path.join(args.out, strategy, f"seed{seed}")
            t0 = time.time()
            result = run_campaign(cfg.build_problem(), cfg.campaign())
            write_outputs(out, result)
            best = result.best()
            print(f"{strategy} seed {seed}: best {'none' if best is None else f'{best.objective:.4f}'} "
                  f"first feasible {result.evals_to_feasible()} ({time.time() - t0:.0f} s)", flush=True)
            logs.append(read_log(os.path.join(out, "log.csv"), label=f"seed{seed}"))
        report = build_report(logs)
        base = os.path.join(args.out, strategy)
        write_report(report, os.path.join(base, "report.csv"), os.path.join(base, "convergence.csv"))
        print(format_report(report))


if __name__ == "__main__":
    main()
