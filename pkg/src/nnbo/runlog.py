"""Campaign output files and the multi-run report.

log.csv (one row per evaluation, in order)
    evaluation, iteration, x:<variable>..., m:<metric>..., objective,
    direction, feasible, failed, failure_reason, wei, timestamp
    ``objective`` is in the user's direction; metric cells are empty for
    failed rows; ``wei`` is empty for designs not chosen by the acquisition.
trace.csv
    evaluation, iteration, best_so_far, wei   (best_so_far empty until feasible)
summary.txt
    ``key: value`` lines: problem, objective, direction, evaluations,
    feasible_evaluations, failed_evaluations, first_feasible, best_objective,
    best_design, termination
report.csv
    label, objective, m:<metric>..., first_feasible  then rows
    mean, median, best, worst, avg_sim_to_feasible, success
convergence.csv
    evaluation, <one best-so-far column per log>
"""

from __future__ import annotations

import csv
import math
import os
import statistics
from dataclasses import dataclass
from typing import Sequence

from .loop import CampaignResult


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def log_header(result: CampaignResult) -> list[str]:
    return (
        ["evaluation", "iteration"]
        + [f"x:{n}" for n in result.variable_names]
        + [f"m:{m}" for m in result.metric_names]
        + ["objective", "direction", "feasible", "failed", "failure_reason", "wei", "timestamp"]
    )


class LogWriter:
    """Appends rows as evaluations complete, so a crash leaves a valid prefix."""

    def __init__(self, path, result: CampaignResult):
        self.result = result
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(log_header(result))
        self._fh.flush()

    def write(self, e) -> None:
        r = self.result
        metrics = e.metrics or {}
        self._w.writerow(
            [e.evaluation, e.iteration]
            + [_fmt(float(v)) for v in e.design]
            + [_fmt(metrics.get(m)) for m in r.metric_names]
            + [_fmt(e.objective), r.objective.direction, _fmt(e.feasible), _fmt(e.failed),
               e.failure_reason, _fmt(e.wei), repr(e.timestamp)]
        )
        self._fh.flush()

    def close(self):
        self._fh.close()


def write_trace(path, result: CampaignResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["evaluation", "iteration", "best_so_far", "wei"])
        for e, b in zip(result.log, result.best_trace):
            w.writerow([e.evaluation, e.iteration, _fmt(b), _fmt(e.wei)])


def write_summary(path, result: CampaignResult) -> None:
    best = result.best()
    lines = {
        "problem": result.problem,
        "objective": result.objective.metric,
        "direction": result.objective.direction,
        "evaluations": len(result.log),
        "feasible_evaluations": sum(e.feasible for e in result.log),
        "failed_evaluations": sum(e.failed for e in result.log),
        "first_feasible": _fmt(result.evals_to_feasible()) or "none",
        "best_objective": "none" if best is None else repr(best.objective),
        "best_design": "none" if best is None else " ".join(
            f"{n}={float(v)!r}" for n, v in zip(result.variable_names, best.design)
        ),
        "termination": result.termination,
    }
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in lines.items():
            fh.write(f"{k}: {v}\n")


def write_outputs(out_dir, result: CampaignResult, log_already_written: bool = False) -> None:
    os.makedirs(out_dir, exist_ok=True)
    if not log_already_written:
        w = LogWriter(os.path.join(out_dir, "log.csv"), result)
        for e in result.log:
            w.write(e)
        w.close()
    write_trace(os.path.join(out_dir, "trace.csv"), result)
    write_summary(os.path.join(out_dir, "summary.txt"), result)


# -- reading and reporting ----------------------------------------------------

class LogFormatError(ValueError):
    pass


@dataclass
class RunLog:
    label: str
    variables: tuple[str, ...]
    metrics: tuple[str, ...]
    direction: str
    rows: list[dict]

    def _better(self, a: float, b: float) -> bool:
        return a < b if self.direction == "min" else a > b

    def best_trace(self) -> list[float | None]:
        out, best = [], None
        for r in self.rows:
            if r["feasible"] and (best is None or self._better(r["objective"], best)):
                best = r["objective"]
            out.append(best)
        return out

    def best_row(self) -> dict | None:
        best = None
        for r in self.rows:
            if r["feasible"] and (best is None or self._better(r["objective"], best["objective"])):
                best = r
        return best

    def first_feasible(self) -> int | None:
        for r in self.rows:
            if r["feasible"]:
                return r["evaluation"]
        return None


def _num(s: str) -> float:
    return math.nan if s == "" else float(s)


def read_log(path, label: str | None = None) -> RunLog:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LogFormatError(f"{path}: empty log") from None
        fixed = ["objective", "direction", "feasible", "failed", "failure_reason", "wei", "timestamp"]
        if header[:2] != ["evaluation", "iteration"] or header[-len(fixed):] != fixed:
            raise LogFormatError(f"{path}: not a campaign log")
        variables = tuple(h[2:] for h in header if h.startswith("x:"))
        metrics = tuple(h[2:] for h in header if h.startswith("m:"))
        rows, direction = [], None
        for raw in reader:
            if len(raw) != len(header):
                raise LogFormatError(f"{path}: row with {len(raw)} cells, expected {len(header)}")
            d = dict(zip(header, raw))
            direction = direction or d["direction"]
            if d["direction"] != direction:
                raise LogFormatError(f"{path}: mixed objective directions")
            rows.append({
                "evaluation": int(d["evaluation"]),
                "objective": _num(d["objective"]),
                "feasible": d["feasible"] == "1",
                "metrics": {m: _num(d[f"m:{m}"]) for m in metrics},
            })
    return RunLog(label or str(path), variables, metrics, direction or "min", rows)


@dataclass
class Report:
    header: list[str]
    rows: list[list]
    convergence_header: list[str]
    convergence: list[list]


def _stats(values: list[float], direction: str) -> dict[str, float]:
    best = min(values) if direction == "min" else max(values)
    worst = max(values) if direction == "min" else min(values)
    return {"mean": statistics.fmean(values), "median": statistics.median(values), "best": best, "worst": worst}


def build_report(logs: Sequence[RunLog]) -> Report:
    if not logs:
        raise LogFormatError("no logs given")
    ref = logs[0]
    for lg in logs[1:]:
        if (lg.metrics, lg.variables, lg.direction) != (ref.metrics, ref.variables, ref.direction):
            raise LogFormatError(f"{lg.label}: metric/variable set or direction differs from {ref.label}")
    header = ["label", "objective"] + [f"m:{m}" for m in ref.metrics] + ["first_feasible"]
    rows, finals, per_metric, firsts = [], [], {m: [] for m in ref.metrics}, []
    best_rows = []
    for lg in logs:
        b = lg.best_row()
        ff = lg.first_feasible()
        if b is None:
            rows.append([lg.label, None] + [None] * len(ref.metrics) + [None])
            continue
        rows.append([lg.label, b["objective"]] + [b["metrics"][m] for m in ref.metrics] + [ff])
        finals.append(b["objective"])
        best_rows.append(b)
        firsts.append(ff)
        for m in ref.metrics:
            per_metric[m].append(b["metrics"][m])
    if finals:
        st = _stats(finals, ref.direction)
        for key in ("mean", "median"):
            agg = statistics.fmean if key == "mean" else statistics.median
            rows.append([key, st[key]] + [agg(per_metric[m]) for m in ref.metrics] + [None])
        for key in ("best", "worst"):
            b = best_rows[finals.index(st[key])]
            rows.append([key, b["objective"]] + [b["metrics"][m] for m in ref.metrics] + [None])
        rows.append(["avg_sim_to_feasible", statistics.fmean(firsts)] + [None] * (len(ref.metrics) + 1))
    rows.append(["success", f"{len(finals)}/{len(logs)}"] + [None] * (len(ref.metrics) + 1))

    traces = [lg.best_trace() for lg in logs]
    length = max(len(t) for t in traces)
    conv = []
    for i in range(length):
        conv.append([i + 1] + [t[i] if i < len(t) else None for t in traces])
    return Report(header, rows, ["evaluation"] + [lg.label for lg in logs], conv)


def write_report(report: Report, path, convergence_path) -> None:
    for p, header, rows in ((path, report.header, report.rows),
                            (convergence_path, report.convergence_header, report.convergence)):
        d = os.path.dirname(os.fspath(p))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])


def format_report(report: Report) -> str:
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    table = [report.header] + [[cell(v) for v in r] for r in report.rows]
    widths = [max(len(str(r[i])) for r in table) for i in range(len(report.header))]
    return "\n".join("  ".join(str(c).rjust(w) for c, w in zip(r, widths)) for r in table)
