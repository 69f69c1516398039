"""CSV and JSON emitters for experiment results, and the summary aggregator."""

from __future__ import annotations

import csv
import json
import math
import statistics
from pathlib import Path

from .search import ABReport, PipelineReport

REPORT_FORMAT = "ranknas-report"
REPORT_VERSION = 1

AB_COLUMNS = ("seed", "arm", "skdt", "final_arch", "final_acc")
ITER_COLUMNS = ("seed", "arm", "iter", "skdt", "mean_landmark_acc")
RANKING_COLUMNS = ("seed", "arm", "iter", "arch_string", "gt_acc", "proxy_acc")
TRAIN_LOG_COLUMNS = ("seed", "arm", "epoch", "mean_task_loss", "mean_reg_loss", "lambda",
                     "skdt_probe")
ABLATE_COLUMNS = ("knob", "value", "seed", "skdt", "mean_acc", "final_arch", "final_acc")
LONG_COLUMNS = ("source", "group", "metric", "mean", "std", "n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _arm_runs(ab: ABReport):
    for row in ab.rows:
        yield row.seed, "baseline", row.baseline
        yield row.seed, "regularized", row.regularized


def _run_rows(seed, arm, rep: PipelineReport):
    iters = [{"seed": seed, "arm": arm, "iter": r.iteration, "skdt": r.skdt,
              "mean_landmark_acc": r.mean_landmark_acc} for r in rep.iterations]
    ranking = [{"seed": seed, "arm": arm, "iter": r.iteration, "arch_string": a,
                "gt_acc": g, "proxy_acc": p}
               for r in rep.iterations for a, g, p in r.ranking]
    log = [{"seed": seed, "arm": arm, **e} for e in rep.epochs]
    return iters, ranking, log


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _run_dict(rep: PipelineReport) -> dict:
    d = rep.to_dict()
    d.pop("config")  # the resolved config is embedded once at the top level
    return d


def write_report_json(path, kind: str, config: dict, summary: dict, runs: list[dict]) -> Path:
    doc = {"format": REPORT_FORMAT, "version": REPORT_VERSION, "kind": kind,
           "config": config, "summary": summary, "runs": runs}
    path = Path(path)
    path.write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")
    return path


def write_ab_outputs(out_dir, ab: ABReport, run_config: dict) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ab_rows, iters, ranking, log, runs = [], [], [], [], []
    for seed, arm, rep in _arm_runs(ab):
        ab_rows.append({"seed": seed, "arm": arm, "skdt": rep.skdt,
                        "final_arch": rep.final_arch, "final_acc": rep.final_acc})
        i, r, lg = _run_rows(seed, arm, rep)
        iters += i
        ranking += r
        log += lg
        runs.append({"seed": seed, "arm": arm, **_run_dict(rep)})
    return [write_csv(out / "ab.csv", AB_COLUMNS, ab_rows),
            write_csv(out / "iterations.csv", ITER_COLUMNS, iters),
            write_csv(out / "ranking.csv", RANKING_COLUMNS, ranking),
            write_csv(out / "train_log.csv", TRAIN_LOG_COLUMNS, log),
            write_report_json(out / "report.json", "ab", run_config, ab.summary(), runs)]


def write_ablation_outputs(out_dir, knob: str, results: list[tuple], run_config: dict) -> list[Path]:
    """``results`` holds (value, seed, PipelineReport) triples in grid-major order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"knob": knob, "value": value, "seed": seed, "skdt": rep.skdt,
             "mean_acc": rep.mean_acc, "final_arch": rep.final_arch,
             "final_acc": rep.final_acc} for value, seed, rep in results]
    runs = [{"knob": knob, "value": value, "seed": seed, **_run_dict(rep)}
            for value, seed, rep in results]
    summary = {str(v): _mean_std([r["skdt"] for r in rows if r["value"] == v])
               for v in dict.fromkeys(r["value"] for r in rows)}
    return [write_csv(out / f"ablate_{knob}.csv", ABLATE_COLUMNS, rows),
            write_report_json(out / f"ablate_{knob}.json", f"ablate:{knob}", run_config,
                              {"skdt_by_value": summary}, runs)]


def _mean_std(vals) -> dict:
    vals = [v for v in vals if not math.isnan(v)]
    if not vals:
        return {"mean": math.nan, "std": math.nan, "n": 0}
    return {"mean": statistics.fmean(vals),
            "std": statistics.stdev(vals) if len(vals) > 1 else 0.0, "n": len(vals)}


def _num(s: str) -> float:
    return float(s) if s not in ("", None) else math.nan


def summarize(out_dir) -> tuple[str, list[dict]]:
    """Aggregate ``ab.csv`` and any ``ablate_*.csv`` in ``out_dir``.

    Returns the printable table and the long-format rows. Raises
    FileNotFoundError naming the expected files when none are present.
    """
    out = Path(out_dir)
    ab_path = out / "ab.csv"
    ablations = sorted(out.glob("ablate_*.csv"))
    if not ab_path.is_file() and not ablations:
        raise FileNotFoundError(f"no results in {out}: expected ab.csv or ablate_<knob>.csv")
    lines, long_rows = [], []

    def add(source, group, metric, stats):
        long_rows.append({"source": source, "group": group, "metric": metric, **stats})

    if ab_path.is_file():
        rows = read_csv(ab_path)
        lines.append("A/B comparison (ab.csv)")
        lines.append(f"  {'arm':<12} {'n':>3} {'S-KdT':>17} {'final acc %':>17}")
        means = {}
        for arm in dict.fromkeys(r["arm"] for r in rows):
            sel = [r for r in rows if r["arm"] == arm]
            sk = _mean_std([_num(r["skdt"]) for r in sel])
            acc = _mean_std([_num(r["final_acc"]) for r in sel])
            means[arm] = (sk["mean"], acc["mean"])
            add("ab", arm, "skdt", sk)
            add("ab", arm, "final_acc", acc)
            lines.append(f"  {arm:<12} {len(sel):>3} {sk['mean']:>8.4f} ± {sk['std']:<6.4f} "
                         f"{acc['mean']:>8.2f} ± {acc['std']:<6.2f}")
        if "baseline" in means and "regularized" in means:
            d_sk = means["regularized"][0] - means["baseline"][0]
            d_acc = means["regularized"][1] - means["baseline"][1]
            by_seed = {}
            for r in rows:
                by_seed.setdefault(r["seed"], {})[r["arm"]] = _num(r["skdt"])
            paired = [v["regularized"] - v["baseline"] for v in by_seed.values()
                      if {"baseline", "regularized"} <= v.keys()]
            pos = sum(d > 0 for d in paired)
            add("ab", "delta", "skdt", _mean_std(paired))
            lines.append(f"  delta (regularized - baseline): S-KdT {d_sk:+.4f}, "
                         f"final acc {d_acc:+.2f}, seeds improved {pos}/{len(paired)}")
    for path in ablations:
        rows = read_csv(path)
        knob = rows[0]["knob"] if rows else path.stem.removeprefix("ablate_")
        lines.append(f"Ablation over {knob} ({path.name})")
        lines.append(f"  {'value':<14} {'n':>3} {'S-KdT':>17} {'mean acc %':>17}")
        for value in dict.fromkeys(r["value"] for r in rows):
            sel = [r for r in rows if r["value"] == value]
            sk = _mean_std([_num(r["skdt"]) for r in sel])
            acc = _mean_std([_num(r["mean_acc"]) for r in sel])
            add(f"ablate_{knob}", value, "skdt", sk)
            add(f"ablate_{knob}", value, "mean_acc", acc)
            lines.append(f"  {value:<14} {len(sel):>3} {sk['mean']:>8.4f} ± {sk['std']:<6.4f} "
                         f"{acc['mean']:>8.2f} ± {acc['std']:<6.2f}")
    return "\n".join(lines) + "\n", long_rows
