"""Experiment execution and CSV output.

CSV files (UTF-8, comma separated, header row, ``\\n`` line endings,
floats with 17 significant digits):

``recall.csv``   seed, epoch, split, k, recall
``stats.csv``    seed, epoch, mean_s_ap, mean_s_an, lr
``diagram.csv``  seed, split, anchor_id, s_np, s_nn
``summary.csv``  axis, value, runs, mean_recall_at_1, std_recall_at_1

Runs for different seeds (and sweep values) are independent and may be
spread over worker processes; results are always written in
(value, seed) order, so output does not depend on the worker count.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .config import RunConfig, build_config, dump_config
from .errors import ValidationError
from .evaluation import triplet_diagram
from .training import generate_dataset, train

RECALL_HEADER = ("seed", "epoch", "split", "k", "recall")
STATS_HEADER = ("seed", "epoch", "mean_s_ap", "mean_s_an", "lr")
DIAGRAM_HEADER = ("seed", "split", "anchor_id", "s_np", "s_nn")
SUMMARY_HEADER = ("axis", "value", "runs", "mean_recall_at_1", "std_recall_at_1")

SWEEP_AXES = {
    "direction": "surgery.direction",
    "pair_weight": "surgery.pair_weight",
    "triplet_weight": "surgery.triplet_weight",
    "lr": "train.base_lr",
}


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


@dataclass
class SeedResult:
    seed: int
    recall_rows: List[tuple]
    stats_rows: List[tuple]
    diagram_rows: List[tuple]
    final_holdout_r1: float
    final_train_r1: float


def run_seed(cfg: RunConfig, seed: int) -> SeedResult:
    run = cfg.for_seed(seed)
    dataset = generate_dataset(run.dataset)
    log, encoder = train(run, dataset)
    recall_rows, stats_rows = [], []
    for rec in log:
        stats_rows.append((seed, rec.epoch, rec.mean_s_ap, rec.mean_s_an, rec.lr))
        for report in (rec.recall_train, rec.recall_holdout):
            if report is None:
                continue
            for k, value in report.recall.items():
                recall_rows.append((seed, rec.epoch, report.split, k, value))
    emb, _ = encoder.forward(dataset.inputs, np.arange(len(dataset.labels)))
    diagram_rows = []
    for split, idx in (("train", dataset.train_indices), ("holdout", dataset.holdout_indices)):
        if len(idx) == 0:
            continue
        for row in triplet_diagram(emb[idx], dataset.labels[idx]):
            diagram_rows.append((seed, split, int(idx[row.anchor_id]), row.s_np, row.s_nn))
    final = log[-1] if len(log) else None
    holdout_r1 = train_r1 = float("nan")
    if final is not None:
        train_r1 = final.recall_train.recall.get(1, float("nan"))
        if final.recall_holdout is not None:
            holdout_r1 = final.recall_holdout.recall.get(1, float("nan"))
    return SeedResult(seed, recall_rows, stats_rows, diagram_rows, holdout_r1, train_r1)


def _run_job(job: Tuple[RunConfig, int]) -> SeedResult:
    return run_seed(*job)


def run_jobs(jobs: Sequence[Tuple[RunConfig, int]], threads: int = 1) -> List[SeedResult]:
    """Run ``(config, seed)`` jobs, returning results in job order."""
    if threads <= 1 or len(jobs) <= 1:
        return [_run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(_run_job, jobs))


def write_csv(path: str, header: Sequence[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_run(out_dir: str, cfg: RunConfig, results: Sequence[SeedResult],
              files=("recall", "stats", "diagram")) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.resolved.txt"), "w", encoding="utf-8") as fh:
        fh.write(dump_config(cfg))
    if "recall" in files:
        write_csv(os.path.join(out_dir, "recall.csv"), RECALL_HEADER,
                  (row for r in results for row in r.recall_rows))
    if "stats" in files:
        write_csv(os.path.join(out_dir, "stats.csv"), STATS_HEADER,
                  (row for r in results for row in r.stats_rows))
    if "diagram" in files:
        write_csv(os.path.join(out_dir, "diagram.csv"), DIAGRAM_HEADER,
                  (row for r in results for row in r.diagram_rows))


def train_command(cfg: RunConfig, threads: int = 1, files=("recall", "stats", "diagram")):
    os.makedirs(cfg.output_dir, exist_ok=True)
    results = run_jobs([(cfg, s) for s in cfg.repeat_seeds], threads)
    write_run(cfg.output_dir, cfg, results, files)
    return results


def sweep_configs(cfg: RunConfig, axis: str, values: Sequence[str]) -> Dict[str, RunConfig]:
    """Build one config per sweep value; all are validated before any run."""
    if axis not in SWEEP_AXES:
        raise ValidationError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    if not values:
        raise ValidationError("sweep needs at least one value")
    out = {}
    for value in values:
        if value in out:
            raise ValidationError(f"duplicate sweep value {value!r}")
        swept = build_config({SWEEP_AXES[axis]: value}, base=cfg)
        out[value] = replace(swept, output_dir=os.path.join(cfg.output_dir, f"{axis}={value}"))
    return out


def summarize(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def sweep_command(cfg: RunConfig, axis: str, values: Sequence[str], threads: int = 1):
    configs = sweep_configs(cfg, axis, values)
    os.makedirs(cfg.output_dir, exist_ok=True)
    jobs = [(c, s) for c in configs.values() for s in c.repeat_seeds]
    results = run_jobs(jobs, threads)
    summary, pos = [], 0
    for value, c in configs.items():
        chunk = results[pos:pos + len(c.repeat_seeds)]
        pos += len(c.repeat_seeds)
        write_run(c.output_dir, c, chunk)
        finals = [r.final_holdout_r1 if c.dataset.holdout_classes else r.final_train_r1 for r in chunk]
        mean, std = summarize(finals)
        summary.append((axis, value, len(chunk), mean, std))
    write_csv(os.path.join(cfg.output_dir, "summary.csv"), SUMMARY_HEADER, summary)
    return summary
