"""Cross-seed summaries: final-return means with a 75% t-interval, and mean learning curves."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from ..errors import InputError
from .config import RunConfig, parse_pairs

CONFIDENCE = 0.75
INTERVAL_METHOD = "student-t, two-sided 75%, over seeds"


def t_interval(values, confidence: float = CONFIDENCE) -> tuple[float, float]:
    """Mean and half-width of the two-sided t confidence interval; one value gives half-width 0."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise InputError("no values to summarize")
    mean = float(v.mean())
    if v.size == 1:
        return mean, 0.0
    sem = float(v.std(ddof=1)) / math.sqrt(v.size)
    return mean, float(stats.t.ppf(0.5 + confidence / 2.0, v.size - 1) * sem)


@dataclass
class RunRecord:
    path: Path
    config: RunConfig
    steps: np.ndarray
    returns: np.ndarray

    @property
    def final_return(self) -> float:
        return float(self.returns[-1])


def read_run(path: str | Path) -> RunRecord:
    path = Path(path)
    try:
        cfg = RunConfig(**parse_pairs((path / "config.txt").read_text().splitlines()))
        with open(path / "eval.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except FileNotFoundError as exc:
        raise InputError(f"{path} is not a run directory: {exc.filename} missing") from None
    if not rows:
        raise InputError(f"{path}/eval.csv has no records")
    steps = np.array([int(r["env_steps"]) for r in rows])
    returns = np.array([float(r["mean_return"]) for r in rows])
    return RunRecord(path, cfg, steps, returns)


def find_runs(roots) -> list[Path]:
    """Run directories (those holding eval.csv) at or below each root, sorted."""
    found = set()
    for root in roots:
        root = Path(root)
        if (root / "eval.csv").is_file():
            found.add(root)
        found.update(p.parent for p in root.rglob("eval.csv"))
    return sorted(found)


def group_runs(records: list[RunRecord]) -> dict[str, list[RunRecord]]:
    """Group by experiment tag; runs sharing a tag must agree on every setting but the seed."""
    groups: dict[str, list[RunRecord]] = defaultdict(list)
    for rec in records:
        groups[rec.config.tag()].append(rec)
    for tag, recs in groups.items():
        ref = recs[0].config.group_key()
        for rec in recs[1:]:
            if rec.config.group_key() != ref:
                diff = sorted(k for (k, a), (_, b) in zip(ref, rec.config.group_key()) if a != b)
                raise InputError(f"runs {recs[0].path} and {rec.path} share tag {tag} but differ in {diff}")
        seeds = [r.config.seed for r in recs]
        if len(set(seeds)) != len(seeds):
            raise InputError(f"duplicate seeds in group {tag}: {sorted(seeds)}")
    return dict(sorted(groups.items()))


def summarize(records: list[RunRecord]) -> list[dict]:
    rows = []
    for tag, recs in group_runs(records).items():
        cfg = recs[0].config
        mean, half = t_interval([r.final_return for r in recs])
        rows.append({"tag": tag, "env": cfg.env, "algorithm": cfg.algorithm, "mode": cfg.mode, "K": cfg.K,
                     "alpha": cfg.alpha, "seeds": len(recs), "mean_final_return": mean,
                     "ci75_half_width": half, "single_seed": int(len(recs) == 1),
                     "interval": INTERVAL_METHOD})
    return rows


def curves(records: list[RunRecord]) -> list[dict]:
    """Per-checkpoint mean return across the seeds that reached that checkpoint."""
    rows = []
    for tag, recs in group_runs(records).items():
        by_step: dict[int, list[float]] = defaultdict(list)
        for rec in recs:
            for s, r in zip(rec.steps, rec.returns):
                by_step[int(s)].append(float(r))
        for s in sorted(by_step):
            mean, half = t_interval(by_step[s])
            rows.append({"tag": tag, "env_steps": s, "mean_return": mean, "ci75_half_width": half,
                         "seeds": len(by_step[s])})
    return rows


def write_csv(path: str | Path, rows: list[dict]) -> None:
    if not rows:
        raise InputError(f"nothing to write to {path}")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def aggregate(run_dirs, out_dir: str | Path) -> tuple[list[dict], list[dict]]:
    """Write summary.csv and curves.csv for every run below ``run_dirs`` into ``out_dir``."""
    paths = find_runs(run_dirs)
    if not paths:
        raise InputError("no completed runs found")
    records = [read_run(p) for p in paths]
    summary, curve_rows = summarize(records), curves(records)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "summary.csv", summary)
    write_csv(out / "curves.csv", curve_rows)
    return summary, curve_rows
