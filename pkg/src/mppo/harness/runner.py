"""Single training run: seeding, the evaluation protocol and CSV artifacts."""

from __future__ import annotations

import csv
import json
import logging
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..controller import evaluate, make_trainer
from ..envs import MazeEnv, SparseCartPoleSwingupEnv, VisitationLog
from .config import RunConfig

log = logging.getLogger(__name__)

RNG_LABELS = ("init", "rollout", "evaluation")


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator derived from ``seed`` and a fixed label."""
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(label.encode())]))


def make_env(cfg: RunConfig):
    if cfg.env == "maze":
        return MazeEnv.from_file(cfg.maze_layout) if cfg.maze_layout else MazeEnv()
    return SparseCartPoleSwingupEnv()


@dataclass
class EvalRecord:
    env_steps: int
    mean_return: float
    returns: list[float]
    picked: int
    J: np.ndarray
    H: np.ndarray


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class _CsvSink:
    def __init__(self, path: Path, header: list[str]):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        self.writer.writerow(header)

    def write(self, row) -> None:
        self.writer.writerow([_fmt(v) for v in row])

    def close(self) -> None:
        self.fh.close()


def _buffers(trainer) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(trainer, "buffer"):
        return trainer.buffer.J.copy(), trainer.buffer.H.copy()
    return np.array([trainer.J]), np.array([trainer.H])


def run(cfg: RunConfig, out_dir: str | Path | None = None) -> dict:
    """Train per ``cfg`` and write eval/buffer/switches/heatmap CSVs into ``out_dir``.

    Evaluation happens before training and whenever the step counter first
    crosses each multiple of ``eval_interval``; it uses its own environment
    instance and random stream, so it consumes no training samples.
    """
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())

    env, eval_env = make_env(cfg), make_env(cfg)
    visits = VisitationLog()
    trainer = make_trainer(env, cfg.train_config(), cfg.variant_config(), rng_stream(cfg.seed, "init"),
                           rng_stream(cfg.seed, "rollout"), visits)
    eval_rng = rng_stream(cfg.seed, "evaluation")
    K = cfg.K

    eval_csv = _CsvSink(out / "eval.csv", ["env_steps", "mean_return"]
                        + [f"ep_return_{e}" for e in range(cfg.eval_episodes)] + ["picked_index"])
    buffer_csv = _CsvSink(out / "buffer.csv", ["iteration", "picked"] + [f"J_{k}" for k in range(K)]
                          + [f"H_{k}" for k in range(K)] + [f"score_{k}" for k in range(K)]
                          + ["gain", "kl", "env_steps", "accepted", "rollout_return", "rollout_se",
                             "pairwise_dist"])
    switch_csv = _CsvSink(out / "switches.csv", ["iteration", "from", "to", "measured_delta", "theorem1_bound",
                                                 "eps_est", "buffer_delta"])

    evals: list[EvalRecord] = []

    def do_eval(steps: int) -> None:
        returns = evaluate(eval_env, trainer.eval_policy, cfg.eval_episodes, eval_rng)
        picked = getattr(trainer, "last_picked", 0)
        J, H = _buffers(trainer)
        rec = EvalRecord(steps, float(np.mean(returns)), returns, picked, J, H)
        evals.append(rec)
        eval_csv.write([steps, rec.mean_return, *returns, picked])

    try:
        do_eval(0)
        next_eval = cfg.eval_interval
        while trainer.env_steps < cfg.total_steps:
            r = trainer.iterate()
            buffer_csv.write([r.iteration, r.picked, *r.J, *r.H, *r.scores, r.gain, r.kl, r.env_steps,
                              r.accepted, r.rollout_return, r.rollout_se, r.pairwise_distance])
            if r.switch is not None:
                s = r.switch
                switch_csv.write([r.iteration, s["from"], s["to"], s["measured_delta"], s["theorem1_bound"],
                                  s["eps_est"], s["buffer_delta"]])
            if trainer.env_steps >= next_eval:
                do_eval(trainer.env_steps)
                while next_eval <= trainer.env_steps:
                    next_eval += cfg.eval_interval
    finally:
        for sink in (eval_csv, buffer_csv, switch_csv):
            sink.close()

    with open(out / "heatmap.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "col", "count"])
        w.writerows(visits.rows())

    J, H = _buffers(trainer)
    summary = {"tag": cfg.tag(), "seed": cfg.seed, "env_steps": trainer.env_steps,
               "iterations": trainer.iteration, "final_return": evals[-1].mean_return,
               "final_picked": int(getattr(trainer, "last_picked", 0)),
               "initial_H": evals[0].H.tolist(), "final_J": J.tolist(), "final_H": H.tolist()}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    log.info("%s seed %d: final return %.3f after %d steps", cfg.tag(), cfg.seed, summary["final_return"],
             trainer.env_steps)
    return summary
