"""Command-line entry point: ``mppo run | sweep | aggregate | heatmap``."""

from __future__ import annotations

import argparse
import itertools
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .errors import MPPOError
from .harness import plots
from .harness.aggregate import aggregate
from .harness.config import OUTPUT_ROOT_ENV, RunConfig, load_config, output_root, parse_overrides, preset_names
from .harness.runner import run

log = logging.getLogger("mppo")


def run_dir(cfg: RunConfig) -> Path:
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return output_root() / cfg.tag() / f"seed{cfg.seed}"


def parse_seeds(text: str) -> list[int]:
    """``"0-5"`` or ``"0,2,4"`` (ranges inclusive)."""
    seeds = []
    for part in text.split(","):
        lo, sep, hi = part.partition("-")
        seeds.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
    return seeds


def parse_vary(items) -> list[dict]:
    """Cross product of ``key=v1,v2`` specs as a list of override dicts."""
    axes = []
    for item in items or []:
        key, sep, values = item.partition("=")
        if not sep:
            raise MPPOError(f"--vary expects key=v1,v2,..., got {item!r}")
        axes.append([parse_overrides([f"{key.strip()}={v}"]) for v in values.split(",")])
    return [{k: v for d in combo for k, v in d.items()} for combo in itertools.product(*axes)] or [{}]


def cmd_run(args) -> int:
    cfg = load_config(args.config, parse_overrides(args.set))
    out = Path(args.out) if args.out else run_dir(cfg)
    summary = run(cfg, out)
    print(f"{out}: final return {summary['final_return']:g} after {summary['env_steps']} steps")
    return 0


def cmd_sweep(args) -> int:
    base = parse_overrides(args.set)
    configs = []
    for variant in parse_vary(args.vary):
        for seed in parse_seeds(args.seeds):
            configs.append(load_config(args.config, {**base, **variant, "seed": seed}))
    for cfg in configs:
        log.info("queued %s seed %d -> %s", cfg.tag(), cfg.seed, run_dir(cfg))
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(lambda c: (c, run(c, run_dir(c))), configs))
    for cfg, summary in results:
        print(f"{cfg.tag()} seed {cfg.seed}: final return {summary['final_return']:g}")
    return 0


def cmd_aggregate(args) -> int:
    roots = args.runs or [output_root()]
    out = Path(args.out) if args.out else output_root() / "aggregate"
    summary, _ = aggregate(roots, out)
    for row in summary:
        flag = " (single seed)" if row["single_seed"] else ""
        print(f"{row['tag']}: {row['mean_final_return']:.3f} +/- {row['ci75_half_width']:.3f} "
              f"over {row['seeds']} seeds{flag}")
    if args.figures:
        plots.learning_curves(out / "curves.csv", out / "curves.png")
        print(f"figures in {out}")
    return 0


def cmd_heatmap(args) -> int:
    src = Path(args.run) / "heatmap.csv"
    if not src.is_file():
        raise MPPOError(f"{src} not found")
    grid = plots.heatmap_grid(src)
    if args.png:
        plots.heatmap(src, args.png, title=Path(args.run).name)
        print(f"wrote {args.png}")
    else:
        shades = " .:-=+*#%@"
        top = max(int(grid.max()), 1)
        for row in grid:
            print("".join(shades[min(len(shades) - 1, int(9 * (n / top) ** 0.25 + 0.999) if n else 0)]
                          for n in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mppo", description=(
        f"Multi-path policy optimization experiments. Outputs go under ${OUTPUT_ROOT_ENV} (default ./runs)."))
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def config_args(sp):
        sp.add_argument("config", help=f"config file or preset ({', '.join(preset_names())})")
        sp.add_argument("--set", nargs="*", metavar="KEY=VALUE", help="override config keys")

    sp = sub.add_parser("run", help="train one configuration")
    config_args(sp)
    sp.add_argument("--out", help="run directory (default: output root / tag / seedN)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="train the cross product of seeds and varied keys")
    config_args(sp)
    sp.add_argument("--seeds", default="0-5", help="e.g. 0-5 or 0,3 (default 0-5)")
    sp.add_argument("--vary", nargs="*", metavar="KEY=V1,V2", help="keys to sweep over")
    sp.add_argument("--jobs", type=int, default=1, help="worker threads")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("aggregate", help="summarize runs across seeds")
    sp.add_argument("runs", nargs="*", help="run directories or roots to search (default: output root)")
    sp.add_argument("--out", help="where to write summary.csv and curves.csv")
    sp.add_argument("--figures", action="store_true", help="also render curves.png")
    sp.set_defaults(func=cmd_aggregate)

    sp = sub.add_parser("heatmap", help="show a run's state-visitation counts")
    sp.add_argument("run", help="run directory")
    sp.add_argument("--png", help="write a PNG instead of printing text")
    sp.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MPPOError as exc:
        print(f"mppo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"mppo {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
