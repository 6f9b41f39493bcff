"""Command-line interface.

Subcommands:

* ``run``             — execute a JSON config (single run or Monte Carlo)
* ``example1``        — noise-free convergence comparison, six traces
* ``example2``        — noisy Monte Carlo comparison for three r0 magnitudes
* ``bench``           — per-step timing benchmark split by phase
* ``validate-config`` — check a config without running it

Exit codes: 0 success, 1 configuration error, 2 numerical failure (lost
positive definiteness, with the failing step in the message), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, EstimationError
from .experiments import (
    ExperimentConfig,
    bench_config,
    estimator_kinds,
    example1_config,
    example2_config,
    run_monte_carlo,
    run_single,
    run_timing,
    gen_data,
)
from .reports import (
    plot_error_traces,
    plot_mc_summaries,
    plot_timing,
    write_meta,
    write_mc_csv,
    write_timing_csv,
    write_trace_csv,
)

EXAMPLE2_R0_SCALES = (0.01, 1.0, 100.0)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text  # bare strings like pe / non_pe


def apply_overrides(config_dict: dict, assignments: list[str]) -> dict:
    """Apply ``--set dotted.key=value`` assignments onto a full config dict."""
    out = json.loads(json.dumps(config_dict))  # deep copy
    for assignment in assignments:
        if "=" not in assignment:
            raise ConfigError(f"override {assignment!r} is not of the form key=value")
        key, _, value = assignment.partition("=")
        parts = key.strip().split(".")
        node = out
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override references unknown config key {key!r}")
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError(f"override references unknown config key {key!r}")
        node[parts[-1]] = _parse_value(value.strip())
    return out


def load_config_dict(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if isinstance(raw, dict) and "config" in raw and "library_version" in raw:
        raw = raw["config"]  # accept a meta.json straight back
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return raw


def resolve_config(args, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Merge base/preset config, optional file, --set overrides, and --threads."""
    if getattr(args, "config", None):
        raw = load_config_dict(args.config)
        filled = ExperimentConfig.from_dict(raw).to_dict()
    elif base is not None:
        filled = base.to_dict()
    else:
        raise ConfigError("a --config file is required")
    overrides = list(getattr(args, "set", None) or [])
    if overrides:
        filled = apply_overrides(filled, overrides)
    cfg = ExperimentConfig.from_dict(filled)
    if getattr(args, "threads", None):
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _summary_line(label: str, final_error: float, k_rank, wall_s: float) -> str:
    krank_txt = "n/a" if k_rank is None else str(k_rank)
    return f"{label}: final_error={final_error:.6e} k_rank={krank_txt} wall={wall_s:.2f}s"


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(args)
    t0 = time.perf_counter()
    kinds = estimator_kinds(cfg)
    if cfg.trials == 1:
        dataset = gen_data(cfg)
        traces = [run_single(cfg, kind, dataset=dataset) for kind in kinds]
        for kind, trace in zip(kinds, traces):
            write_trace_csv(trace, out / f"trace_{kind}.csv")
        if args.svg:
            plot_error_traces(traces, kinds, out / "error_traces.svg", title=f"n={cfg.n}, {cfg.data.mode}")
        wall = time.perf_counter() - t0
        for kind, trace in zip(kinds, traces):
            print(_summary_line(kind, trace.final_error, trace.k_rank, wall))
    else:
        summaries = run_monte_carlo(cfg)
        for kind in kinds:
            write_mc_csv(summaries[kind], out / f"mc_{kind}.csv")
        if args.svg:
            plot_mc_summaries([summaries[k] for k in kinds], out / "mc.svg", title=f"n={cfg.n}, {cfg.trials} trials")
        wall = time.perf_counter() - t0
        for kind in kinds:
            print(_summary_line(kind, float(summaries[kind].mean[-1]), None, wall))
    write_meta(out, cfg.to_dict(), seed=cfg.seed, wall_time_s=time.perf_counter() - t0, overrides=args.set)
    return 0


def cmd_example1(args) -> int:
    base = example1_config(args.scale)
    cfg = resolve_config(args, base=base)
    out = _out_dir(args)
    t0 = time.perf_counter()
    traces, labels, styles = [], [], []
    for mode, style in (("pe", "-"), ("non_pe", "--")):
        cfg_mode = replace(cfg, data=replace(cfg.data, mode=mode))
        dataset = gen_data(cfg_mode)
        for kind in estimator_kinds(cfg):
            trace = run_single(cfg_mode, kind, dataset=dataset)
            write_trace_csv(trace, out / f"trace_{kind}_{mode}.csv")
            traces.append(trace)
            labels.append(f"{kind} ({mode})")
            styles.append(style)
            print(_summary_line(labels[-1], trace.final_error, trace.k_rank, time.perf_counter() - t0))
    plot_error_traces(
        traces,
        labels,
        out / "example1.svg",
        linestyles=styles,
        title=f"error norm vs k (n={cfg.n})",
    )
    write_meta(out, cfg.to_dict(), seed=cfg.seed, wall_time_s=time.perf_counter() - t0, overrides=args.set)
    return 0


def _r0_tag(r0_scale: float) -> str:
    return f"{r0_scale:g}".replace(".", "p")


def cmd_example2(args) -> int:
    out = _out_dir(args)
    t0 = time.perf_counter()
    last_cfg = None
    for r0_scale in EXAMPLE2_R0_SCALES:
        base = example2_config(args.scale, r0_scale=r0_scale)
        cfg = resolve_config(args, base=base)
        last_cfg = cfg
        summaries = run_monte_carlo(cfg)
        tag = _r0_tag(cfg.schedule.r0_scale)
        for kind in estimator_kinds(cfg):
            write_mc_csv(summaries[kind], out / f"mc_{kind}_r0_{tag}.csv")
        plot_mc_summaries(
            [summaries[k] for k in estimator_kinds(cfg)],
            out / f"example2_r0_{tag}.svg",
            title=f"mean error, r0={cfg.schedule.r0_scale:g}, {cfg.trials} trials",
        )
        for kind in estimator_kinds(cfg):
            print(_summary_line(f"{kind} (r0={cfg.schedule.r0_scale:g})", float(summaries[kind].mean[-1]), None, time.perf_counter() - t0))
    write_meta(out, last_cfg.to_dict(), seed=last_cfg.seed, wall_time_s=time.perf_counter() - t0, overrides=args.set)
    return 0


def cmd_bench(args) -> int:
    base = bench_config(args.scale)
    cfg = resolve_config(args, base=base)
    out = _out_dir(args)
    t0 = time.perf_counter()
    summary = run_timing(cfg)
    write_timing_csv(summary, out / "timing.csv")
    plot_timing(summary, out / "bench.svg", title=f"step time (n={cfg.n}, p={cfg.p})")
    wall = time.perf_counter() - t0
    for row in summary.rows:
        print(f"{row.estimator}/{row.phase}: mean={row.mean_ms:.4f}ms ci=[{row.ci_lo_ms:.4f},{row.ci_hi_ms:.4f}] wall={wall:.2f}s")
    write_meta(out, cfg.to_dict(), seed=cfg.seed, wall_time_s=wall, overrides=args.set)
    return 0


def cmd_validate_config(args) -> int:
    raw = load_config_dict(args.config)
    filled = ExperimentConfig.from_dict(raw).to_dict()
    if args.set:
        filled = apply_overrides(filled, args.set)
    ExperimentConfig.from_dict(filled)
    print("config OK")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvrls", description="Recursive least squares with time-varying regularization")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp, *, scale=False, config_required=False):
        sp.add_argument("--config", required=config_required, help="JSON config file (a meta.json is accepted too)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key, e.g. schedule.mu=0.95")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--threads", type=int, default=0, help="worker cap for Monte Carlo trials (0 = machine parallelism)")
        if scale:
            sp.add_argument("--scale", choices=("ci", "desk", "paper"), default="desk", help="preset size")

    sp = sub.add_parser("run", help="run a config (single run or Monte Carlo)")
    add_common(sp, config_required=True)
    sp.add_argument("--svg", action="store_true", help="also render figures")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("example1", help="noise-free convergence comparison (six traces)")
    add_common(sp, scale=True)
    sp.set_defaults(func=cmd_example1)

    sp = sub.add_parser("example2", help="noisy Monte Carlo comparison over r0 in {0.01, 1, 100}")
    add_common(sp, scale=True)
    sp.set_defaults(func=cmd_example2)

    sp = sub.add_parser("bench", help="per-step timing benchmark")
    add_common(sp, scale=True)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("validate-config", help="validate a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sp.set_defaults(func=cmd_validate_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except EstimationError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
