"""Command-line interface: gen-env, run, batch, report, replay."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..world import save_env
from .batch import desk_suite, run_batch, summarize, write_summary_csv
from .config import RolloutConfig, apply_overrides, load_batch_spec, load_config
from .logio import read_log, replay_verify, write_log
from .report import emit_report
from .engine import build_world, rollout


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        key, _, raw = pair.partition("=")
        if not _:
            raise SystemExit(f"override must be key=value: {pair}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _base_config(args) -> RolloutConfig:
    config = load_config(args.config) if args.config else RolloutConfig()
    overrides = _parse_overrides(args.set)
    if overrides:
        config = apply_overrides(config, overrides)
    return config


def cmd_gen_env(args) -> int:
    config = _base_config(args)
    for seed in range(args.seeds):
        cfg = apply_overrides(config, {"env.seed": seed})
        world = build_world(cfg)
        out = Path(args.out) / f"{cfg.env.kind}-{seed}.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        save_env(world, out)
        print(f"wrote {out}")
    return 0


def cmd_run(args) -> int:
    config = _base_config(args)
    log, metrics = rollout(config)
    if args.log:
        write_log(log, metrics, args.log)
        print(f"log: {args.log}")
    print(json.dumps(metrics.to_dict(), indent=1))
    return 0 if metrics.status == "ok" else 1


def cmd_batch(args) -> int:
    if args.config:
        base, batch_spec = load_batch_spec(args.config)
    else:
        base, batch_spec = RolloutConfig(), {}
    overrides = _parse_overrides(args.set)
    if overrides:
        base = apply_overrides(base, overrides)
    parallelism = args.parallelism or int(batch_spec.get("parallelism", 1))
    if args.suite:
        configs = desk_suite(base, full_scale=args.full_scale)
    else:
        seeds = batch_spec.get("seeds", list(range(args.seeds)))
        configs = [
            apply_overrides(base, {
                "env.seed": int(seed),
                "label": f"{base.env.kind}-s{seed}-{base.planner.choice}"})
            for seed in seeds
        ]
    results = run_batch(configs, parallelism=parallelism,
                        log_dir=args.log_dir)
    rows = summarize(results)
    out = Path(args.out)
    write_summary_csv(rows, out)
    print(f"summary: {out}")
    for res in results:
        if res.metrics is None:
            print(f"FAILED {res.label}: {res.error}", file=sys.stderr)
    if args.report_dir:
        for path in emit_report(results, args.report_dir):
            print(f"report: {path}")
    return 0


def cmd_report(args) -> int:
    rows = []
    header = None
    for line in Path(args.summary).read_text().splitlines():
        cells = line.split(",")
        if header is None:
            header = cells
            continue
        rows.append(dict(zip(header, cells)))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_summary_csv([_coerce_row(r) for r in rows], out)
    print(f"report: {out}")
    return 0


def _coerce_row(row: dict) -> dict:
    out = {}
    for key, value in row.items():
        try:
            out[key] = int(value)
        except ValueError:
            try:
                out[key] = float(value)
            except ValueError:
                out[key] = value
    return out


def cmd_replay(args) -> int:
    ok_all = True
    for path in args.logs:
        ok, recomputed, stored = replay_verify(path)
        status = "ok" if ok else "MISMATCH"
        print(f"{path}: {status}")
        if not ok:
            ok_all = False
            print(f"  stored:     {stored.to_dict()}")
            print(f"  recomputed: {recomputed.to_dict()}")
    return 0 if ok_all else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmnav",
        description="Deterministic multi-robot deadlock-resolution experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field (dotted path)")

    p = sub.add_parser("gen-env", help="generate environment files")
    add_common(p)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--out", default="envs")
    p.set_defaults(func=cmd_gen_env)

    p = sub.add_parser("run", help="run a single rollout")
    add_common(p)
    p.add_argument("--log", help="write the trajectory log here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run a batch of rollouts")
    add_common(p)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--suite", action="store_true",
                   help="run the desk-scale suite (Room x20, Maze N=10 x20)")
    p.add_argument("--full-scale", action="store_true",
                   help="append the large Maze settings to the suite")
    p.add_argument("--parallelism", type=int, default=0)
    p.add_argument("--log-dir", help="persist per-run trajectory logs")
    p.add_argument("--out", default="summary.csv")
    p.add_argument("--report-dir", help="also emit CSV+SVG report here")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("report", help="rewrite a summary CSV (normalize columns)")
    p.add_argument("summary")
    p.add_argument("--out", default="report.csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("replay", help="re-verify persisted trajectory logs")
    p.add_argument("logs", nargs="+")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
