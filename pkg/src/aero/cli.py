"""Command-line interface: ``aero packet|dag|run|sweep|report``."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .benchmarks import Metrics, benchmark, run_experiment, run_record, scenario, simulate
from .config import CONFIG_ENV, ExperimentConfig, load_config, load_trace
from .dag import Dag, UpdateOp
from .errors import AeroError, ConfigError, PacketError
from .packet import UpdatePacket, decode, describe, encode
from .sim import Approach

EXIT_CONFIG = 1
EXIT_MALFORMED = 2

SUMMARY_FIELDS = ["scenario", "approach", "runs", "error_rate", "completion_time_us", "dmr"]
METRIC_TITLES = {
    "error_rate": "Error rate",
    "completion_time_us": "Update completion time (ms)",
    "dmr": "Deadline miss rate",
}


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _ids(text: str | None) -> frozenset[int] | None:
    if text is None:
        return None
    text = text.strip()
    return frozenset(int(t) for t in text.split(",") if t) if text else frozenset()


# -- packet ----------------------------------------------------------------
def _read_packet_bytes(args) -> bytes:
    if args.hex is not None:
        try:
            return bytes.fromhex(args.hex)
        except ValueError as exc:
            raise ConfigError(f"--hex: {exc}") from exc
    if args.file is None:
        raise ConfigError("give a packet file or --hex")
    try:
        return Path(args.file).read_bytes()
    except OSError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_packet_encode(args) -> int:
    code = bytes.fromhex(args.code_hex) if args.code_hex else b""
    if args.code_file:
        code += Path(args.code_file).read_bytes()
    group = _ids(args.group)
    if args.seq == 0 and group is None:
        group = frozenset({args.task})
    op = UpdateOp[args.op.upper()]
    raw = encode(UpdatePacket(args.seq, op, args.task, code, group, _ids(args.deps)), args.n_max)
    if args.out:
        Path(args.out).write_bytes(raw)
    else:
        print(raw.hex())
    return 0


def cmd_packet_decode(args) -> int:
    rows = describe(_read_packet_bytes(args), args.n_max)
    print(json.dumps({name: {"bit_offset": off, "bits": width, "value": value} for name, off, width, value in rows}, indent=2))
    return 0


def cmd_packet_inspect(args) -> int:
    rows = describe(_read_packet_bytes(args), args.n_max)
    for name, off, width, value in rows:
        shown = ",".join(map(str, value)) if isinstance(value, list) else value
        print(f"{name}={shown}\tbits {off}..{off + width - 1} ({width})" if width else f"{name}={shown}\t(empty)")
    return 0


# -- dag ---------------------------------------------------------------------
def _load_dag(args) -> Dag:
    if args.benchmark:
        return benchmark(args.benchmark).dag
    if not args.file:
        raise ConfigError("give a DAG JSON file or --benchmark")
    try:
        return Dag.from_json(Path(args.file).read_text())
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{args.file}: malformed DAG ({exc})") from exc


def cmd_dag_check(args) -> int:
    dag = _load_dag(args)
    print(f"ok: {len(dag.routine_ids())} routine tasks, {len(dag.edges)} edges, order {dag.topological_order()}")
    return 0


def cmd_dag_show(args) -> int:
    dag = _load_dag(args)
    if args.json:
        print(dag.to_json())
        return 0
    for tid in dag.topological_order():
        t = dag.tasks[tid]
        preds = sorted(dag.preds(tid))
        print(
            f"t{tid}\t{t.kind.value}\texec={t.profile.exec_time:.1f}us\tenergy={t.profile.energy_cost:.3f}uJ"
            f"\tprio={t.profile.priority}\tv{t.profile.version}\tpreds={preds}"
        )
    return 0


# -- experiments ---------------------------------------------------------------
def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "scenario", None) is not None:
        cfg.scenarios = [args.scenario]
    if getattr(args, "approach", None) is not None:
        cfg.approaches = [Approach(args.approach)]
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "runs", None) is not None:
        if args.runs < 1:
            raise ConfigError("--runs must be >= 1")
        cfg.runs = args.runs
    if args.trace is not None:
        cfg.trace = args.trace
        cfg.base_dir = Path.cwd()
    return cfg


def _scenario(ident, cfg: ExperimentConfig):
    if isinstance(ident, str) and not ident.isdigit():
        p = Path(ident)
        return scenario(p if p.is_absolute() else cfg.base_dir / p)
    return scenario(ident)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    cfg = _config(args)
    scen = _scenario(cfg.scenarios[0], cfg)
    approach = cfg.approaches[0]
    res = simulate(scen, approach, cfg.load_trace(), cfg.seed, cfg.horizon_us, cfg.costs, cfg.deadline)
    rec = run_record(scen, approach, cfg.seed, res)
    out = _out_dir(args.out)
    with open(out / "events.jsonl", "w") as fh:
        for ev in res.events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
    (out / "metrics.json").write_text(json.dumps(asdict(rec), indent=2, sort_keys=True) + "\n")
    ct = "n/a" if rec.completion_time is None else f"{rec.completion_time / 1e3:.3f} ms"
    print(
        f"scenario {scen.id} {approach.value} seed {cfg.seed}: error={int(rec.error)} completion={ct} "
        f"dmr={rec.dmr:.4f} iterations={rec.iterations}"
    )
    return 0


def _cell(job) -> Metrics:
    scen, approach, trace, cfg = job
    return run_experiment(scen, approach, trace, cfg.seed, cfg.runs, cfg.horizon_us, cfg.costs, cfg.deadline)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    trace = cfg.load_trace()
    jobs = [(_scenario(s, cfg), a, trace, cfg) for s in cfg.scenarios for a in cfg.approaches]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_cell, jobs))
    else:
        results = [_cell(j) for j in jobs]
    out = _out_dir(args.out)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for m in results:
            s = m.summary()
            w.writerow([_fmt(s[k]) for k in SUMMARY_FIELDS])
    with open(out / "runs.csv", "w", newline="") as fh:
        w = None
        for m in results:
            for r in m.runs:
                row = asdict(r)
                if w is None:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(list(row))
                w.writerow([_fmt(v) for v in row.values()])
    summary = {
        "schema": 1,
        "trace": cfg.trace,
        "seed": cfg.seed,
        "runs": cfg.runs,
        "cells": [m.summary() for m in results],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"wrote {len(results)} cells to {out / 'summary.csv'}")
    return 0


# -- report ------------------------------------------------------------------
def _read_summary(path: Path) -> list[dict]:
    if path.is_dir():
        path = path / "summary.csv"
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(str(exc)) from exc
    if not rows:
        raise ConfigError(f"{path}: no rows")
    missing = set(SUMMARY_FIELDS) - set(rows[0])
    if missing:
        raise ConfigError(f"{path}: missing columns {sorted(missing)}")
    return rows


def _tables(rows: list[dict]) -> dict[str, tuple[list[str], dict[str, dict[str, float]]]]:
    scenarios = sorted({r["scenario"] for r in rows}, key=lambda s: (len(s), s))
    order = [a.value for a in Approach]
    approaches = sorted({r["approach"] for r in rows}, key=lambda a: order.index(a) if a in order else len(order))
    out = {}
    for metric in METRIC_TITLES:
        grid = {a: {} for a in approaches}
        for r in rows:
            v = float(r[metric])
            grid[r["approach"]][r["scenario"]] = v / 1e3 if metric == "completion_time_us" else v
        out[metric] = (scenarios, grid)
    return out


def _svg(title: str, scenarios: list[str], grid: dict[str, dict[str, float]]) -> str:
    colors = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"]
    w, h, pad = 640, 320, 50
    vals = [v for row in grid.values() for v in row.values() if not math.isnan(v)]
    top = max(vals, default=1.0) or 1.0
    group_w = (w - 2 * pad) / max(1, len(scenarios))
    bar_w = group_w * 0.8 / max(1, len(grid))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">',
        f'<text x="{w / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="black"/>',
        f'<text x="{pad - 5}" y="{pad}" text-anchor="end">{top:.3g}</text>',
    ]
    for i, s in enumerate(scenarios):
        x0 = pad + i * group_w + group_w * 0.1
        parts.append(f'<text x="{x0 + group_w * 0.4:.1f}" y="{h - pad + 15}" text-anchor="middle">S{s}</text>')
        for j, (a, row) in enumerate(grid.items()):
            v = row.get(s, float("nan"))
            bh = 0.0 if math.isnan(v) else (h - 2 * pad) * v / top
            parts.append(
                f'<rect x="{x0 + j * bar_w:.1f}" y="{h - pad - bh:.1f}" width="{bar_w:.1f}" height="{bh:.1f}" '
                f'fill="{colors[j % len(colors)]}"><title>{a} S{s}: {v:.4g}</title></rect>'
            )
    for j, a in enumerate(grid):
        parts.append(f'<rect x="{w - pad - 90}" y="{30 + 14 * j}" width="10" height="10" fill="{colors[j % len(colors)]}"/>')
        parts.append(f'<text x="{w - pad - 75}" y="{39 + 14 * j}">{a}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_report(args) -> int:
    tables = _tables(_read_summary(Path(args.input)))
    for metric, (scenarios, grid) in tables.items():
        print(f"## {METRIC_TITLES[metric]}")
        print("approach".ljust(14) + "".join(f"S{s}".rjust(12) for s in scenarios))
        for a, row in grid.items():
            print(a.ljust(14) + "".join(f"{row.get(s, float('nan')):12.4f}" for s in scenarios))
        print()
    if args.svg:
        out = _out_dir(args.svg)
        for metric, (scenarios, grid) in tables.items():
            (out / f"{metric}.svg").write_text(_svg(METRIC_TITLES[metric], scenarios, grid))
    return 0


# -- parser --------------------------------------------------------------------
def _common(p: argparse.ArgumentParser, runs: bool = True) -> None:
    p.add_argument("--config", metavar="PATH", help=f"experiment config JSON (relative paths also searched in ${CONFIG_ENV})")
    p.add_argument("--seed", type=int, metavar="N", help="first seed (default 0)")
    if runs:
        p.add_argument("--runs", type=int, metavar="N", help="seeds per cell (default 100)")
    p.add_argument("--trace", metavar="PATH", help="harvest trace CSV or bundled name: synthetic, solar_diurnal")
    p.add_argument("--out", metavar="DIR", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aero",
        description="Simulate over-the-air updates of task DAGs on energy-harvesting devices.",
        epilog=f"Environment: ${CONFIG_ENV} is searched for relative --config paths.",
    )
    parser.add_argument("--version", action="version", version=f"aero {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    pk = sub.add_parser("packet", help="encode, decode or inspect update packets")
    pks = pk.add_subparsers(dest="action", required=True)
    enc = pks.add_parser("encode", help="build one packet")
    enc.add_argument("--op", choices=[o.name.lower() for o in UpdateOp], required=True)
    enc.add_argument("--task", type=int, required=True)
    enc.add_argument("--seq", type=int, default=0)
    enc.add_argument("--group", metavar="IDS", help="comma-separated group tasks (seq 0 only; default: --task)")
    enc.add_argument("--deps", metavar="IDS", help="comma-separated dependency tasks; sets the DAG flag")
    enc.add_argument("--code-hex", metavar="HEX")
    enc.add_argument("--code-file", metavar="PATH")
    enc.add_argument("--n-max", type=int, default=32)
    enc.add_argument("--out", metavar="PATH", help="write bytes here instead of printing hex")
    enc.set_defaults(func=cmd_packet_encode)
    for name, func, text in (
        ("decode", cmd_packet_decode, "decode to JSON with bit offsets"),
        ("inspect", cmd_packet_inspect, "print each field with its bit range"),
    ):
        p = pks.add_parser(name, help=text)
        p.add_argument("file", nargs="?")
        p.add_argument("--hex", metavar="HEX")
        p.add_argument("--n-max", type=int, default=32)
        p.set_defaults(func=func)

    dg = sub.add_parser("dag", help="validate or print a DAG")
    dgs = dg.add_subparsers(dest="action", required=True)
    for name, func in (("check", cmd_dag_check), ("show", cmd_dag_show)):
        p = dgs.add_parser(name)
        p.add_argument("file", nargs="?")
        p.add_argument("--benchmark", choices=["B1", "B2", "B3", "B4"])
        if name == "show":
            p.add_argument("--json", action="store_true")
        p.set_defaults(func=func)

    run = sub.add_parser("run", help="simulate one (scenario, approach, seed) cell")
    _common(run, runs=False)
    run.add_argument("--scenario", metavar="1..6|PATH", help="preset number or scenario JSON")
    run.add_argument("--approach", choices=[a.value for a in Approach])
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="run the scenario x approach grid")
    _common(sw)
    sw.add_argument("--scenario", metavar="1..6|PATH", help="restrict to one scenario")
    sw.add_argument("--approach", choices=[a.value for a in Approach], help="restrict to one approach")
    sw.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")
    sw.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="print comparison tables from a sweep")
    rp.add_argument("input", help="sweep output directory or summary.csv")
    rp.add_argument("--svg", metavar="DIR", help="also write bar charts here")
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PacketError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except (ConfigError, AeroError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
