"""Command line: ``ruralv2x {analytic,simulate,sweep,report}``.

Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 failed trend
check under ``report --strict``.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import logging
import os
import sys
from pathlib import Path

import yaml

from . import __version__
from .analytic import DcommInput, EnergyInput, d_comm, dbm_to_watts, e_total, expected_attempts, required_ebn0_for_prr
from .config import ConfigError, ScenarioConfig, dump_config, expand_sweep, load_config
from .engine import run_sweep
from .metrics import fmt
from .phy_link import load_mcs_table, rate_for
from .report import build_report, format_table, write_report

log = logging.getLogger("ruralv2x")

OUTPUT_ENV = "RURALV2X_OUTPUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3

PT_GRID = [23.0, 24.0, 25.0, 26.0]
PRESETS = {
    "pt-density": {"fixed": {"scs_khz": 30, "mcs_index": 8, "mean_speed_v": 50.0},
                   "axes": {"pt_dbm": PT_GRID, "density_rho": [30.0, 50.0, 80.0, 100.0]}},
    "dcomm": {"fixed": {"density_rho": 50.0},
              "axes": {"pt_dbm": PT_GRID, "mean_speed_v": [50.0, 80.0, 110.0]}},
    "scs": {"fixed": {"mean_speed_v": 110.0, "ici_enabled": True, "density_rho": 50.0},
            "axes": {"pt_dbm": [23.0, 26.0], "scs_khz": [15, 30]}},
    "mcs": {"fixed": {"scs_khz": 30, "mean_speed_v": 50.0},
            "axes": {"pt_dbm": [23.0, 26.0], "density_rho": [50.0, 100.0], "mcs_index": [8, 10, 12, 14]}},
}
GRID_COLUMNS = ["prr", "pt_dbm", "d_comm_m", "expected_attempts", "e_total_j", "required_ebn0_db_qpsk",
                "required_ebn0_db_16qam", "note"]


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _run_dir(args, kind: str) -> Path:
    if args.run_dir:
        return Path(args.run_dir)
    base = Path(args.out_dir or os.environ.get(OUTPUT_ENV) or "runs")
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    return base / f"{kind}-{stamp}"


def _base_config(args) -> ScenarioConfig:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"master_seed={args.seed}")
    return load_config(args.config, overrides)


# analytic

def _required_ebn0(prr: float, l_bits: int, m: int) -> tuple[float | None, str]:
    try:
        return required_ebn0_for_prr(prr, l_bits, m), ""
    except ValueError as exc:
        return None, f"infeasible for M={m}: {exc}"


def cmd_analytic(args) -> int:
    cfg = _base_config(args)
    mcs_table = load_mcs_table(cfg.mcs_table)
    mcs = mcs_table[cfg.mcs_index]
    v = (args.v_kmh if args.v_kmh is not None else cfg.mean_speed_v) / 3.6
    pps = args.pps if args.pps is not None else cfg.pps
    pt = args.pt_dbm if args.pt_dbm is not None else cfg.pt_dbm
    l_bits = args.l_bits if args.l_bits is not None else cfg.packet_bits
    rate = args.rate_bps if args.rate_bps is not None else rate_for(cfg, mcs)
    h = args.h_attempts if args.h_attempts is not None else cfg.harq_max_attempts
    n_pkt = args.n_pkt if args.n_pkt is not None else pps * cfg.sim_duration

    def evaluate(prr: float, pt_dbm: float) -> dict:
        return {
            "d_comm_m": d_comm(DcommInput(args.n, v, pps, prr)),
            "expected_attempts": expected_attempts(prr, h),
            "e_total_j": e_total(EnergyInput(n_pkt, dbm_to_watts(pt_dbm), l_bits, rate, h, prr)),
        }

    if args.grid:
        prrs = args.grid_prr or [round(0.1 * k, 10) for k in range(1, 11)]
        pts = args.grid_pt or PT_GRID
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(GRID_COLUMNS)
        for prr in prrs:
            q, note_q = _required_ebn0(prr, l_bits, 4)
            m16, note_m = _required_ebn0(prr, l_bits, 16)
            for p in pts:
                row = evaluate(prr, p)
                writer.writerow([fmt(prr), fmt(p), fmt(row["d_comm_m"]), fmt(row["expected_attempts"]),
                                 fmt(row["e_total_j"]), fmt(q), fmt(m16), "; ".join(x for x in (note_q, note_m) if x)])
        if args.out:
            Path(args.out).write_text(buf.getvalue())
            print(f"wrote {args.out}")
        else:
            sys.stdout.write(buf.getvalue())
        return EXIT_OK

    row = evaluate(args.prr, pt)
    print(f"inputs: prr={fmt(args.prr)} v_mps={fmt(v)} pps={fmt(pps)} n={fmt(args.n)} pt_dbm={fmt(pt)} "
          f"l_bits={fmt(l_bits)} rate_bps={fmt(rate)} h={h} n_pkt={fmt(n_pkt)}")
    for key, value in row.items():
        print(f"{key}={fmt(value)}")
    print("required Eb/N0 per MCS:")
    print("mcs,modulation_order,code_rate,required_ebn0_db,note")
    for index in sorted(mcs_table):
        entry = mcs_table[index]
        value, note = _required_ebn0(args.prr, l_bits, entry.modulation_order)
        print(f"{index},{entry.modulation_order},{fmt(entry.code_rate)},{fmt(value)},{note}")
    return EXIT_OK


# simulate / sweep

def _finish_run(run_dir: Path, rows: list[dict]) -> int:
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"run directory: {run_dir}")
    print(f"points: {len(rows)} ok: {len(rows) - len(failed)} failed: {len(failed)}")
    for r in failed:
        print(f"  point {r['point_index']} failed: {r['error']}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _base_config(args)
    run_dir = _run_dir(args, "simulate")
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, run_dir / "config.yaml")
    rows = run_sweep([cfg], run_dir, ledger=args.ledger, trace=args.trace)
    return _finish_run(run_dir, rows)


def _parse_axis(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise ConfigError(f"axis {text!r} is not of the form field=v1,v2,...")
    name, raw = text.split("=", 1)
    values = [yaml.safe_load(v) for v in raw.split(",") if v.strip()]
    return name.strip(), values


def sweep_axes(cfg: ScenarioConfig, preset: str | None, axis_args: list[str]) -> tuple[ScenarioConfig, dict]:
    """Base config and ordered axes from a preset, explicit ``--axis`` flags, or the config's own sweep."""
    axes: dict[str, list] = {}
    if preset:
        spec = PRESETS[preset]
        cfg = cfg.replace(**spec["fixed"])
        axes.update({k: list(v) for k, v in spec["axes"].items()})
    for text in axis_args or []:
        name, values = _parse_axis(text)
        axes[name] = values
    if not axes:
        axes = {k: list(v) for k, v in cfg.sweep}
    return cfg, axes


def cmd_sweep(args) -> int:
    cfg, axes = sweep_axes(_base_config(args), args.preset, args.axis)
    points = expand_sweep(cfg, list(axes.items())) if axes else [cfg]
    run_dir = _run_dir(args, "sweep")
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, run_dir / "config.yaml")
    rows = run_sweep(points, run_dir, workers=args.workers, ledger=args.ledger,
                     meta={"preset": args.preset, "axes": axes})
    return _finish_run(run_dir, rows)


# report

def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        rows = build_report(run_dir)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out) if args.out else run_dir / "report.csv"
    write_report(out, rows)
    print(format_table(rows))
    print(f"wrote {out}")
    failed = any(r.status == "FAIL" for r in rows)
    skipped = any(r.check == "point_missing" for r in rows)
    if skipped and not args.allow_partial:
        print("some points are missing (rerun the sweep or pass --allow-partial)", file=sys.stderr)
    if args.strict and (failed or (skipped and not args.allow_partial)):
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ruralv2x", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="YAML scenario file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field (repeatable)")
        if seed:
            p.add_argument("--seed", type=int, help="master seed")

    def outputs(p):
        p.add_argument("--out-dir", help=f"parent of the timestamped run directory (default ${OUTPUT_ENV} or ./runs)")
        p.add_argument("--run-dir", help="exact run directory; reusing one resumes a sweep")

    a = sub.add_parser("analytic", help="closed-form distance, attempts, energy and Eb/N0 requirements")
    common(a, seed=False)
    a.add_argument("--prr", type=float, default=0.9)
    a.add_argument("--v-kmh", type=float)
    a.add_argument("--pps", type=float)
    a.add_argument("--n", type=float, default=10.0, help="packet count N in the distance formula")
    a.add_argument("--pt-dbm", type=float)
    a.add_argument("--l-bits", type=int)
    a.add_argument("--rate-bps", type=float)
    a.add_argument("--h-attempts", type=int)
    a.add_argument("--n-pkt", type=float, help="packets in the energy total (default pps * sim_duration)")
    a.add_argument("--grid", action="store_true", help="emit a CSV over PRR x Pt instead")
    a.add_argument("--grid-prr", type=_floats, help="comma-separated PRR values (default 0.1..1.0)")
    a.add_argument("--grid-pt", type=_floats, help="comma-separated Pt values in dBm (default 23..26)")
    a.add_argument("--out", help="grid CSV path (default stdout)")
    a.set_defaults(func=cmd_analytic)

    s = sub.add_parser("simulate", help="run one scenario point")
    common(s)
    outputs(s)
    s.add_argument("--ledger", action="store_true", help="also write the per-attempt ledger")
    s.add_argument("--trace", action="store_true", help="also write the vehicle trace (first replication)")
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="run a parameter grid")
    common(w)
    outputs(w)
    w.add_argument("--preset", choices=sorted(PRESETS))
    w.add_argument("--axis", action="append", metavar="FIELD=V1,V2", help="sweep axis (repeatable)")
    w.add_argument("--workers", type=int, default=1)
    w.add_argument("--ledger", action="store_true")
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="trend checks over a finished sweep")
    r.add_argument("run_dir")
    r.add_argument("--out", help="report CSV path (default <run_dir>/report.csv)")
    r.add_argument("--strict", action="store_true", help=f"exit {EXIT_CHECK} when a check fails")
    r.add_argument("--allow-partial", action="store_true", help="missing points do not fail --strict")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (UsageError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001  top-level guard
        log.debug("unhandled error", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
