"""Trend checks over completed sweep outputs.

Each row compares one group of sweep points against an acceptance
threshold and carries PASS, FAIL or SKIPPED. Points that the sweep was
meant to contain (``run.json`` axes) but that have no outputs are listed as
SKIPPED.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import fmt, read_csv, write_csv

REPORT_COLUMNS = ["check", "group", "value", "threshold", "status", "detail"]
PRR_AVG_MAX_M = 375.0
PRR_GAIN_MIN = 0.02
ENERGY_RATIO_RANGE = (1.7, 2.3)
SPEED_RATIO_RANGE = (1.6, 2.8)
SCS_BIN_SHARE_MIN = 0.7
# fields never used to tell groups apart
_IGNORED = {"point_seed", "sweep"}


@dataclass
class Point:
    fingerprint: str
    params: dict
    prr: list[dict]
    dcomm: dict | None
    energy: dict | None


@dataclass
class CheckRow:
    check: str
    group: str
    value: float | str
    threshold: str
    status: str
    detail: str = ""

    def as_dict(self) -> dict:
        value = self.value if isinstance(self.value, str) else fmt(self.value)
        return {"check": self.check, "group": self.group, "value": value, "threshold": self.threshold,
                "status": self.status, "detail": self.detail}


def load_points(run_dir: Path) -> tuple[list[Point], list[dict]]:
    """Completed points of a sweep directory, plus manifest rows that did not complete."""
    run_dir = Path(run_dir)
    manifest = run_dir / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.csv under {run_dir}")
    points, incomplete = [], []
    for row in read_csv(manifest):
        out = run_dir / row["outputs"]
        files = [out / n for n in ("prr_by_distance.csv", "dcomm.csv", "energy.csv")]
        if row["status"] != "ok" or not all(f.exists() for f in files):
            incomplete.append(row)
            continue
        dcomm = read_csv(files[1])
        energy = read_csv(files[2])
        points.append(Point(row["fingerprint"], json.loads(row["params"]), read_csv(files[0]),
                            dcomm[0] if dcomm else None, energy[0] if energy else None))
    return points, incomplete


def expected_combos(run_dir: Path) -> list[dict]:
    meta = Path(run_dir) / "run.json"
    if not meta.exists():
        return []
    axes = json.loads(meta.read_text()).get("axes", {})
    names = list(axes)
    return [dict(zip(names, combo)) for combo in itertools.product(*(axes[n] for n in names))]


def _num(x) -> float:
    return math.nan if x in ("", None) else float(x)


def bin_averaged_prr(point: Point, max_m: float = PRR_AVG_MAX_M) -> float:
    vals = [_num(r["prr"]) for r in point.prr if _num(r["bin_high_m"]) <= max_m + 1e-9]
    vals = [v for v in vals if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


def _group(points: list[Point], axis: str, drop: tuple[str, ...] = ()) -> dict[str, dict[float, Point]]:
    """Points grouped by every parameter except ``axis`` (and ``drop``), keyed by the axis value."""
    groups: dict[str, dict[float, Point]] = {}
    skip = _IGNORED | {axis} | set(drop)
    for p in points:
        key = json.dumps({k: v for k, v in sorted(p.params.items()) if k not in skip}, sort_keys=True)
        groups.setdefault(key, {})[float(p.params[axis])] = p
    return groups


def _label(point: Point, *names: str) -> str:
    return " ".join(f"{n}={fmt(point.params[n])}" for n in names)


def _status(ok: bool, *values: float) -> str:
    if any(math.isnan(v) for v in values):
        return "SKIPPED"
    return "PASS" if ok else "FAIL"


def check_prr_vs_pt(points: list[Point]) -> list[CheckRow]:
    rows = []
    for members in _group(points, "pt_dbm").values():
        if len(members) < 2:
            continue
        pts = sorted(members)
        avg = [bin_averaged_prr(members[p]) for p in pts]
        any_p = members[pts[0]]
        label = _label(any_p, "density_rho", "scs_khz", "mcs_index", "mean_speed_v")
        ok = all(b >= a for a, b in zip(avg, avg[1:]))
        rows.append(CheckRow("prr_nondecreasing_in_pt", label, avg[-1] - avg[0], "each step >= 0", _status(ok, *avg),
                             " ".join(f"{fmt(p)}:{a:.4f}" for p, a in zip(pts, avg))))
        if 23.0 in members and 26.0 in members and float(any_p.params["density_rho"]) == 50.0:
            gain = bin_averaged_prr(members[26.0]) - bin_averaged_prr(members[23.0])
            rows.append(CheckRow("prr_gain_23_to_26", label, gain, f">= {PRR_GAIN_MIN}",
                                 _status(gain >= PRR_GAIN_MIN, gain)))
    return rows


def energy_ratio(points_low: Point, points_high: Point) -> float:
    return _num(points_high.energy["total_joules"]) / _num(points_low.energy["total_joules"])


def check_energy(points: list[Point]) -> list[CheckRow]:
    rows = []
    lo, hi = ENERGY_RATIO_RANGE
    for members in _group(points, "pt_dbm").values():
        if 23.0 not in members or 26.0 not in members:
            continue
        a, b = members[23.0], members[26.0]
        label = _label(a, "density_rho", "scs_khz", "mcs_index", "mean_speed_v")
        if a.energy is None or b.energy is None or _num(a.energy["total_joules"]) == 0:
            rows.append(CheckRow("energy_ratio_26_over_23", label, "", f"[{lo}, {hi}]", "SKIPPED", "no energy"))
            continue
        r = energy_ratio(a, b)
        att = (_num(a.energy["total_attempts"]), _num(b.energy["total_attempts"]))
        rows.append(CheckRow("energy_ratio_26_over_23", label, r, f"[{lo}, {hi}]", _status(lo <= r <= hi),
                             f"attempts {att[0]:.0f} -> {att[1]:.0f}"))
    return rows


def check_dcomm(points: list[Point]) -> list[CheckRow]:
    rows = []
    for members in _group(points, "pt_dbm").values():
        if len(members) < 2:
            continue
        pts = sorted(members)
        d = [_num(members[p].dcomm["dcomm_p99_m"]) if members[p].dcomm else math.nan for p in pts]
        label = _label(members[pts[0]], "mean_speed_v", "density_rho", "scs_khz")
        ok = all(b < a for a, b in zip(d, d[1:]))
        rows.append(CheckRow("dcomm_decreasing_in_pt", label, d[0] - d[-1], "each step < 0", _status(ok, *d),
                             " ".join(f"{fmt(p)}:{x:.3f}" for p, x in zip(pts, d))))
    lo, hi = SPEED_RATIO_RANGE
    for members in _group(points, "mean_speed_v").values():
        if 50.0 not in members or 110.0 not in members:
            continue
        a, b = members[50.0], members[110.0]
        if not (a.dcomm and b.dcomm):
            continue
        r = _num(b.dcomm["dcomm_p99_m"]) / _num(a.dcomm["dcomm_p99_m"])
        rows.append(CheckRow("dcomm_ratio_110_over_50", _label(a, "pt_dbm", "density_rho", "scs_khz"), r,
                             f"[{lo}, {hi}]", _status(lo <= r <= hi, r)))
    return rows


def scs_bin_share(p15: Point, p30: Point) -> tuple[float, int]:
    """Share of distance bins populated in both runs where PRR(30 kHz) >= PRR(15 kHz)."""
    a = {r["bin_low_m"]: _num(r["prr"]) for r in p15.prr if int(r["receptions"]) > 0}
    b = {r["bin_low_m"]: _num(r["prr"]) for r in p30.prr if int(r["receptions"]) > 0}
    common = sorted(set(a) & set(b), key=float)
    if not common:
        return math.nan, 0
    wins = sum(b[k] >= a[k] for k in common)
    return wins / len(common), len(common)


def check_scs(points: list[Point]) -> list[CheckRow]:
    rows = []
    for members in _group(points, "scs_khz", drop=("dmrs_re_per_slot",)).values():
        if 15.0 not in members or 30.0 not in members:
            continue
        share, n = scs_bin_share(members[15.0], members[30.0])
        rows.append(CheckRow("prr_scs30_vs_scs15", _label(members[30.0], "pt_dbm", "density_rho", "mean_speed_v"),
                             share, f">= {SCS_BIN_SHARE_MIN} of bins",
                             _status(share >= SCS_BIN_SHARE_MIN, share), f"{n} bins"))
    return rows


def build_report(run_dir: str | Path) -> list[CheckRow]:
    run_dir = Path(run_dir)
    points, incomplete = load_points(run_dir)
    rows: list[CheckRow] = []
    for row in incomplete:
        params = json.loads(row["params"])
        rows.append(CheckRow("point_missing", f"point {row['point_index']}", "", "status ok", "SKIPPED",
                             f"status={row['status']} pt_dbm={params.get('pt_dbm')} rho={params.get('density_rho')}"))
    have = [p.params for p in points]
    for combo in expected_combos(run_dir):
        present = any(all(_same(params.get(k), v) for k, v in combo.items()) for params in have)
        listed = any(all(_same(json.loads(r["params"]).get(k), v) for k, v in combo.items()) for r in incomplete)
        if not present and not listed:
            rows.append(CheckRow("point_missing", " ".join(f"{k}={v}" for k, v in combo.items()), "",
                                 "present", "SKIPPED", "not in manifest"))
    rows += check_prr_vs_pt(points)
    rows += check_energy(points)
    rows += check_dcomm(points)
    rows += check_scs(points)
    return rows


def _same(a, b) -> bool:
    try:
        return float(a) == float(b)
    except (TypeError, ValueError):
        return a == b


def write_report(path: str | Path, rows: list[CheckRow]) -> None:
    write_csv(path, REPORT_COLUMNS, (r.as_dict() for r in rows))


def format_table(rows: list[CheckRow]) -> str:
    cells = [REPORT_COLUMNS] + [[r.as_dict()[c] for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(str(c[i])) for c in cells) for i in range(len(REPORT_COLUMNS))]
    return "\n".join("  ".join(str(c[i]).ljust(widths[i]) for i in range(len(widths))).rstrip() for c in cells)
