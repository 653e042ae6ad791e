"""Replication loop and sweep runner."""
from __future__ import annotations

import csv
import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .analytic import dbm_to_watts
from .channel import ShadowingState, dbm_to_mw, ici_ratio, noise_power_dbm
from .config import ScenarioConfig
from .mac_sps import ResourceGrid, SpsAgent, resolve_slot, select_resources
from .metrics import (DCOMM_COLUMNS, ENERGY_COLUMNS, LEDGER_COLUMNS, PRR_COLUMNS, MetricsAccumulator,
                      first_success_delays, fmt, read_csv, write_csv, write_point_outputs)
from .mobility import make_rsu, spawn_traffic
from .phy_link import load_mcs_table, per_from_sinr_db, rate_for

log = logging.getLogger(__name__)

STREAMS = ("mobility", "shadowing", "sps", "decode")
MANIFEST_COLUMNS = ["point_index", "fingerprint", "point_seed", "status", "params", "outputs", "error"]


class RngStreams:
    """Independent generators keyed by (seed, replication, stream name).

    ``sps_for(node)`` gives each scheduling agent its own child of the sps
    stream, so one agent's choices never shift another agent's draws.
    """

    def __init__(self, seed: int, replication: int):
        self.seed = seed
        self.replication = replication
        for i, name in enumerate(STREAMS):
            ss = np.random.SeedSequence(seed, spawn_key=(replication, i))
            setattr(self, name, np.random.default_rng(ss))

    def sps_for(self, node: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.replication, STREAMS.index("sps"), node))
        return np.random.default_rng(ss)


@dataclass
class _Nodes:
    x0: np.ndarray
    y: np.ndarray
    direction: np.ndarray
    speed: np.ndarray
    pt_dbm: np.ndarray
    road_length: float
    lane: np.ndarray

    def x_at(self, t: float) -> np.ndarray:
        return np.mod(self.x0 + self.direction * self.speed * t, self.road_length)

    def distances(self, x: np.ndarray, a=None, b=None) -> np.ndarray:
        a = slice(None) if a is None else a
        b = slice(None) if b is None else b
        dx = np.abs(x[a][:, None] - x[b][None, :])
        dx = np.minimum(dx, self.road_length - dx)
        return np.hypot(dx, self.y[a][:, None] - self.y[b][None, :])


def _build_nodes(cfg: ScenarioConfig, rng) -> _Nodes:
    vehicles = spawn_traffic(cfg, rng)
    rsu = make_rsu(cfg)
    x = np.array([v.position_x for v in vehicles] + [rsu.position_x])
    y = np.array([v.lateral_y for v in vehicles] + [rsu.lateral_y])
    direction = np.array([v.direction for v in vehicles] + [0], dtype=float)
    speed = np.array([v.speed for v in vehicles] + [0.0])
    pt = np.array([cfg.background_pt_dbm] * len(vehicles) + [cfg.pt_dbm])
    lane = np.array([v.lane for v in vehicles] + [-1], dtype=np.int64)
    return _Nodes(x, y, direction, speed, pt, cfg.road_length, lane)


def run_replication(cfg: ScenarioConfig, rep: int = 0, ledger: list | None = None,
                    trace: list | None = None) -> MetricsAccumulator:
    """Simulate one replication of ``cfg`` and return its metrics.

    Per allocation period: move vehicles, evolve shadowing, run SPS
    (re)selection, register the period's attempts, resolve the RSU's slots
    in order and record outcomes, then feed the period into sensing. Only
    RSU-to-vehicle links are decoded; vehicle broadcasts load the pool.
    The first ``cfg.warmup`` seconds are excluded from the metrics.

    ``ledger`` collects one row per (RSU attempt, receiver); ``trace`` one
    row per vehicle per period.
    """
    mcs = load_mcs_table(cfg.mcs_table)[cfg.mcs_index]
    rate = rate_for(cfg, mcs)
    bits = cfg.packet_bits
    acc = MetricsAccumulator.for_config(cfg, dbm_to_watts(cfg.pt_dbm) * bits / rate, rep)
    period_s = cfg.allocation_period * 1e-3
    n_periods = int(math.floor(cfg.sim_duration / period_s + 1e-9))
    if n_periods == 0:
        return acc

    streams = RngStreams(cfg.seed, rep)
    nodes = _build_nodes(cfg, streams.mobility)
    n_nodes = nodes.x0.size
    rsu = n_nodes - 1
    vehicles = np.arange(rsu)
    h = cfg.harq_max_attempts
    slots = cfg.slots_per_period
    width = cfg.subchannels_per_packet
    slot_s = cfg.slot_s
    gain = cfg.antenna_gain_tx + cfg.antenna_gain_rx
    noise_mw = float(dbm_to_mw(noise_power_dbm(cfg.occupied_bandwidth_hz, cfg.noise_figure)))
    fc_term = 20.0 * np.log10(cfg.fc) + kernels.PL_CONST_DB
    truncated = cfg.harq_mode == "truncated_stop"
    warmup_periods = int(math.ceil(cfg.warmup / period_s - 1e-9))
    # ICI of the RSU's signal at each vehicle; the RSU is static
    ici = ici_ratio(nodes.speed[:rsu], cfg.fc, cfg.scs_khz * 1e3) if cfg.ici_enabled else np.zeros(rsu)

    shadow = ShadowingState(nodes.distances(nodes.x0), streams.shadowing, cfg.shadowing_sigma, cfg.decorr_distance)
    grid = ResourceGrid(slots, cfg.num_subchannels, width, n_nodes, cfg.sensing_window)
    agents = [SpsAgent(i, cfg.keep_probability) for i in range(n_nodes)]
    counter_range = (cfg.reselection_min, cfg.reselection_max)
    sps_rng = [streams.sps_for(i) for i in range(n_nodes)]

    succ_vehicle, succ_slot = [], []
    ep_vehicle, ep_t0 = [], []

    for p in range(n_periods):
        t_period = p * period_s
        x = nodes.x_at(t_period)
        if p > 0:
            shadow.advance(nodes.distances(x), streams.shadowing)
        s_db = shadow.s_db
        if trace is not None:
            for v in vehicles:
                trace.append((t_period, int(v), float(x[v]), int(nodes.lane[v]), float(nodes.speed[v])))

        for agent in agents:
            if agent.reselection_counter <= 0 or not agent.has_selection:
                select_resources(agent, grid, sps_rng[agent.owner], h, cfg.sensing_threshold,
                                 cfg.fallback_fraction, counter_range)
        grid.clear()
        if rsu:
            grid.register(np.repeat(vehicles, h), np.concatenate([a.slots[:h] for a in agents[:rsu]]),
                          np.concatenate([a.starts[:h] for a in agents[:rsu]]))

        measured = p >= warmup_periods
        rsu_agent = agents[rsu]
        t_first = t_period + int(rsu_agent.slots[0]) * slot_s
        d_first = nodes.distances(nodes.x_at(t_first), [rsu], vehicles)[0]
        targets = vehicles[d_first < cfg.max_eval_distance]
        decoded = np.zeros(targets.size, dtype=bool)
        packet_id = p
        for k in range(h):
            if truncated and k > 0 and decoded.all():
                break
            slot = int(rsu_agent.slots[k])
            start = int(rsu_agent.starts[k])
            grid.register(rsu, slot, start)
            if targets.size == 0:
                continue
            t = t_period + slot * slot_s
            xt = nodes.x_at(t)

            def rx_dbm(tx_idx, rx_idx, xt=xt):
                d = np.maximum(nodes.distances(xt, tx_idx, rx_idx), 1.0)
                return (nodes.pt_dbm[tx_idx][:, None] + gain - (20.0 * np.log10(d) + fc_term)
                        - s_db[np.ix_(tx_idx, rx_idx)])

            slot_tx, slot_starts = grid.in_slot(slot)
            sinr_db, busy = resolve_slot(rsu, start, slot_tx, slot_starts, rx_dbm, targets, noise_mw,
                                         ici[targets], width, cfg.interference_scaling)
            if cfg.fixed_per is not None:
                per = np.full(targets.size, float(cfg.fixed_per))
            else:
                per = np.where(busy, 1.0, per_from_sinr_db(sinr_db, mcs, bits, cfg.occupied_bandwidth_hz, rate))
            success = streams.decode.random(targets.size) >= per
            charged = np.ones(targets.size, dtype=bool) if not truncated else ~decoded
            decoded |= success
            global_slot = p * slots + slot
            succ_vehicle.append(targets[success])
            succ_slot.append(np.full(int(success.sum()), global_slot, dtype=np.int64))
            acc.transmissions += int(measured)
            if measured:
                dist = nodes.distances(xt, [rsu], targets)[0]
                acc.record_receptions(dist, success, per)
                acc.attempts += int(charged.sum())
                if ledger is not None:
                    for j, v in enumerate(targets):
                        ledger.append((rep, packet_id, rsu, k + 1, global_slot, start, start + width - 1, int(v),
                                       float(dist[j]), int(success[j]), float(per[j]), int(charged[j])))
        if measured:
            acc.links += targets.size
            acc.delivered += int(decoded.sum())
            ep_vehicle.append(targets)
            ep_t0.append(np.full(targets.size, p * slots + int(rsu_agent.slots[0]), dtype=np.int64))

        with np.errstate(under="ignore"):
            p_mw = 10.0 ** (kernels.rx_power_matrix(x, nodes.y, nodes.pt_dbm, gain, cfg.fc, cfg.road_length,
                                                    s_db) / 10.0)
        grid.sense(p_mw)
        for agent in agents:
            agent.reselection_counter -= 1

    if ep_vehicle:
        delays, censored = first_success_delays(
            np.concatenate(ep_vehicle), np.concatenate(ep_t0),
            np.concatenate(succ_vehicle) if succ_vehicle else np.zeros(0, dtype=np.int64),
            np.concatenate(succ_slot) if succ_slot else np.zeros(0, dtype=np.int64),
            n_periods * slots)
        ev = np.concatenate(ep_vehicle)
        acc.record_delays(delays, nodes.speed[ev], censored)
    return acc


def run_point(cfg: ScenarioConfig, ledger: list | None = None, trace: list | None = None) -> MetricsAccumulator:
    """All replications of one configuration, merged."""
    acc = None
    for rep in range(cfg.replications):
        one = run_replication(cfg, rep, ledger=ledger, trace=trace if rep == 0 else None)
        acc = one if acc is None else acc.merge(one)
    return acc


def write_ledger(path: Path, rows) -> None:
    write_csv(path, LEDGER_COLUMNS, (dict(zip(LEDGER_COLUMNS, r)) for r in rows))


def write_trace(path: Path, rows) -> None:
    cols = ["t", "id", "x", "lane", "speed"]
    write_csv(path, cols, (dict(zip(cols, r)) for r in rows))


def _point_job(args):
    index, cfg, point_dir, with_ledger, with_trace = args
    try:
        ledger = [] if with_ledger else None
        trace = [] if with_trace else None
        acc = run_point(cfg, ledger=ledger, trace=trace)
        write_point_outputs(point_dir, acc, cfg)
        if ledger is not None:
            write_ledger(Path(point_dir) / "ledger.csv", ledger)
        if trace is not None:
            write_trace(Path(point_dir) / "trace.csv", trace)
        return index, "ok", ""
    except Exception as exc:  # recorded in the manifest; other points continue
        log.error("point %d failed: %s", index, exc)
        return index, "failed", "".join(traceback.format_exception_only(type(exc), exc)).strip()


def read_manifest(path: Path) -> list[dict]:
    return read_csv(path) if Path(path).exists() else []


def run_sweep(points: list[ScenarioConfig], run_dir: str | Path, workers: int = 1,
              ledger: bool = False, trace: bool = False, meta: dict | None = None) -> list[dict]:
    """Run every point (all replications), write per-point and merged CSVs plus ``manifest.csv``.

    Points already marked ``ok`` in an existing manifest under ``run_dir``
    (same fingerprint, outputs present) are skipped. ``meta`` (e.g. the
    sweep axes) is stored as ``run.json`` for the report step.
    """
    if not points:
        raise ValueError("no sweep points")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if meta is not None:
        (run_dir / "run.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    done = {row["fingerprint"] for row in read_manifest(run_dir / "manifest.csv")
            if row["status"] == "ok" and (run_dir / row["outputs"] / "energy.csv").exists()}

    rows = []
    jobs = []
    for i, cfg in enumerate(points):
        rel = f"points/{i:03d}_{cfg.fingerprint}"
        rows.append({"point_index": i, "fingerprint": cfg.fingerprint, "point_seed": cfg.point_seed,
                     "status": "ok" if cfg.fingerprint in done else "pending",
                     "params": json.dumps(cfg.to_dict(), sort_keys=True), "outputs": rel, "error": ""})
        if cfg.fingerprint not in done:
            jobs.append((i, cfg, run_dir / rel, ledger, trace))
        else:
            log.info("skipping completed point %d (%s)", i, cfg.fingerprint)

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point_job, jobs))
    else:
        results = [_point_job(job) for job in jobs]
    for index, status, error in results:
        rows[index]["status"] = status
        rows[index]["error"] = error

    write_csv(run_dir / "manifest.csv", MANIFEST_COLUMNS, rows)
    merged = {"prr_by_distance.csv": PRR_COLUMNS, "dcomm.csv": DCOMM_COLUMNS, "energy.csv": ENERGY_COLUMNS}
    for name, columns in merged.items():
        out = []
        for row in rows:
            path = run_dir / row["outputs"] / name
            if row["status"] == "ok" and path.exists():
                out.extend(read_csv(path))
        with open(run_dir / name, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for r in out:
                writer.writerow([r[c] for c in columns])
    return rows
