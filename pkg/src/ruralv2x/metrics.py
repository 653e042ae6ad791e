"""Outcome accumulation, measured safety distance, energy tables and CSV output."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

PRR_COLUMNS = ["scenario_fingerprint", "pt_dbm", "scs_khz", "mcs", "rho", "v_kmh",
               "bin_low_m", "bin_high_m", "receptions", "successes", "prr"]
DCOMM_COLUMNS = ["scenario_fingerprint", "pt_dbm", "v_kmh", "rho", "dcomm_p99_m", "dcomm_mean_m",
                 "censored_fraction"]
ENERGY_COLUMNS = ["scenario_fingerprint", "pt_dbm", "rho", "total_attempts", "total_joules",
                  "joules_per_delivered"]
LEDGER_COLUMNS = ["replication", "packet_id", "tx", "attempt", "slot", "sub_lo", "sub_hi", "rx", "distance_m",
                  "success", "per", "charged"]


def fmt(x) -> str:
    """Stable text form for CSV cells: integers verbatim, floats with 10 significant digits."""
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.10g}"


@dataclass
class MetricsAccumulator:
    """Counters for one replication, or a merge of several.

    ``attempts`` counts transmissions charged to RSU-to-vehicle links; energy is
    derived from it, so ``energy_joules == attempts * energy_per_attempt``.
    """

    bin_width: float
    n_bins: int
    energy_per_attempt: float
    receptions: np.ndarray = None
    successes: np.ndarray = None
    per_sum: np.ndarray = None
    attempts: int = 0
    transmissions: int = 0
    links: int = 0
    delivered: int = 0
    delay_slots: np.ndarray = None
    delay_speed: np.ndarray = None
    censored: int = 0
    dropped: int = 0
    replications: tuple = ()

    def __post_init__(self):
        if self.receptions is None:
            self.receptions = np.zeros(self.n_bins, dtype=np.int64)
            self.successes = np.zeros(self.n_bins, dtype=np.int64)
            self.per_sum = np.zeros(self.n_bins)
        if self.delay_slots is None:
            self.delay_slots = np.zeros(0, dtype=np.int64)
            self.delay_speed = np.zeros(0)

    @classmethod
    def for_config(cls, cfg, energy_per_attempt: float, replication: int | None = None) -> "MetricsAccumulator":
        n_bins = int(math.ceil(cfg.max_eval_distance / cfg.prr_bin_width - 1e-9))
        reps = () if replication is None else (replication,)
        return cls(cfg.prr_bin_width, n_bins, energy_per_attempt, replications=reps)

    @property
    def max_distance(self) -> float:
        return self.n_bins * self.bin_width

    def record_reception(self, distance: float, success: bool, analog_per: float):
        self.record_receptions(np.array([distance]), np.array([success]), np.array([analog_per]))

    def record_receptions(self, distance, success, analog_per):
        distance = np.asarray(distance, dtype=float)
        idx = np.floor(distance / self.bin_width).astype(np.int64)
        ok = (distance >= 0) & (idx < self.n_bins)
        n_bad = int(np.count_nonzero(~ok))
        if n_bad:
            self.dropped += n_bad
            log.debug("dropped %d receptions outside [0, %g) m", n_bad, self.max_distance)
        idx = idx[ok]
        np.add.at(self.receptions, idx, 1)
        np.add.at(self.successes, idx, np.asarray(success, dtype=np.int64)[ok])
        np.add.at(self.per_sum, idx, np.asarray(analog_per, dtype=float)[ok])

    def record_delays(self, delays_slots, speeds, censored_mask=None):
        """Per-episode first-success delays (slots) and the receiving vehicle's speed (m/s)."""
        d = np.concatenate([self.delay_slots, np.asarray(delays_slots, dtype=np.int64).ravel()])
        v = np.concatenate([self.delay_speed, np.broadcast_to(np.asarray(speeds, dtype=float), d.shape[0] - self.delay_slots.size)])
        self.delay_slots, self.delay_speed = _canonical(d, v)
        if censored_mask is not None:
            self.censored += int(np.count_nonzero(censored_mask))

    @property
    def energy_joules(self) -> float:
        return self.attempts * self.energy_per_attempt

    @property
    def episodes(self) -> int:
        return int(self.delay_slots.size)

    def prr(self) -> np.ndarray:
        """PRR per bin; ``nan`` where nothing was received."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.receptions > 0, self.successes / np.maximum(self.receptions, 1), np.nan)

    def bin_edges(self, k: int) -> tuple[float, float]:
        return k * self.bin_width, (k + 1) * self.bin_width

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        if (self.n_bins, self.bin_width) != (other.n_bins, other.bin_width):
            raise ValueError("cannot merge accumulators with different bin layouts")
        if not math.isclose(self.energy_per_attempt, other.energy_per_attempt, rel_tol=1e-12):
            raise ValueError("cannot merge accumulators with different per-attempt energy")
        return MetricsAccumulator(
            self.bin_width, self.n_bins, self.energy_per_attempt,
            self.receptions + other.receptions, self.successes + other.successes,
            self.per_sum + other.per_sum,
            self.attempts + other.attempts, self.transmissions + other.transmissions,
            self.links + other.links, self.delivered + other.delivered,
            *_canonical(np.concatenate([self.delay_slots, other.delay_slots]),
                        np.concatenate([self.delay_speed, other.delay_speed])),
            self.censored + other.censored,
            self.dropped + other.dropped, tuple(sorted(self.replications + other.replications)),
        )


def _canonical(delays, speeds):
    # order-free representation so merging is commutative
    order = np.lexsort((speeds, delays))
    return delays[order], speeds[order]


@dataclass(frozen=True)
class DcommResult:
    quantile_m: float
    mean_m: float
    censored_fraction: float


def measured_d_comm(delays, v: float, slot_s: float, q: float = 0.99, censored: int = 0) -> DcommResult:
    """Travel distance during the first-success delay: quantile and mean variants.

    ``delays`` are per-episode delays in slots (censored episodes already
    carry their horizon). ``v`` in m/s is either one speed or one per episode.
    """
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0:
        raise ValueError("no delivery episodes")
    travel = delays * slot_s * np.broadcast_to(np.asarray(v, dtype=float), delays.shape)
    return DcommResult(float(np.quantile(travel, q)), float(travel.mean()), censored / delays.size)


def first_success_delays(episode_vehicle, episode_t0, success_vehicle, success_slot, horizon_slot: int):
    """Delay from each episode start to the same vehicle's next success.

    Returns ``(delays, censored_mask)``; censored episodes get
    ``horizon_slot - t0``.
    """
    ev = np.asarray(episode_vehicle, dtype=np.int64)
    et = np.asarray(episode_t0, dtype=np.int64)
    sv = np.asarray(success_vehicle, dtype=np.int64)
    st = np.asarray(success_slot, dtype=np.int64)
    span = int(horizon_slot) + 1
    keys = np.sort(sv * span + st)
    q = ev * span + et
    pos = np.searchsorted(keys, q, side="left")
    found = pos < keys.size
    hit = np.zeros(ev.size, dtype=bool)
    nxt = np.zeros(ev.size, dtype=np.int64)
    nxt[found] = keys[pos[found]]
    hit[found] = (nxt[found] // span) == ev[found]
    delays = np.where(hit, nxt % span - et, horizon_slot - et)
    return delays, ~hit


def energy_report(acc: MetricsAccumulator, cfg) -> dict:
    per_delivered = acc.energy_joules / acc.delivered if acc.delivered else math.nan
    return {"scenario_fingerprint": cfg.fingerprint, "pt_dbm": cfg.pt_dbm, "rho": cfg.density_rho,
            "total_attempts": acc.attempts, "total_joules": acc.energy_joules,
            "joules_per_delivered": per_delivered}


def prr_rows(acc: MetricsAccumulator, cfg) -> list[dict]:
    rows = []
    for k in range(acc.n_bins):
        if acc.receptions[k] == 0:
            continue
        lo, hi = acc.bin_edges(k)
        rows.append({"scenario_fingerprint": cfg.fingerprint, "pt_dbm": cfg.pt_dbm, "scs_khz": cfg.scs_khz,
                     "mcs": cfg.mcs_index, "rho": cfg.density_rho, "v_kmh": cfg.mean_speed_v,
                     "bin_low_m": lo, "bin_high_m": hi, "receptions": int(acc.receptions[k]),
                     "successes": int(acc.successes[k]), "prr": acc.successes[k] / acc.receptions[k]})
    return rows


def dcomm_row(acc: MetricsAccumulator, cfg) -> dict:
    row = {"scenario_fingerprint": cfg.fingerprint, "pt_dbm": cfg.pt_dbm, "v_kmh": cfg.mean_speed_v,
           "rho": cfg.density_rho, "dcomm_p99_m": math.nan, "dcomm_mean_m": math.nan,
           "censored_fraction": math.nan}
    if acc.episodes:
        res = measured_d_comm(acc.delay_slots, acc.delay_speed, cfg.slot_s, cfg.dcomm_quantile, acc.censored)
        row.update(dcomm_p99_m=res.quantile_m, dcomm_mean_m=res.mean_m, censored_fraction=res.censored_fraction)
    return row


def write_csv(path: Path, columns: list[str], rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(row[c]) for c in columns])
    Path(path).write_text(buf.getvalue())


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_point_outputs(out_dir: Path, acc: MetricsAccumulator, cfg) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"prr": out_dir / "prr_by_distance.csv", "dcomm": out_dir / "dcomm.csv",
             "energy": out_dir / "energy.csv"}
    write_csv(paths["prr"], PRR_COLUMNS, prr_rows(acc, cfg))
    write_csv(paths["dcomm"], DCOMM_COLUMNS, [dcomm_row(acc, cfg)])
    write_csv(paths["energy"], ENERGY_COLUMNS, [energy_report(acc, cfg)])
    return paths
