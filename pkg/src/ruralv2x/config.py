"""Scenario configuration: defaults, validation, YAML loading, sweeps."""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

QPSK_MCS = (8, 9, 10)
QAM16_MCS = (12, 13, 14, 15, 16, 17, 18)
DMRS_RE_BY_SCS = {15: 24, 30: 18}

HARQ_MODES = ("blind_fixed", "truncated_stop")
INTERFERENCE_SCALINGS = ("overlap", "all_or_nothing")
SEED_POLICIES = ("common", "per_point")

# never sweepable: structural or bookkeeping fields
_NOT_SWEEPABLE = {"sweep", "point_seed", "mcs_table", "master_seed"}


class ConfigError(ValueError):
    """Invalid or unreadable configuration. ``field`` names the offending key."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass(frozen=True)
class ScenarioConfig:
    # road and traffic
    road_length: float = 2000.0
    lanes_per_direction: int = 2
    lane_width: float = 4.0
    density_rho: float = 50.0
    mean_speed_v: float = 50.0
    speed_stddev: float = 7.0
    speed_limit: float = 120.0
    # radio
    fc: float = 5.9
    bandwidth: float = 20.0
    noise_figure: float = 9.0
    antenna_gain_tx: float = 3.0
    antenna_gain_rx: float = 3.0
    pt_dbm: float = 23.0
    vehicle_pt_dbm: float | None = 23.0  # None: vehicles follow pt_dbm
    scs_khz: int = 30
    mcs_index: int = 8
    mcs_table: str | None = None
    packet_size_bytes: int = 350
    pps: float = 10.0
    harq_max_attempts: int = 3
    harq_mode: str = "blind_fixed"
    fixed_per: float | None = None
    # resource pool / SPS
    subchannel_prbs: int = 10
    num_subchannels: int = 5
    subchannels_per_packet: int = 2
    keep_probability: float = 0.4
    allocation_period: float = 100.0
    sensing_threshold: float = -110.0
    sensing_window: int = 10
    reselection_min: int = 5
    reselection_max: int = 15
    fallback_fraction: float = 0.2
    dmrs_re_per_slot: int | None = None
    interference_scaling: str = "overlap"
    # channel
    shadowing_sigma: float = 3.0
    decorr_distance: float = 25.0
    ici_enabled: bool = True
    # RSU
    rsu_position_x: float | None = None
    rsu_lateral_offset: float = 5.0
    # run control
    sim_duration: float = 10.0
    warmup: float = 1.0
    replications: int = 1
    master_seed: int = 1
    point_seed: int | None = None
    seed_policy: str = "common"
    prr_bin_width: float = 25.0
    max_eval_distance: float = 500.0
    dcomm_quantile: float = 0.99
    sweep: tuple = ()
    # fields resolved from others because they were left unset
    auto_fields: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        auto = set()
        if self.dmrs_re_per_slot is None:
            object.__setattr__(self, "dmrs_re_per_slot", DMRS_RE_BY_SCS.get(self.scs_khz))
            auto.add("dmrs_re_per_slot")
        if self.rsu_position_x is None:
            object.__setattr__(self, "rsu_position_x", self.road_length / 2.0)
            auto.add("rsu_position_x")
        object.__setattr__(self, "auto_fields", frozenset(auto))
        if isinstance(self.sweep, dict):
            object.__setattr__(self, "sweep", tuple((k, tuple(v)) for k, v in self.sweep.items()))
        else:
            object.__setattr__(self, "sweep", tuple((k, tuple(v)) for k, v in self.sweep))
        validate(self)

    # derived quantities

    @property
    def modulation_order(self) -> int:
        return 4 if self.mcs_index in QPSK_MCS else 16

    @property
    def slot_s(self) -> float:
        return 1e-3 * 15.0 / self.scs_khz

    @property
    def slots_per_period(self) -> int:
        return int(round(self.allocation_period * 1e-3 / self.slot_s))

    @property
    def background_pt_dbm(self) -> float:
        return self.pt_dbm if self.vehicle_pt_dbm is None else self.vehicle_pt_dbm

    @property
    def n_vehicles(self) -> int:
        return int(round(self.density_rho * self.road_length / 1000.0))

    @property
    def packet_bits(self) -> int:
        return 8 * self.packet_size_bytes

    @property
    def occupied_bandwidth_hz(self) -> float:
        return self.subchannels_per_packet * self.subchannel_prbs * 12 * self.scs_khz * 1e3

    @property
    def power_density_dbm_per_mhz(self) -> float:
        return self.pt_dbm - 10.0 * math.log10(self.bandwidth)

    @property
    def seed(self) -> int:
        """Seed feeding the replication RNG streams."""
        if self.seed_policy == "per_point" and self.point_seed is not None:
            return self.point_seed
        return self.master_seed

    def to_dict(self, resolved: bool = True) -> dict[str, Any]:
        """Plain mapping of all settings; ``resolved=False`` keeps derived fields unset."""
        out = {}
        for f in fields(self):
            if not f.init:
                continue
            value = getattr(self, f.name)
            if not resolved and f.name in self.auto_fields:
                value = None
            if f.name == "sweep":
                value = {k: list(v) for k, v in value}
            out[f.name] = value
        return out

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ScenarioConfig":
        """``dataclasses.replace`` that re-resolves fields derived from others."""
        for name in self.auto_fields:
            changes.setdefault(name, None)
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(ScenarioConfig) if f.init}
_INT_FIELDS = {n for n, f in _FIELDS.items() if f.type in ("int", "int | None")}
_FLOAT_FIELDS = {n for n, f in _FIELDS.items() if f.type in ("float", "float | None")}
_BOOL_FIELDS = {n for n, f in _FIELDS.items() if f.type == "bool"}
_STR_FIELDS = {n for n, f in _FIELDS.items() if f.type in ("str", "str | None")}

SWEEPABLE_FIELDS = frozenset(set(_FIELDS) - _NOT_SWEEPABLE)


def _fail(name: str, rule: str):
    raise ConfigError(f"{name}: {rule}", field=name)


def _check_types(cfg: ScenarioConfig):
    for name in _FIELDS:
        value = getattr(cfg, name)
        if value is None:
            if "None" not in _FIELDS[name].type:
                _fail(name, "must not be null")
            continue
        if name in _BOOL_FIELDS:
            if not isinstance(value, bool):
                _fail(name, f"expected a boolean, got {value!r}")
        elif name in _INT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                _fail(name, f"expected an integer, got {value!r}")
        elif name in _FLOAT_FIELDS:
            if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
                _fail(name, f"expected a number, got {value!r}")
            if not math.isfinite(value):
                _fail(name, "must be finite")
        elif name in _STR_FIELDS and not isinstance(value, str):
            _fail(name, f"expected a string, got {value!r}")


def validate(cfg: ScenarioConfig) -> None:
    """Raise :class:`ConfigError` naming the first violated rule."""
    _check_types(cfg)
    positive = (
        "road_length", "lanes_per_direction", "lane_width", "fc", "bandwidth", "packet_size_bytes",
        "pps", "subchannel_prbs", "num_subchannels", "subchannels_per_packet", "allocation_period",
        "shadowing_sigma", "decorr_distance", "replications", "prr_bin_width", "max_eval_distance",
        "sensing_window", "speed_limit",
    )
    for name in positive:
        if getattr(cfg, name) <= 0:
            _fail(name, "must be strictly positive")
    for name in ("density_rho", "mean_speed_v", "speed_stddev", "sim_duration", "warmup",
                 "rsu_lateral_offset"):
        if getattr(cfg, name) < 0:
            _fail(name, "must be non-negative")
    if not 0.0 <= cfg.keep_probability <= 1.0:
        _fail("keep_probability", "must lie in [0, 1]")
    if not 0.0 < cfg.fallback_fraction <= 1.0:
        _fail("fallback_fraction", "must lie in (0, 1]")
    if not 0.0 < cfg.dcomm_quantile <= 1.0:
        _fail("dcomm_quantile", "must lie in (0, 1]")
    if cfg.fixed_per is not None and not 0.0 <= cfg.fixed_per <= 1.0:
        _fail("fixed_per", "must lie in [0, 1]")
    if cfg.harq_max_attempts < 1:
        _fail("harq_max_attempts", "H must be >= 1")
    if cfg.subchannels_per_packet > cfg.num_subchannels:
        _fail("subchannels_per_packet", "must not exceed num_subchannels")
    if cfg.scs_khz not in DMRS_RE_BY_SCS:
        _fail("scs_khz", "must be 15 or 30")
    if cfg.mcs_index not in QPSK_MCS + QAM16_MCS:
        _fail("mcs_index", "must be one of 8, 9, 10, 12..18")
    if cfg.dmrs_re_per_slot is None or not 0 <= cfg.dmrs_re_per_slot < 12 * 14:
        _fail("dmrs_re_per_slot", "must be an integer in [0, 168)")
    if cfg.harq_mode not in HARQ_MODES:
        _fail("harq_mode", f"must be one of {HARQ_MODES}")
    if cfg.interference_scaling not in INTERFERENCE_SCALINGS:
        _fail("interference_scaling", f"must be one of {INTERFERENCE_SCALINGS}")
    if cfg.seed_policy not in SEED_POLICIES:
        _fail("seed_policy", f"must be one of {SEED_POLICIES}")
    if not 1 <= cfg.reselection_min <= cfg.reselection_max:
        _fail("reselection_min", "need 1 <= reselection_min <= reselection_max")
    if cfg.speed_stddev > 0 and cfg.mean_speed_v - 3 * cfg.speed_stddev > cfg.speed_limit:
        _fail("mean_speed_v", "speed window lies entirely above speed_limit")
    if not 0.0 <= cfg.rsu_position_x < cfg.road_length:
        _fail("rsu_position_x", "must lie within [0, road_length)")
    period_s = cfg.allocation_period * 1e-3
    if abs(period_s * cfg.pps - 1.0) > 1e-9:
        _fail("pps", "one packet per allocation period is required (pps * allocation_period = 1 s)")
    slots = period_s / (1e-3 * 15.0 / cfg.scs_khz)
    if abs(slots - round(slots)) > 1e-9:
        _fail("allocation_period", "must be a whole number of slots")
    if cfg.harq_max_attempts > round(slots):
        _fail("harq_max_attempts", "cannot exceed the number of slots in one allocation period")
    if cfg.max_eval_distance > cfg.road_length / 2.0:
        _fail("max_eval_distance", "must not exceed half the (ring) road length")
    seen = set()
    for name, values in cfg.sweep:
        if name not in SWEEPABLE_FIELDS:
            _fail("sweep", f"field {name!r} is not sweepable")
        if name in seen:
            _fail("sweep", f"duplicate axis {name!r}")
        if len(values) == 0:
            _fail("sweep", f"axis {name!r} has no values")
        seen.add(name)


def _from_mapping(data: dict[str, Any]) -> ScenarioConfig:
    unknown = sorted(set(data) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}", field=unknown[0])
    kwargs = dict(data)
    if "sweep" in kwargs:
        sweep = kwargs["sweep"] or {}
        if not isinstance(sweep, dict) or not all(isinstance(v, list) for v in sweep.values()):
            raise ConfigError("sweep: expected a mapping of field -> list of values", field="sweep")
        kwargs["sweep"] = tuple((k, tuple(v)) for k, v in sweep.items())
    for name in _FLOAT_FIELDS:
        value = kwargs.get(name)
        if isinstance(value, int) and not isinstance(value, bool):
            kwargs[name] = float(value)
    try:
        return ScenarioConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def parse_override(item: str) -> tuple[str, Any]:
    """``"key=value"`` -> ``(key, value)`` with YAML scalar typing."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}", field=key) from exc
    return key, value


def load_config(path: str | Path | None = None, overrides: Iterable[str] | dict | None = None) -> ScenarioConfig:
    """Read a YAML config, apply ``key=value`` overrides, fill defaults and validate.

    Unknown keys are rejected. ``path=None`` starts from the defaults.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a key-value mapping")
        data.update(loaded)
    if overrides:
        items = overrides.items() if isinstance(overrides, dict) else map(parse_override, overrides)
        for key, value in items:
            data[key] = value
    return _from_mapping(data)


def dump_config(cfg: ScenarioConfig, path: str | Path | None = None) -> str:
    text = yaml.safe_dump(cfg.to_dict(resolved=False), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text


def derive_point_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1)[0])


def expand_sweep(config: ScenarioConfig, axes: Sequence[tuple[str, Sequence]] | None = None) -> list[ScenarioConfig]:
    """Cartesian product of ``axes`` over ``config`` (row-major, first axis slowest).

    ``axes=None`` uses the axes stored in the config. Every point carries a
    seed derived from ``(master_seed, point index)``.
    """
    if axes is None:
        axes = config.sweep
    axes = [(name, tuple(values)) for name, values in axes]
    names = [name for name, _ in axes]
    for name, values in axes:
        if name not in SWEEPABLE_FIELDS:
            raise ConfigError(f"sweep: field {name!r} is not sweepable", field=name)
        if not values:
            raise ConfigError(f"sweep: axis {name!r} has no values", field=name)
    if len(set(names)) != len(names):
        raise ConfigError("sweep: duplicate axis field", field="sweep")
    points = []
    for index, combo in enumerate(itertools.product(*(values for _, values in axes))):
        changes = dict(zip(names, combo))
        for name in list(changes):
            if name in _FLOAT_FIELDS and isinstance(changes[name], int):
                changes[name] = float(changes[name])
        changes["sweep"] = ()
        changes["point_seed"] = derive_point_seed(config.master_seed, index)
        points.append(config.replace(**changes))
    return points
