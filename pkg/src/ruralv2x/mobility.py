"""Vehicle placement and constant-speed motion on a ring highway."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

KMH = 1.0 / 3.6


@dataclass
class Vehicle:
    id: int
    lane: int
    position_x: float
    direction: int
    speed: float  # m/s
    lateral_y: float = 0.0
    shadowing_state: dict = field(default_factory=dict)
    sps_state: object = None


@dataclass(frozen=True)
class Rsu:
    position_x: float
    lateral_offset: float
    pt_dbm: float
    lateral_y: float = 0.0


def lane_geometry(lane: int, lanes_per_direction: int, lane_width: float) -> tuple[int, float]:
    """(direction, lateral y) of a lane; lanes ``0..n-1`` go +x, the rest -x."""
    if lane < lanes_per_direction:
        return 1, (lane + 0.5) * lane_width
    j = lane - lanes_per_direction
    return -1, -(j + 0.5) * lane_width


def make_rsu(cfg) -> Rsu:
    y = cfg.lanes_per_direction * cfg.lane_width + cfg.rsu_lateral_offset
    return Rsu(cfg.rsu_position_x, cfg.rsu_lateral_offset, cfg.pt_dbm, y)


def draw_speeds(n: int, cfg, rng: np.random.Generator) -> np.ndarray:
    """Truncated-Gaussian speeds in m/s, by rejection."""
    mean, std = cfg.mean_speed_v, cfg.speed_stddev
    lo = max(0.0, mean - 3 * std)
    hi = min(mean + 3 * std, cfg.speed_limit)
    if std == 0:
        return np.full(n, min(mean, cfg.speed_limit) * KMH)
    out = np.empty(0)
    while out.size < n:
        draw = rng.normal(mean, std, size=2 * (n - out.size) + 8)
        out = np.concatenate([out, draw[(draw >= lo) & (draw <= hi)]])
    return out[:n] * KMH


def spawn_traffic(cfg, rng: np.random.Generator) -> list[Vehicle]:
    n = cfg.n_vehicles
    if n == 0:
        return []
    n_lanes = 2 * cfg.lanes_per_direction
    lanes = np.arange(n) % n_lanes
    x = rng.uniform(0.0, cfg.road_length, size=n)
    speeds = draw_speeds(n, cfg, rng)
    vehicles = []
    for i in range(n):
        direction, y = lane_geometry(int(lanes[i]), cfg.lanes_per_direction, cfg.lane_width)
        vehicles.append(Vehicle(i, int(lanes[i]), float(x[i]), direction, float(speeds[i]), y))
    return vehicles


def advance_positions(x, direction, speed, dt: float, road_length: float):
    return np.mod(np.asarray(x) + np.asarray(direction) * np.asarray(speed) * dt, road_length)


def advance(vehicles: list[Vehicle], dt: float, road_length: float = 2000.0) -> list[Vehicle]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return [replace(v, position_x=float((v.position_x + v.direction * v.speed * dt) % road_length))
            for v in vehicles]


def distance(a, b, road_length: float | None = None) -> float:
    """Euclidean distance between ``(x, y)`` points; x wraps when ``road_length`` is given."""
    dx = abs(a[0] - b[0])
    if road_length is not None:
        dx = min(dx, road_length - dx)
    return math.hypot(dx, a[1] - b[1])


def pathloss_distance(d: float) -> float:
    """Distance used inside the pathloss formula (clamped to 1 m)."""
    return max(d, 1.0)


def write_trace_rows(writer, t: float, ids, x, lanes, speeds):
    for i, xi, lane, s in zip(ids, x, lanes, speeds):
        writer.writerow([f"{t:.6f}", int(i), f"{xi:.4f}", int(lane), f"{s:.4f}"])
