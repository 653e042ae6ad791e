"""Link budget: rural LOS pathloss, distance-correlated shadowing, noise, ICI."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0


@dataclass(frozen=True)
class LinkGainResult:
    """Gain terms of one link. ``shadowing_db`` enters as a zero-mean loss term."""

    pathloss_db: float
    shadowing_db: float
    gain_total_db: float
    distance_m: float


def pathloss_db(d, fc):
    """Rural LOS pathloss in dB; ``d`` in meters (caller clamps to >= 1 m), ``fc`` in GHz."""
    fc = np.asarray(fc, dtype=float)
    if np.any(fc <= 0):
        raise ValueError("carrier frequency must be positive")
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 20.0 * np.log10(d) + 20.0 * np.log10(fc) + kernels.PL_CONST_DB
    return float(out) if out.ndim == 0 else out


def link_gain(distance_m: float, fc: float, shadowing_db: float = 0.0,
              antenna_gain_tx: float = 3.0, antenna_gain_rx: float = 3.0) -> LinkGainResult:
    pl = pathloss_db(max(distance_m, 1.0), fc)
    total = antenna_gain_tx + antenna_gain_rx - pl - shadowing_db
    return LinkGainResult(pl, shadowing_db, total, distance_m)


def update_shadowing(s_db, delta_d, rng: np.random.Generator, sigma: float = 3.0,
                     decorr_distance: float = 25.0):
    """Advance shadowing samples by a change in link distance ``delta_d``.

    Stationary marginal is Normal(0, sigma^2) in dB. Works on scalars or arrays.
    """
    s = np.asarray(s_db, dtype=float)
    shape = np.broadcast_shapes(s.shape, np.shape(delta_d))
    dd = np.broadcast_to(np.asarray(delta_d, dtype=float), shape)
    if np.any(dd < 0):
        raise ValueError("delta_d must be non-negative")
    flat_s = np.ascontiguousarray(np.broadcast_to(s, shape)).reshape(-1)
    normals = rng.standard_normal(flat_s.size)
    out = kernels.shadowing_step(flat_s, np.ascontiguousarray(dd).reshape(-1), normals, float(sigma),
                                 float(decorr_distance))
    return float(out[0]) if len(shape) == 0 else out.reshape(shape)


class ShadowingState:
    """Shadowing for every ordered (tx, rx) pair, evolved by link-distance changes.

    The state stores the current sample and the link distance at which it was
    drawn, so each update uses ``|d_now - d_last|`` as the AR step.
    """

    def __init__(self, distances: np.ndarray, rng: np.random.Generator, sigma: float = 3.0,
                 decorr_distance: float = 25.0):
        self.sigma = float(sigma)
        self.decorr_distance = float(decorr_distance)
        self.last_distance = np.array(distances, dtype=float)
        self.s_db = self.sigma * rng.standard_normal(self.last_distance.shape)
        np.fill_diagonal(self.s_db, 0.0)

    def advance(self, distances: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        delta = np.abs(distances - self.last_distance)
        normals = rng.standard_normal(delta.shape)
        self.s_db = kernels.shadowing_step(self.s_db, delta, normals, self.sigma, self.decorr_distance)
        np.fill_diagonal(self.s_db, 0.0)
        self.last_distance = np.array(distances, dtype=float)
        return self.s_db


def noise_power_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return THERMAL_NOISE_DBM_HZ + 10.0 * np.log10(bandwidth_hz) + noise_figure_db


def doppler_hz(speed_rel, fc):
    return np.asarray(speed_rel, dtype=float) * fc * 1e9 / SPEED_OF_LIGHT


def ici_ratio(speed_rel, fc: float, scs: float):
    """ICI-to-signal power ratio, (pi * f_d / scs)^2 / 3 (small-ICI approximation)."""
    if scs <= 0:
        raise ValueError("subcarrier spacing must be positive")
    ratio = (np.pi * doppler_hz(speed_rel, fc) / scs) ** 2 / 3.0
    return float(ratio) if np.ndim(ratio) == 0 else ratio


def ici_penalty_db(speed_rel, fc: float, scs: float, snr_db=0.0):
    """Effective SNR loss in dB when the ICI floor ``ratio * P_signal`` joins the noise."""
    snr = 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)
    out = 10.0 * np.log10(1.0 + ici_ratio(speed_rel, fc, scs) * snr)
    return float(out) if np.ndim(out) == 0 else out


def dbm_to_mw(p_dbm):
    return 10.0 ** (np.asarray(p_dbm, dtype=float) / 10.0)


def sinr_db(p_rx_dbm: float, noise_dbm: float, interferers=(), ici_floor: float = 0.0) -> float:
    """SINR in dB; interferers in dBm (``-inf`` means absent), ``ici_floor`` in mW."""
    interference = float(np.sum(dbm_to_mw(np.asarray(list(interferers), dtype=float))))
    denom = float(dbm_to_mw(noise_dbm)) + interference + ici_floor
    return 10.0 * np.log10(float(dbm_to_mw(p_rx_dbm)) / denom)
