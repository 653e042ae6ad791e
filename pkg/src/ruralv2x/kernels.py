"""Hot inner loops of the replication engine.

Each kernel exists twice: a numba ``@njit`` loop and a vectorized numpy
version with the same signature. The module-level names point at the numba
variant unless numba is missing or ``RURALV2X_DISABLE_NUMBA`` is set.
All randomness is drawn by the caller; kernels are deterministic.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

PL_CONST_DB = 32.45


# -- received power ------------------------------------------------------------

def rx_power_matrix_numpy(x, y, pt_dbm, gain_db, fc_ghz, road_length, shadow_db):
    """Received power in dBm for every ordered (tx, rx) pair.

    Distances wrap around the ring road along x; lateral offsets are taken
    as-is and distances are clamped to 1 m. The diagonal is ``-inf``.
    """
    dx = np.abs(x[:, None] - x[None, :])
    dx = np.minimum(dx, road_length - dx)
    dy = y[:, None] - y[None, :]
    d = np.maximum(np.hypot(dx, dy), 1.0)
    pl = 20.0 * np.log10(d) + 20.0 * np.log10(fc_ghz) + PL_CONST_DB
    p = pt_dbm[:, None] + gain_db - pl - shadow_db
    np.fill_diagonal(p, -np.inf)
    return p


@njit(cache=True)
def rx_power_matrix_numba(x, y, pt_dbm, gain_db, fc_ghz, road_length, shadow_db):
    n = x.shape[0]
    out = np.empty((n, n))
    fc_term = 20.0 * np.log10(fc_ghz) + PL_CONST_DB
    for i in range(n):
        for j in range(n):
            if i == j:
                out[i, j] = -np.inf
                continue
            dx = abs(x[i] - x[j])
            if road_length - dx < dx:
                dx = road_length - dx
            dy = y[i] - y[j]
            d = np.hypot(dx, dy)
            if d < 1.0:
                d = 1.0
            out[i, j] = pt_dbm[i] + gain_db - (20.0 * np.log10(d) + fc_term) - shadow_db[i, j]
    return out


# -- correlated shadowing ------------------------------------------------------

def shadowing_step_numpy(s_db, delta_d, normals, sigma_db, decorr_distance):
    """One autoregressive shadowing update per element.

    ``normals`` are standard normal draws; the innovation is scaled by ``sigma_db``.
    """
    a = np.exp(-delta_d / decorr_distance)
    b = np.sqrt(-np.expm1(-2.0 * delta_d / decorr_distance))
    return a * s_db + b * sigma_db * normals


@njit(cache=True)
def shadowing_step_numba(s_db, delta_d, normals, sigma_db, decorr_distance):
    flat_s = s_db.reshape(-1)
    flat_d = delta_d.reshape(-1)
    flat_n = normals.reshape(-1)
    out = np.empty(flat_s.shape[0])
    for k in range(flat_s.shape[0]):
        dd = flat_d[k]
        a = np.exp(-dd / decorr_distance)
        b = np.sqrt(-np.expm1(-2.0 * dd / decorr_distance))
        out[k] = a * flat_s[k] + b * sigma_db * flat_n[k]
    return out.reshape(s_db.shape)


# -- sensing ------------------------------------------------------------------

def sense_grid_numpy(tx, slot, sub_lo, width, p_mw, n_slots, n_subch):
    """Linear received power per (listener, slot, subchannel) for one period.

    ``tx[k]`` occupies subchannels ``sub_lo[k] .. sub_lo[k] + width - 1`` in
    ``slot[k]``; ``p_mw[tx, rx]`` is the linear received power (zero on the
    diagonal, so nobody senses itself).
    """
    n = p_mw.shape[1]
    grid = np.zeros((n, n_slots, n_subch))
    view = grid.transpose(1, 2, 0)
    rows = p_mw[tx]
    for w in range(width):
        np.add.at(view, (slot, sub_lo + w), rows)
    return grid


@njit(cache=True)
def sense_grid_numba(tx, slot, sub_lo, width, p_mw, n_slots, n_subch):
    n = p_mw.shape[1]
    grid = np.zeros((n, n_slots, n_subch))
    for k in range(tx.shape[0]):
        t = tx[k]
        for w in range(width):
            c = sub_lo[k] + w
            for r in range(n):
                grid[r, slot[k], c] += p_mw[t, r]
    return grid


# -- slot SINR -----------------------------------------------------------------

def slot_sinr_numpy(signal_mw, noise_mw, interf_mw, overlap, ici_ratio):
    """Linear SINR per receiver.

    ``interf_mw`` is (n_interferers, n_receivers), scaled row-wise by
    ``overlap``; the ICI floor is ``ici_ratio * signal``.
    """
    interference = overlap @ interf_mw if interf_mw.shape[0] else np.zeros_like(signal_mw)
    return signal_mw / (noise_mw + interference + ici_ratio * signal_mw)


@njit(cache=True)
def slot_sinr_numba(signal_mw, noise_mw, interf_mw, overlap, ici_ratio):
    n = signal_mw.shape[0]
    out = np.empty(n)
    for r in range(n):
        acc = 0.0
        for k in range(interf_mw.shape[0]):
            acc += overlap[k] * interf_mw[k, r]
        out[r] = signal_mw[r] / (noise_mw + acc + ici_ratio[r] * signal_mw[r])
    return out


if USE_NUMBA:
    rx_power_matrix = rx_power_matrix_numba
    shadowing_step = shadowing_step_numba
    sense_grid = sense_grid_numba
    slot_sinr = slot_sinr_numba
else:
    rx_power_matrix = rx_power_matrix_numpy
    shadowing_step = shadowing_step_numpy
    sense_grid = sense_grid_numpy
    slot_sinr = slot_sinr_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
