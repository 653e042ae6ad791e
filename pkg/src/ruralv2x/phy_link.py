"""Link abstraction: Q-function, BER/PER for QPSK and 16-QAM, data rate, decoding.

The BER expressions are the uncoded Gaussian-tail forms; coding enters only
through the code rate in the data rate.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import special

QAM16_BER_CEILING = 3.0 / 8.0 * 0.5
QPSK_BER_CEILING = 0.5


@dataclass(frozen=True)
class McsEntry:
    index: int
    modulation_order: int
    code_rate: float

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.modulation_order)))


@dataclass(frozen=True)
class LinkBudget:
    eb_n0_db: float
    ber: float
    per: float
    prr: float
    rate_bps: float
    packet_bits: int


def load_mcs_table(path: str | Path | None = None) -> dict[int, McsEntry]:
    """Read ``index,modulation_order,code_rate`` rows (``#`` lines are comments).

    ``path=None`` loads the table shipped with the package.
    """
    if path is None:
        text = resources.files("ruralv2x").joinpath("data/mcs_table.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = csv.DictReader(line for line in text.splitlines() if line.strip() and not line.startswith("#"))
    table = {}
    for row in rows:
        entry = McsEntry(int(row["index"]), int(row["modulation_order"]), float(row["code_rate"]))
        if entry.modulation_order not in (4, 16):
            raise ValueError(f"MCS {entry.index}: unsupported modulation order {entry.modulation_order}")
        if not 0.0 < entry.code_rate <= 1.0:
            raise ValueError(f"MCS {entry.index}: code rate must lie in (0, 1]")
        table[entry.index] = entry
    for order in (4, 16):
        rates = [table[i].code_rate for i in sorted(table) if table[i].modulation_order == order]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise ValueError(f"code rates must increase with MCS index within modulation order {order}")
    return table


def q_function(x):
    """Standard normal upper-tail probability, Q(x) = erfc(x / sqrt 2) / 2."""
    out = 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def q_inverse(p):
    """Inverse of :func:`q_function` on (0, 1).

    Closed-form start from ``erfcinv`` followed by two Newton steps on Q.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)) or np.any(np.isnan(p)):
        raise ValueError("q_inverse needs 0 < p < 1")
    x = math.sqrt(2.0) * special.erfcinv(2.0 * p)
    for _ in range(2):
        # dQ/dx = -phi(x)
        phi = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        step = (q_function(x) - p) / phi
        x = np.where(phi > 0, x + step, x)
    return float(x) if np.ndim(x) == 0 else x


def _check_order(m: int):
    if m not in (4, 16):
        raise ValueError(f"unsupported modulation order {m}; expected 4 or 16")


def ber_from_ebn0(eb_n0_linear, m: int):
    _check_order(m)
    g = np.asarray(eb_n0_linear, dtype=float)
    if np.any(g < 0):
        raise ValueError("Eb/N0 must be non-negative")
    if m == 4:
        return q_function(np.sqrt(g))
    return 3.0 / 8.0 * q_function(np.sqrt(0.8 * g))


def ebn0_from_ber(ber, m: int):
    """Eb/N0 (linear) that yields ``ber``; raises when the target is above the modulation ceiling."""
    _check_order(m)
    b = np.asarray(ber, dtype=float)
    ceiling = QPSK_BER_CEILING if m == 4 else QAM16_BER_CEILING
    if np.any((b <= 0.0) | (b >= ceiling)):
        raise ValueError(f"BER must lie in (0, {ceiling}) for M={m}")
    if m == 4:
        return q_inverse(b) ** 2
    return 1.25 * q_inverse(8.0 / 3.0 * b) ** 2


def per_from_ber(ber, packet_bits: int):
    """PER = 1 - (1 - BER)^L, evaluated in the log domain."""
    b = np.asarray(ber, dtype=float)
    with np.errstate(divide="ignore"):
        out = -np.expm1(packet_bits * np.log1p(-b))
    return float(out) if np.ndim(out) == 0 else out


def ber_from_prr(prr, packet_bits: int):
    """Inverse of :func:`per_from_ber` written in PRR: 1 - PRR^(1/L)."""
    p = np.asarray(prr, dtype=float)
    with np.errstate(divide="ignore"):
        out = -np.expm1(np.log(p) / packet_bits)
    return float(out) if np.ndim(out) == 0 else out


def n_data_symbols(dmrs_re_per_slot: int) -> float:
    """Data symbols per slot: 14 minus the DMRS share of one PRB (12 REs per symbol)."""
    return 14.0 - dmrs_re_per_slot / 12.0


def data_rate_bps(n_sub_prb, bits_per_symbol, rc, scs_hz, n_symbols) -> float:
    """R = 12 * N_prb * bits/symbol * Rc * SCS * N_symbols."""
    for name, value in (("n_sub_prb", n_sub_prb), ("bits_per_symbol", bits_per_symbol),
                        ("rc", rc), ("scs_hz", scs_hz), ("n_symbols", n_symbols)):
        if value <= 0:
            raise ValueError(f"{name} must be positive")
    return 12.0 * n_sub_prb * bits_per_symbol * rc * scs_hz * n_symbols


def ebn0_from_sinr(sinr_db, occupied_bw_hz: float, rate_bps: float):
    if occupied_bw_hz <= 0 or rate_bps <= 0:
        raise ValueError("bandwidth and rate must be positive")
    return sinr_db + 10.0 * math.log10(occupied_bw_hz / rate_bps)


def per_from_sinr_db(sinr_db, mcs: McsEntry, packet_bits: int, occupied_bw_hz: float, rate_bps: float):
    """SINR (dB) -> Eb/N0 -> BER -> PER, vectorized."""
    ebn0_db = ebn0_from_sinr(np.asarray(sinr_db, dtype=float), occupied_bw_hz, rate_bps)
    ber = ber_from_ebn0(10.0 ** (ebn0_db / 10.0), mcs.modulation_order)
    return per_from_ber(ber, packet_bits)


def link_budget(sinr_db: float, mcs: McsEntry, packet_bits: int, occupied_bw_hz: float,
                rate_bps: float) -> LinkBudget:
    ebn0_db = ebn0_from_sinr(sinr_db, occupied_bw_hz, rate_bps)
    ber = float(ber_from_ebn0(10.0 ** (ebn0_db / 10.0), mcs.modulation_order))
    per = per_from_ber(ber, packet_bits)
    return LinkBudget(ebn0_db, ber, per, 1.0 - per, rate_bps, packet_bits)


def rate_for(cfg, mcs: McsEntry) -> float:
    """Data rate of one packet allocation under ``cfg``."""
    return data_rate_bps(cfg.subchannels_per_packet * cfg.subchannel_prbs, mcs.bits_per_symbol,
                         mcs.code_rate, cfg.scs_khz * 1e3, n_data_symbols(cfg.dmrs_re_per_slot))


def decode(sinr_db, mcs: McsEntry, packet_bits: int, cfg, rng: np.random.Generator):
    """Bernoulli decode against the analog PER.

    Returns ``(success, per)``; arrays in, arrays out. ``cfg.fixed_per``
    replaces the channel-derived PER when set.
    """
    sinr = np.asarray(sinr_db, dtype=float)
    if cfg.fixed_per is not None:
        per = np.full(sinr.shape, float(cfg.fixed_per))
    else:
        per = np.asarray(per_from_sinr_db(sinr, mcs, packet_bits, cfg.occupied_bandwidth_hz,
                                          rate_for(cfg, mcs)))
    success = rng.random(sinr.shape) >= per
    if success.ndim == 0:
        return bool(success), float(per)
    return success, per
