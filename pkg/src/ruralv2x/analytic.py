"""Closed-form safety distance and truncated-HARQ energy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .phy_link import ber_from_prr, ebn0_from_ber


@dataclass(frozen=True)
class DcommInput:
    n: float
    v: float
    pps: float
    prr: float

    def __post_init__(self):
        if self.pps <= 0:
            raise ValueError("pps must be positive")
        if self.n < 0 or self.v < 0:
            raise ValueError("N and v must be non-negative")
        if not 0.0 <= self.prr <= 1.0:
            raise ValueError("PRR must lie in [0, 1]")


@dataclass(frozen=True)
class EnergyInput:
    n_pkt: float
    pt_w: float
    l_bits: float
    r_bps: float
    h: int
    prr: float

    def __post_init__(self):
        if self.r_bps <= 0:
            raise ValueError("rate must be positive")
        if self.n_pkt < 0 or self.pt_w <= 0 or self.l_bits <= 0:
            raise ValueError("N_pkt, Pt and L must be positive")
        if self.h < 1:
            raise ValueError("H must be >= 1")
        if not 0.0 <= self.prr <= 1.0:
            raise ValueError("PRR must lie in [0, 1]")


def d_comm(inp: DcommInput) -> float:
    """Expected distance travelled while waiting for the first good packet: N v (1 - PRR) / pps."""
    return inp.n * inp.v / inp.pps * (1.0 - inp.prr)


def expected_attempts(prr: float, h: int) -> float:
    """E[min(K, H)] for geometric K with success probability ``prr``.

    ``prr == 0`` returns ``h``, the limit of the closed form.
    """
    if h < 1:
        raise ValueError("H must be >= 1")
    if not 0.0 <= prr <= 1.0:
        raise ValueError("PRR must lie in [0, 1]")
    if prr == 0.0:
        return float(h)
    # 1 - (1 - prr)^h without cancellation for small prr
    return float(-np.expm1(h * np.log1p(-prr)) / prr) if prr < 1.0 else 1.0


def e_total(inp: EnergyInput) -> float:
    """Expected transmit energy in joules over ``n_pkt`` packets."""
    return inp.n_pkt * inp.pt_w * inp.l_bits / inp.r_bps * expected_attempts(inp.prr, inp.h)


def dbm_to_watts(p_dbm):
    out = 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)
    return float(out) if np.ndim(out) == 0 else out


def required_ebn0_for_prr(prr_target: float, l_bits: int, m: int) -> float:
    """Eb/N0 in dB needed for a per-attempt PRR target; ``ValueError`` if infeasible."""
    if not 0.0 < prr_target < 1.0:
        raise ValueError("PRR target must lie in (0, 1)")
    ber = ber_from_prr(prr_target, l_bits)
    return float(10.0 * np.log10(ebn0_from_ber(ber, m)))
