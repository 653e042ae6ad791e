"""Sensing-based semi-persistent scheduling with blind retransmissions.

Each agent reserves ``H`` resources per allocation period, one per HARQ
attempt, in distinct slots. A resource is a (slot, first subchannel) pair
covering ``subchannels_per_packet`` contiguous subchannels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass
class SpsAgent:
    owner: int
    keep_probability: float
    slots: np.ndarray | None = None
    starts: np.ndarray | None = None
    reselection_counter: int = 0

    @property
    def has_selection(self) -> bool:
        return self.slots is not None


@dataclass(frozen=True)
class PacketAttempt:
    packet_id: int
    tx: int
    attempt: int  # 1-based
    slot: int
    subchannels: tuple[int, ...]
    pt_dbm: float = 0.0
    outcomes: dict = field(default_factory=dict, compare=False)


class ResourceGrid:
    """Occupancy of the current period plus a sliding window of sensed power.

    ``sensed_dbm(listener)`` averages the linear power seen by ``listener``
    over the last ``window`` periods and over the subchannels of each
    candidate resource.
    """

    def __init__(self, slots_per_period: int, num_subchannels: int, subchannels_per_packet: int,
                 n_nodes: int, window: int = 10):
        self.slots_per_period = slots_per_period
        self.num_subchannels = num_subchannels
        self.width = subchannels_per_packet
        self.n_starts = num_subchannels - subchannels_per_packet + 1
        self.n_nodes = n_nodes
        self.window = window
        self._history = np.zeros((window, n_nodes, slots_per_period, num_subchannels))
        self._sum = np.zeros((n_nodes, slots_per_period, num_subchannels))
        self._head = 0
        self.filled = 0
        self.clear()

    def clear(self):
        self._parts: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
        self._cache = None

    def register(self, tx, slot, start):
        """Register one transmission, or several when given equal-length arrays."""
        slot = np.atleast_1d(np.asarray(slot, dtype=np.int64))
        start = np.atleast_1d(np.asarray(start, dtype=np.int64))
        tx = np.broadcast_to(np.asarray(tx, dtype=np.int64), slot.shape)
        self._parts.append((tx, slot, start))
        self._cache = None

    def _arrays(self):
        if self._cache is None:
            if self._parts:
                self._cache = tuple(np.concatenate(c) for c in zip(*self._parts))
            else:
                self._cache = tuple(np.zeros(0, dtype=np.int64) for _ in range(3))
        return self._cache

    @property
    def tx(self) -> np.ndarray:
        return self._arrays()[0]

    @property
    def slot(self) -> np.ndarray:
        return self._arrays()[1]

    @property
    def start(self) -> np.ndarray:
        return self._arrays()[2]

    def occupancy(self) -> dict[tuple[int, int], set[int]]:
        occ: dict[tuple[int, int], set[int]] = {}
        for t, s, c in zip(*self._arrays()):
            for w in range(self.width):
                occ.setdefault((int(s), int(c) + w), set()).add(int(t))
        return occ

    def in_slot(self, slot: int) -> tuple[np.ndarray, np.ndarray]:
        tx, sl, st = self._arrays()
        mask = sl == slot
        return tx[mask], st[mask]

    def sense(self, p_mw: np.ndarray):
        """Close the period: add this period's registered transmissions to the window."""
        tx, sl, st = self._arrays()
        grid = kernels.sense_grid(tx, sl, st, self.width, p_mw, self.slots_per_period, self.num_subchannels)
        self._sum += grid - self._history[self._head]
        self._history[self._head] = grid
        self._head = (self._head + 1) % self.window
        self.filled = min(self.filled + 1, self.window)

    def sensed_dbm(self, listener: int) -> np.ndarray:
        """(slots, n_starts) sensed power in dBm; ``-inf`` where nothing was heard."""
        if self.filled == 0:
            return np.full((self.slots_per_period, self.n_starts), -np.inf)
        per_sub = np.maximum(self._sum[listener], 0.0) / self.filled
        pair = sum(per_sub[:, w:w + self.n_starts] for w in range(self.width)) / self.width
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(pair)


def _pick_distinct_slots(pool: np.ndarray, n_starts: int, n: int, rng: np.random.Generator, n_resources: int):
    # one priority per resource, drawn whatever the pool size: uniform over the
    # pool, and a pool that changes by one member rarely changes the pick
    priority = rng.random(n_resources)
    order = pool[np.argsort(priority[pool], kind="stable")]
    slots, starts, used = [], [], set()
    for flat in order:
        s = int(flat) // n_starts
        if s in used:
            continue
        used.add(s)
        slots.append(s)
        starts.append(int(flat) % n_starts)
        if len(slots) == n:
            break
    idx = np.argsort(slots)
    return np.asarray(slots, dtype=np.int64)[idx], np.asarray(starts, dtype=np.int64)[idx]


def select_resources(agent: SpsAgent, grid: ResourceGrid, rng: np.random.Generator, n_attempts: int = 1,
                     sensing_threshold: float = -110.0, fallback_fraction: float = 0.2,
                     counter_range: tuple[int, int] = (5, 15)) -> SpsAgent:
    """Keep or reselect the agent's reservation when its counter has run out.

    Candidates are resources sensed below ``sensing_threshold``; when they do
    not span ``n_attempts`` distinct slots, the lowest-power
    ``fallback_fraction`` of all resources (grown as needed) is used instead.
    """
    if agent.has_selection and agent.reselection_counter > 0:
        return agent
    if agent.has_selection and rng.random() < agent.keep_probability:
        agent.reselection_counter = int(rng.integers(counter_range[0], counter_range[1] + 1))
        return agent
    rssi = grid.sensed_dbm(agent.owner).ravel()
    pool = np.flatnonzero(rssi < sensing_threshold)
    if np.unique(pool // grid.n_starts).size < n_attempts:
        ranked = np.argsort(rssi, kind="stable")
        size = max(1, math.ceil(fallback_fraction * rssi.size))
        while np.unique(ranked[:size] // grid.n_starts).size < n_attempts:
            size += 1
        pool = ranked[:size]
    agent.slots, agent.starts = _pick_distinct_slots(pool, grid.n_starts, n_attempts, rng, rssi.size)
    agent.reselection_counter = int(rng.integers(counter_range[0], counter_range[1] + 1))
    return agent


def schedule_packet(packet_id: int, agent: SpsAgent, h: int, width: int = 2, pt_dbm: float = 0.0) -> list[PacketAttempt]:
    """Blind schedule: attempt ``k`` uses the agent's ``k``-th reserved resource."""
    if h < 1:
        raise ValueError("H must be >= 1")
    if not agent.has_selection or len(agent.slots) < h:
        raise ValueError("agent holds fewer reserved resources than attempts")
    return [PacketAttempt(packet_id, agent.owner, k + 1, int(agent.slots[k]),
                          tuple(range(int(agent.starts[k]), int(agent.starts[k]) + width)), pt_dbm)
            for k in range(h)]


def overlap_fraction(start_a: int, start_b, width: int, scaling: str = "overlap"):
    """Share of ``a``'s subchannels also used by ``b`` (or 1/0 for all-or-nothing)."""
    b = np.asarray(start_b)
    shared = np.clip(width - np.abs(b - start_a), 0, width)
    if scaling == "all_or_nothing":
        return (shared > 0).astype(float)
    return shared / width


def resolve_slot(tx: int, start: int, slot_tx: np.ndarray, slot_starts: np.ndarray, rx_dbm,
                 receivers: np.ndarray, noise_mw: float, ici_ratio: np.ndarray, width: int,
                 scaling: str = "overlap") -> tuple[np.ndarray, np.ndarray]:
    """SINR (dB) of ``tx``'s transmission at each receiver, plus a half-duplex mask.

    ``rx_dbm(tx_idx, rx_idx)`` returns received power in dBm as an
    (n_tx, n_rx) array. Receivers that transmit in the same slot cannot
    decode; the mask marks them.
    """
    others = slot_tx != tx
    itx, istart = slot_tx[others], slot_starts[others]
    frac = overlap_fraction(start, istart, width, scaling)
    hit = frac > 0
    itx, frac = itx[hit], frac[hit]
    signal = 10.0 ** (rx_dbm(np.array([tx]), receivers)[0] / 10.0)
    if itx.size:
        interf = 10.0 ** (rx_dbm(itx, receivers) / 10.0)
        # a receiver never interferes with itself
        interf[itx[:, None] == receivers[None, :]] = 0.0
    else:
        interf = np.zeros((0, receivers.size))
    sinr = kernels.slot_sinr(signal, float(noise_mw), np.ascontiguousarray(interf),
                             np.ascontiguousarray(frac, dtype=float), np.ascontiguousarray(ici_ratio, dtype=float))
    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(sinr)
    busy = np.isin(receivers, slot_tx)
    return sinr_db, busy
