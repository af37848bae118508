"""Middle-scale coordination inside a local cluster: flag hops whose local
forecast has collapsed, splice a short detour around them, and pick each hop's
transmit slot inside its reserved window to land on high-gain periods.

Detours are limited to one substitute relay (two hops); anything larger
escalates to a global replan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .echelon import EchelonView, WorldState, local_mean_series, LOCAL
from .errors import EscalateToStrategic, InfeasibleSchedule
from .operational import required_power_dbm
from .strategic import HopReservation
from .units import db_to_lin


@dataclass(frozen=True)
class LocalCluster:
    """Cluster membership and what the cluster currently knows."""

    member_ids: tuple
    positions: dict
    blocked_pairs: frozenset
    radio_map: object

    def __post_init__(self):
        members = set(self.member_ids)
        for a, b in self.blocked_pairs:
            if a not in members or b not in members:
                raise ValueError("blocked pairs must join cluster members")

    def is_blocked(self, a: str, b: str) -> bool:
        return (a, b) in self.blocked_pairs or (b, a) in self.blocked_pairs


@dataclass(frozen=True)
class Schedule:
    """Chosen transmit slot per hop of a (possibly refined) route."""

    hop_slots: tuple
    route: tuple

    def __post_init__(self):
        if len(self.hop_slots) != len(self.route):
            raise ValueError("one slot per hop")
        for a, b in zip(self.hop_slots, self.hop_slots[1:]):
            if b <= a:
                raise ValueError("hop slots must be strictly increasing")
        for s, h in zip(self.hop_slots, self.route):
            if not h.window[0] <= s <= h.window[1]:
                raise ValueError("chosen slot outside the reserved window")


def detect_blockage(view: EchelonView, world: WorldState, hop: HopReservation,
                    gain_threshold_db: float) -> bool:
    """True iff the local forecast mean over the hop's window is strictly below
    the threshold (a forecast exactly at the threshold is not blocked)."""
    if view.tier != LOCAL:
        raise ValueError("blockage detection uses the local tier")
    slots = np.arange(hop.window[0], hop.window[1] + 1)
    times = world.grid.t0 + world.grid.dt * slots
    means = local_mean_series(view, world, (hop.tx, hop.rx), times)
    return bool(np.mean(means) < gain_threshold_db)


@dataclass(frozen=True)
class LocalGraphSlice:
    """Per-slot local predictions for candidate links over a slot span."""

    slots: np.ndarray
    mean_gain_db: dict
    sens_lin: dict
    budget: object
    dt_s: float

    def gains(self, a: str, b: str) -> np.ndarray:
        return self.mean_gain_db[(a, b) if (a, b) in self.mean_gain_db else (b, a)]


def _best_slot_cost(slice_: LocalGraphSlice, tx: str, rx: str, lo: int, hi: int):
    """Cheapest feasible transmit (interference) for tx->rx within [lo, hi].

    Returns (cost, slot, power_dbm) or None when no slot fits under p_max.
    """
    mask = (slice_.slots >= lo) & (slice_.slots <= hi)
    if not np.any(mask):
        return None
    gains = slice_.gains(tx, rx)[mask]
    power = required_power_dbm(gains, slice_.budget)
    ok = np.isfinite(gains) & (power <= slice_.budget.p_max_dbm)
    if not np.any(ok):
        return None
    slots = slice_.slots[mask]
    cost = (db_to_lin(power) * slice_.sens_lin[tx][mask]) * slice_.dt_s
    cost = np.where(ok, cost, np.inf)
    k = int(np.argmin(cost))
    return float(cost[k]), int(slots[k]), float(power[k])


def reroute_local(cluster: LocalCluster, blocked_hop: HopReservation, directive_tail,
                  graph_slice: LocalGraphSlice):
    """Replace a blocked hop with the cheapest 2-hop detour through a cluster
    member, reconnecting to the directive at the node after the blocked link.

    Returns the replacement hop tuple (identity when the hop is not actually
    flagged blocked); raises EscalateToStrategic when no detour fits.
    """
    a, b = blocked_hop.tx, blocked_hop.rx
    if not cluster.is_blocked(a, b):
        return (blocked_hop,)
    tail = list(directive_tail)
    if tail:
        reconnect = tail[0].rx
        span = (blocked_hop.window[0], tail[0].window[1])
    else:
        reconnect = b
        span = blocked_hop.window
    if span[1] - span[0] < 1:
        raise EscalateToStrategic("window too short for a two-hop detour")
    mid = (span[0] + span[1]) // 2
    best = None
    for m in sorted(cluster.member_ids):
        if m in (a, b, reconnect):
            continue
        if cluster.is_blocked(a, m) or cluster.is_blocked(m, reconnect):
            continue
        first = _best_slot_cost(graph_slice, a, m, span[0], mid)
        second = _best_slot_cost(graph_slice, m, reconnect, mid + 1, span[1])
        if first is None or second is None:
            continue
        added = first[0] + second[0]
        if best is None or added < best[0]:
            best = (added, m, first, second)
    if best is None:
        raise EscalateToStrategic("no feasible detour relay in the cluster")
    _, m, first, second = best
    return (
        HopReservation(a, m, (span[0], mid), first[2]),
        HopReservation(m, reconnect, (mid + 1, span[1]), second[2]),
    )


def schedule_timing(route, forecasts, deadline_slot: int) -> Schedule:
    """Pick per-hop transmit slots maximizing the summed forecast gain.

    forecasts[k] is (slots, mean_db) aligned arrays for hop k's window;
    non-finite means are unusable. Subject to strict precedence, window
    membership and the deadline; ties resolve to the earliest slot vector.
    """
    route = tuple(route)
    k_hops = len(route)
    if k_hops == 0:
        return Schedule((), ())
    slot_arrays, value_arrays = [], []
    for k, hop in enumerate(route):
        slots, means = forecasts[k]
        slots = np.asarray(slots)
        means = np.asarray(means, dtype=float)
        keep = (slots >= hop.window[0]) & (slots <= hop.window[1]) & (slots <= deadline_slot)
        slots, means = slots[keep], means[keep]
        means = np.where(np.isfinite(means), means, -np.inf)
        if slots.size == 0:
            raise InfeasibleSchedule(f"hop {k} has no usable slot")
        slot_arrays.append(slots)
        value_arrays.append(means)

    # g[k][i] = value of taking slot i for hop k plus the best feasible suffix.
    g = [None] * k_hops
    suffix = [None] * k_hops
    g[k_hops - 1] = value_arrays[k_hops - 1]
    for k in range(k_hops - 1, -1, -1):
        if k < k_hops - 1:
            nxt_slots, nxt_suffix = slot_arrays[k + 1], suffix[k + 1]
            idx = np.searchsorted(nxt_slots, slot_arrays[k] + 1, side="left")
            cont = np.where(idx < nxt_slots.size, nxt_suffix[np.minimum(idx, nxt_slots.size - 1)],
                            -np.inf)
            g[k] = value_arrays[k] + cont
        suffix[k] = np.maximum.accumulate(g[k][::-1])[::-1]

    if not np.isfinite(suffix[0][0]):
        raise InfeasibleSchedule("precedence cannot be met within the windows")
    chosen = []
    prev = -1
    for k in range(k_hops):
        start = int(np.searchsorted(slot_arrays[k], prev + 1, side="left"))
        if start >= slot_arrays[k].size:
            raise InfeasibleSchedule("precedence cannot be met within the windows")
        target = suffix[k][start]
        if not np.isfinite(target):
            raise InfeasibleSchedule("precedence cannot be met within the windows")
        i = start + int(np.argmax(g[k][start:] == target))
        chosen.append(int(slot_arrays[k][i]))
        prev = chosen[-1]
    return Schedule(tuple(chosen), route)
