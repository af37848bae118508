"""Spatio-temporal channel graph: fuse planned trajectories with the radio map
into per-slot expected link gains for every node pair within range.

The graph is a pure memoization of (trajectory interpolation o map query):
spot recomputation of any stored weight reproduces it bit-exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import UnknownNode
from .radio_env import LargeScaleStats, RadioMap
from .trajectory import positions_at


@dataclass(frozen=True)
class SlotGrid:
    """Uniform time discretization: slot k covers [t0 + k*dt, t0 + (k+1)*dt)."""

    t0: float = 0.0
    dt: float = 0.1
    n_slots: int = 1200

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.n_slots < 1:
            raise ValueError("n_slots must be >= 1")

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_slots)

    def t_of(self, slot: int) -> float:
        return self.t0 + self.dt * slot

    def slot_of(self, t: float) -> int:
        k = int(np.floor((t - self.t0) / self.dt + 1e-9))
        return min(max(k, 0), self.n_slots - 1)


@dataclass(frozen=True)
class LinkForecast:
    """Per-slot expected gain series for one pair; NaN marks unavailable slots."""

    pair: tuple
    mean_db: np.ndarray
    std_db: np.ndarray
    available: np.ndarray

    def stats_at(self, slot: int) -> LargeScaleStats | None:
        if not self.available[slot]:
            return None
        return LargeScaleStats(float(self.mean_db[slot]), float(self.std_db[slot]), 0.5)


@dataclass(frozen=True)
class ChannelGraph:
    """Time-indexed symmetric link-gain table over aircraft and ground nodes."""

    grid: SlotGrid
    node_ids: tuple
    range_cutoff: float
    weights: np.ndarray = field(repr=False, compare=False)
    positions: np.ndarray = field(repr=False, compare=False)
    residual_std_db: float = 4.0

    def index_of(self, node_id: str) -> int:
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise UnknownNode(node_id) from None

    def weight(self, i: str, j: str, slot: int) -> float:
        """Stored expected gain in dB; NaN when the edge is absent."""
        return float(self.weights[slot, self.index_of(i), self.index_of(j)])

    def has_edge(self, i: str, j: str, slot: int) -> bool:
        return bool(np.isfinite(self.weights[slot, self.index_of(i), self.index_of(j)]))

    def position_of(self, node_id: str, slot: int) -> np.ndarray:
        return self.positions[slot, self.index_of(node_id)]


def synthesize(trajs, ground_nodes, radio_map: RadioMap, grid: SlotGrid,
               range_cutoff: float = 1500.0) -> ChannelGraph:
    """Build the graph: weight(i, j, t) = map mean gain at the planned slot-t
    positions for every pair within range_cutoff; ground nodes are static."""
    trajs = list(trajs)
    ground_nodes = list(ground_nodes)
    ids = tuple(t.aircraft_id for t in trajs) + tuple(n.id for n in ground_nodes)
    if len(set(ids)) != len(ids):
        raise ValueError("node ids must be unique")
    n = len(ids)
    times = grid.times()
    pos = np.empty((grid.n_slots, n, 3))
    for a, traj in enumerate(trajs):
        pos[:, a, :] = positions_at(traj, times)
    for g, node in enumerate(ground_nodes):
        pos[:, len(trajs) + g, :] = node.pos.as_array()

    weights = np.full((grid.n_slots, n, n), np.nan)
    qt, qr, slots, iis, jjs = [], [], [], [], []
    for i in range(n):
        for j in range(i + 1, n):
            d = np.linalg.norm(pos[:, i, :] - pos[:, j, :], axis=1)
            ok = (d <= range_cutoff) & (d > 0.0)
            ks = np.flatnonzero(ok)
            if ks.size == 0:
                continue
            qt.append(pos[ks, i, :])
            qr.append(pos[ks, j, :])
            slots.append(ks)
            iis.append(np.full(ks.size, i))
            jjs.append(np.full(ks.size, j))
    if qt:
        means = radio_map.query_many(np.concatenate(qt), np.concatenate(qr))
        ks = np.concatenate(slots)
        ii = np.concatenate(iis)
        jj = np.concatenate(jjs)
        weights[ks, ii, jj] = means
        weights[ks, jj, ii] = means
    return ChannelGraph(grid, ids, range_cutoff, weights, pos, radio_map.residual_std_db)


def link_forecast(graph: ChannelGraph, i: str, j: str) -> LinkForecast:
    """Per-slot forecast series for the (i, j) link; symmetric in pair order."""
    if i == j:
        raise UnknownNode(f"link endpoints must differ: {i}")
    ii, jj = graph.index_of(i), graph.index_of(j)
    mean = graph.weights[:, ii, jj].copy()
    avail = np.isfinite(mean)
    std = np.where(avail, graph.residual_std_db, np.nan)
    return LinkForecast((i, j), mean, std, avail)


def graph_to_csv(graph: ChannelGraph, path) -> None:
    """Dump present edges as rows (t, i, j, gain_db), i < j in id order."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t", "i", "j", "gain_db"])
        for k in range(graph.grid.n_slots):
            t = graph.grid.t_of(k)
            for a in range(len(graph.node_ids)):
                for b in range(a + 1, len(graph.node_ids)):
                    v = graph.weights[k, a, b]
                    if np.isfinite(v):
                        w.writerow([repr(t), graph.node_ids[a], graph.node_ids[b], repr(float(v))])
