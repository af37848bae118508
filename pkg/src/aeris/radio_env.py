"""Large-scale radio environment: a synthetic ground-truth channel (log-distance
path loss with an LoS/NLoS exponent switch plus spatially correlated shadowing)
and a queryable radio map interpolated from sparse geo-tagged gain samples.

The shadowing term is a zero-mean Gaussian random field over 3D space with
exponential spatial correlation exp(-delta / decorr_dist), realized by random
Fourier features so that any point can be evaluated deterministically from a
seed. It is indexed at the link midpoint, which keeps the ground truth
reciprocal by construction.

The map is k-nearest-neighbour inverse-distance weighting over the raw 6D
(tx, rx) sample coordinates. Samples are stored in both orientations and the
query averages the (tx, rx) and (rx, tx) lookups, so queries are reciprocal
and reproduce training samples exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateLink, EmptySampleSet
from .scene import Position3, Scene, los_blocked
from .trajectory import positions_at

_EXACT_EPS = 1e-9


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path-loss and shadowing parameters for the ground truth."""

    pl0_db: float = 40.0
    d0: float = 1.0
    n_los: float = 2.0
    n_nlos: float = 3.2
    sigma_sh_los_db: float = 4.0
    sigma_sh_nlos_db: float = 8.0
    decorr_dist: float = 50.0
    noise_dbm: float = -90.0

    def __post_init__(self):
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")
        if self.n_los <= 0 or self.n_nlos <= 0:
            raise ValueError("path-loss exponents must be positive")
        if self.sigma_sh_los_db < 0 or self.sigma_sh_nlos_db < 0:
            raise ValueError("shadowing stds must be non-negative")
        if self.decorr_dist <= 0:
            raise ValueError("decorr_dist must be positive")


@dataclass(frozen=True)
class LargeScaleStats:
    mean_gain_db: float
    shadow_std_db: float
    los_prob: float

    def __post_init__(self):
        if self.shadow_std_db < 0:
            raise ValueError("shadow_std_db must be non-negative")
        if not 0.0 <= self.los_prob <= 1.0:
            raise ValueError("los_prob must lie in [0, 1]")


@dataclass(frozen=True)
class ChannelSample:
    """One geo-tagged large-scale gain measurement."""

    tx: Position3
    rx: Position3
    gain_db: float

    def __post_init__(self):
        if not math.isfinite(self.gain_db):
            raise ValueError("gain_db must be finite")


class ShadowField:
    """Unit-variance Gaussian field with exp(-d / decorr) spatial correlation.

    Random Fourier features: frequencies drawn from the 3D spectral measure of
    the exponential kernel (an isotropic Cauchy law, w = z / (decorr * |g|)),
    so the ensemble covariance over seeds is exactly the target correlation.
    """

    def __init__(self, decorr_dist: float, seed, n_terms: int = 192):
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((n_terms, 3))
        g = np.abs(rng.standard_normal(n_terms))
        g[g < 1e-300] = 1e-300
        self._freqs = z / (decorr_dist * g[:, None])
        self._phases = rng.uniform(0.0, 2.0 * np.pi, n_terms)
        self._scale = math.sqrt(2.0 / n_terms)

    def unit(self, points: np.ndarray) -> np.ndarray:
        """Field values at points, shape (m, 3) -> (m,)."""
        pts = np.atleast_2d(points)
        return self._scale * np.cos(pts @ self._freqs.T + self._phases).sum(axis=1)


class GroundTruthChannel:
    """Deterministic large-scale ground truth for one shadowing realization."""

    def __init__(self, scene: Scene, params: PathLossParams, shadow_seed, n_terms: int = 192):
        self.scene = scene
        self.params = params
        self.field = ShadowField(params.decorr_dist, shadow_seed, n_terms)

    def _los_mask(self, tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
        out = np.empty(tx.shape[0], dtype=bool)
        for i in range(tx.shape[0]):
            out[i] = not los_blocked(
                self.scene, Position3.from_array(tx[i]), Position3.from_array(rx[i])
            )
        return out

    def gain_db_many(self, tx: np.ndarray, rx: np.ndarray, with_shadow: bool = True) -> np.ndarray:
        """Large-scale gains for (m, 3) position pairs, reciprocal by construction."""
        tx = np.atleast_2d(np.asarray(tx, dtype=float))
        rx = np.atleast_2d(np.asarray(rx, dtype=float))
        d = np.linalg.norm(tx - rx, axis=1)
        if np.any(d == 0.0):
            raise DegenerateLink("tx and rx coincide")
        p = self.params
        los = self._los_mask(tx, rx)
        n_exp = np.where(los, p.n_los, p.n_nlos)
        pl = p.pl0_db + 10.0 * n_exp * np.log10(np.maximum(d, p.d0) / p.d0)
        if with_shadow:
            sigma = np.where(los, p.sigma_sh_los_db, p.sigma_sh_nlos_db)
            mid = 0.5 * (tx + rx)
            pl = pl + sigma * self.field.unit(mid)
        return -pl

    def gain_db(self, tx: Position3, rx: Position3, with_shadow: bool = True) -> float:
        return float(self.gain_db_many(tx.as_array()[None], rx.as_array()[None], with_shadow)[0])

    def stats(self, tx: Position3, rx: Position3) -> LargeScaleStats:
        """Deterministic mean and per-state shadow std; los_prob is 0 or 1."""
        los = not los_blocked(self.scene, tx, rx)
        mean = self.gain_db(tx, rx, with_shadow=False)
        std = self.params.sigma_sh_los_db if los else self.params.sigma_sh_nlos_db
        return LargeScaleStats(mean, std, 1.0 if los else 0.0)


def true_gain_db(scene: Scene, params: PathLossParams, shadow_seed, tx: Position3, rx: Position3) -> float:
    """One-shot ground-truth gain; deterministic for a fixed shadow_seed."""
    return GroundTruthChannel(scene, params, shadow_seed).gain_db(tx, rx)


def sample_along(trajs, scene: Scene, params: PathLossParams, shadow_seed, sampling_period: float,
                 peer_points) -> list:
    """Geo-tagged samples collected along each trajectory against static peers.

    Sampling instants are t_start + k*period for k = 0 .. floor(span/period)-1,
    one sample per (aircraft position, peer point) per instant.
    """
    if sampling_period <= 0:
        raise ValueError("sampling_period must be positive")
    channel = GroundTruthChannel(scene, params, shadow_seed)
    peers = [p.as_array() if isinstance(p, Position3) else np.asarray(p, dtype=float) for p in peer_points]
    samples = []
    for traj in trajs:
        span = traj.t_end - traj.t_start
        n = int(math.floor(span / sampling_period + 1e-12))
        if n <= 0:
            continue
        times = traj.t_start + sampling_period * np.arange(n)
        pos = positions_at(traj, times)
        for peer in peers:
            rx = np.broadcast_to(peer, pos.shape)
            gains = channel.gain_db_many(pos, rx)
            for i in range(n):
                samples.append(ChannelSample(Position3.from_array(pos[i]), Position3.from_array(peer),
                                             float(gains[i])))
    return samples


def sample_ground_pairs(scene: Scene, params: PathLossParams, shadow_seed, points) -> list:
    """One sample per static ground pair: fixed links have persistent large-scale
    gains, so a single site survey captures them exactly."""
    channel = GroundTruthChannel(scene, params, shadow_seed)
    pts = [p.as_array() if isinstance(p, Position3) else np.asarray(p, dtype=float) for p in points]
    samples = []
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if np.array_equal(pts[a], pts[b]):
                continue
            gain = float(channel.gain_db_many(pts[a][None], pts[b][None])[0])
            samples.append(ChannelSample(Position3.from_array(pts[a]),
                                         Position3.from_array(pts[b]), gain))
    return samples


def sample_between(trajs, scene: Scene, params: PathLossParams, shadow_seed,
                   sampling_period: float) -> list:
    """Air-to-air samples between every trajectory pair at the same cadence."""
    if sampling_period <= 0:
        raise ValueError("sampling_period must be positive")
    channel = GroundTruthChannel(scene, params, shadow_seed)
    samples = []
    trajs = list(trajs)
    for a in range(len(trajs)):
        for b in range(a + 1, len(trajs)):
            t0 = max(trajs[a].t_start, trajs[b].t_start)
            t1 = min(trajs[a].t_end, trajs[b].t_end)
            n = int(math.floor((t1 - t0) / sampling_period + 1e-12))
            if n <= 0:
                continue
            times = t0 + sampling_period * np.arange(n)
            pa = positions_at(trajs[a], times)
            pb = positions_at(trajs[b], times)
            keep = np.linalg.norm(pa - pb, axis=1) > 0
            gains = channel.gain_db_many(pa[keep], pb[keep])
            idx = np.flatnonzero(keep)
            for g, i in zip(gains, idx):
                samples.append(ChannelSample(Position3.from_array(pa[i]), Position3.from_array(pb[i]),
                                             float(g)))
    return samples


@dataclass(frozen=True)
class RadioMap:
    """k-NN inverse-distance-weighted interpolator over 6D (tx, rx) samples."""

    samples: tuple
    idw_exponent: float = 2.0
    k_neighbors: int = 8
    built_at: float = 0.0
    residual_std_db: float = 4.0
    _points: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _gains: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _tree: cKDTree = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if not self.samples:
            raise EmptySampleSet("a radio map needs at least one sample")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.idw_exponent <= 0:
            raise ValueError("idw_exponent must be positive")
        raw = np.array(
            [[s.tx.x, s.tx.y, s.tx.z, s.rx.x, s.rx.y, s.rx.z, s.gain_db] for s in self.samples]
        )
        mirrored = np.concatenate([raw, raw[:, [3, 4, 5, 0, 1, 2, 6]]], axis=0)
        # Canonical sort, then merge exact-duplicate 6D points (mean gain) so
        # query results are independent of sample order and duplicates.
        order = np.lexsort(mirrored.T[::-1])
        mirrored = mirrored[order]
        pts = mirrored[:, :6]
        uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
        gains = np.zeros(len(uniq))
        counts = np.zeros(len(uniq))
        np.add.at(gains, inverse, mirrored[:, 6])
        np.add.at(counts, inverse, 1.0)
        gains /= counts
        object.__setattr__(self, "_points", uniq)
        object.__setattr__(self, "_gains", gains)
        object.__setattr__(self, "_tree", cKDTree(uniq))

    def _idw(self, q: np.ndarray) -> np.ndarray:
        k = min(self.k_neighbors, self._points.shape[0])
        dist, idx = self._tree.query(q, k=k)
        dist = np.atleast_2d(dist.reshape(q.shape[0], k))
        idx = np.atleast_2d(idx.reshape(q.shape[0], k))
        g = self._gains[idx]
        with np.errstate(divide="ignore"):
            w = dist ** (-self.idw_exponent)
        out = np.empty(q.shape[0])
        exact = dist[:, 0] <= _EXACT_EPS
        out[exact] = g[exact, 0]
        rest = ~exact
        if np.any(rest):
            # anchored form: exact when all neighbour gains agree
            g0 = g[rest, :1]
            out[rest] = g0[:, 0] + np.sum(w[rest] * (g[rest] - g0), axis=1) / np.sum(w[rest], axis=1)
        return out

    def query_many(self, tx: np.ndarray, rx: np.ndarray) -> np.ndarray:
        """Mean gains for (m, 3) position pair arrays, symmetrized."""
        tx = np.atleast_2d(np.asarray(tx, dtype=float))
        rx = np.atleast_2d(np.asarray(rx, dtype=float))
        q = np.concatenate([tx, rx], axis=1)
        qs = np.concatenate([rx, tx], axis=1)
        return 0.5 * (self._idw(q) + self._idw(qs))

    def query(self, tx: Position3, rx: Position3) -> LargeScaleStats:
        """Expected large-scale stats between two points.

        los_prob is an uninformative 0.5: occlusion state is not part of the
        sampled data, so the map cannot infer it.
        """
        mean = float(self.query_many(tx.as_array()[None], rx.as_array()[None])[0])
        return LargeScaleStats(mean, self.residual_std_db, 0.5)


def build_map(samples, idw_exponent: float = 2.0, k_neighbors: int = 8, built_at: float = 0.0,
              residual_std_db: float = 4.0) -> RadioMap:
    if not samples:
        raise EmptySampleSet("a radio map needs at least one sample")
    return RadioMap(tuple(samples), idw_exponent, k_neighbors, built_at, residual_std_db)


def samples_to_csv(samples, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["tx_x", "tx_y", "tx_z", "rx_x", "rx_y", "rx_z", "gain_db"])
        for s in samples:
            w.writerow([repr(v) for v in (s.tx.x, s.tx.y, s.tx.z, s.rx.x, s.rx.y, s.rx.z, s.gain_db)])


def samples_from_csv(path) -> list:
    out = []
    with open(path, newline="") as f:
        r = csv.reader(f)
        next(r)
        for row in r:
            vals = [float(v) for v in row]
            out.append(ChannelSample(Position3(*vals[:3]), Position3(*vals[3:6]), vals[6]))
    return out
