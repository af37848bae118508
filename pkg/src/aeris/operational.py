"""Link-level power control: minimum transmit power meeting an outage target
under Rayleigh fading, per-sensitive-node received-power caps, and precomputed
measured-gain -> power policies.

With received SNR = p * G * h / N and h a unit-mean exponential (Rayleigh
power), the outage constraint P(SNR < gamma) <= eps has the closed form
p = gamma * N / (G * (-ln(1 - eps))).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ExceedsPMax
from .scene import Position3


@dataclass(frozen=True)
class LinkBudget:
    """Physical-layer envelope: SNR threshold, outage target, noise, power cap."""

    snr_threshold_db: float = 10.0
    outage_eps: float = 0.05
    noise_dbm: float = -90.0
    p_max_dbm: float = 30.0

    def __post_init__(self):
        if not 0.0 < self.outage_eps < 1.0:
            raise ValueError("outage_eps must lie in (0, 1)")
        if not math.isfinite(self.p_max_dbm):
            raise ValueError("p_max_dbm must be finite")

def outage_margin_db(budget: LinkBudget) -> float:
    """10*log10(-ln(1 - eps)): the dB shift the fading tail adds to the budget."""
    return 10.0 * math.log10(-math.log1p(-budget.outage_eps))

def required_power_dbm(mean_gain_db, budget: LinkBudget):
    """Minimum outage-compliant power in dBm, scalar or elementwise; no cap check."""
    return budget.snr_threshold_db + budget.noise_dbm - mean_gain_db - outage_margin_db(budget)

def min_power_outage(mean_gain_db: float, budget: LinkBudget) -> float:
    """Minimum power (dBm) with P(SNR < threshold) <= eps; raises ExceedsPMax."""
    if not math.isfinite(mean_gain_db):
        raise ValueError("mean_gain_db must be finite")
    p = required_power_dbm(mean_gain_db, budget)
    if p > budget.p_max_dbm:
        raise ExceedsPMax(f"required {p:.2f} dBm exceeds p_max {budget.p_max_dbm:.2f} dBm")
    return p

@dataclass(frozen=True)
class PowerDecision:
    """Either a transmit power (<= p_max) or a defer marker."""

    power_dbm: float | None

    @property
    def transmit(self) -> bool:
        return self.power_dbm is not None

    @staticmethod
    def defer() -> "PowerDecision":
        return PowerDecision(None)

def cap_power(required_p_dbm: float, tx_pos: Position3, sensitive_nodes, per_node_cap_dbm,
              radio_map, p_max_dbm: float) -> PowerDecision:
    """Clip the request against per-sensitive-node received-power caps.

    p_allowed = min(p_max, min_g cap_g - predicted_gain(tx, g)); transmit at
    required power when p_allowed >= required (equality admits), else defer.
    """
    p_allowed = p_max_dbm
    nodes = list(sensitive_nodes)
    if nodes:
        rx = np.array([n.pos.as_array() for n in nodes])
        tx = np.broadcast_to(tx_pos.as_array(), rx.shape)
        gains = radio_map.query_many(tx, rx)
        for node, gain in zip(nodes, gains):
            cap = per_node_cap_dbm[node.id] if isinstance(per_node_cap_dbm, dict) else per_node_cap_dbm
            p_allowed = min(p_allowed, cap - float(gain))
    if p_allowed >= required_p_dbm:
        return PowerDecision(required_p_dbm)
    return PowerDecision.defer()

@dataclass(frozen=True)
class PowerPolicy:
    """Measured-gain bins -> transmit power table; NaN entries mean defer.

    Powers are computed at each bin's lower gain edge, so the table is
    conservative and monotone non-increasing across increasing gain bins.
    """

    bin_edges: np.ndarray
    powers_dbm: np.ndarray

    def __post_init__(self):
        finite = self.powers_dbm[np.isfinite(self.powers_dbm)]
        if finite.size > 1 and np.any(np.diff(finite) > 1e-12):
            raise ValueError("policy powers must be non-increasing in gain")

    @property
    def n_bins(self) -> int:
        return len(self.powers_dbm)

    def lookup(self, measured_gain_db: float) -> PowerDecision:
        k = int(np.clip(np.searchsorted(self.bin_edges, measured_gain_db, side="right") - 1,
                        0, self.n_bins - 1))
        p = self.powers_dbm[k]
        return PowerDecision(float(p)) if np.isfinite(p) else PowerDecision.defer()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_low_db", "bin_high_db", "power_dbm"])
            for k in range(self.n_bins):
                p = self.powers_dbm[k]
                w.writerow([repr(float(self.bin_edges[k])), repr(float(self.bin_edges[k + 1])),
                            repr(float(p)) if np.isfinite(p) else "defer"])

def build_policy(forecast, budget: LinkBudget, n_bins: int) -> PowerPolicy:
    """Precompute the power table over the forecast's mean +/- 4 std range.

    `forecast` needs mean_db and std_db attributes. Bins whose lower-edge
    requirement exceeds p_max defer.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    lo = forecast.mean_db - 4.0 * forecast.std_db
    hi = forecast.mean_db + 4.0 * forecast.std_db
    if hi == lo:
        edges = np.array([lo, lo])
        n_bins = 1
    else:
        edges = np.linspace(lo, hi, n_bins + 1)
    powers = required_power_dbm(edges[:-1], budget)
    powers = np.where(powers <= budget.p_max_dbm, powers, np.nan)
    return PowerPolicy(edges, np.atleast_1d(powers))
