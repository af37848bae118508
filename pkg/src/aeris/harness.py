"""Scenario generation, the simulation loop wiring the three layers together,
two reactive baselines, load sweeps and metrics.

Accounting ground rules, identical for every method:

* interference is accrued from the ground-truth channel at realized positions;
  the radio map is a decision input only.
* all methods inside one seed share the flow arrivals, realized trajectories,
  shadow field and per-flow fading streams (paired seeding).
* flows are admitted sequentially; concurrent transmissions by different flows
  are allowed and their interference sums linearly (no MAC model).

"Network load" is the flow arrival rate in flows per minute, drawn as a
seeded Poisson process over the part of the horizon that leaves every flow a
full deadline window.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from . import echelon, strategic, tactical, trajectory
from .channel_graph import ChannelGraph, SlotGrid, synthesize
from .echelon import EchelonView, WorldState, LOCAL
from .errors import (ConfigInvalid, EscalateToStrategic, InfeasibleSchedule, NoFeasiblePath)
from .operational import LinkBudget, cap_power, required_power_dbm
from .radio_env import (GroundTruthChannel, PathLossParams, build_map, sample_along,
                        sample_between, sample_ground_pairs)
from .scene import CityParams, Position3, Scene, SceneNode, gen_city
from .strategic import PathReservation, prepare_planner, reserve_path, min_delay_reservation
from .trajectory import DeviationParams, Trajectory4D, Waypoint
from .units import db_to_lin, lin_to_db

METHODS = ("predictive", "baseline_aggregate", "baseline_spacetime")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything a run needs; serializes to a single JSON document."""

    scene: Scene
    trajectories: tuple
    deviation: DeviationParams = DeviationParams()
    grid: SlotGrid = SlotGrid()
    pathloss: PathLossParams = PathLossParams()
    budget: LinkBudget = LinkBudget()
    sensitive_cap_dbm: float = -60.0
    range_cutoff_m: float = 1500.0
    plan_shield_margin_db: float = 6.0
    sampling_period_s: float = 1.0
    map_k_neighbors: int = 8
    map_idw_exponent: float = 2.0
    map_residual_std_db: float = 4.0
    shadow_terms: int = 192
    central_horizon_s: float = 600.0
    local_horizon_s: float = 30.0
    individual_horizon_s: float = 2.0
    region_radius_m: float = 400.0
    blockage_threshold_db: float = -97.0
    load_per_min: float = 4.0
    frac_short_deadline: float = 0.5
    deadline_short_s: float = 2.0
    deadline_long_s: float = 20.0
    seed: int = 0

    def validate(self) -> None:
        try:
            echelon.validate_horizons(self.central_horizon_s, self.local_horizon_s,
                                      self.individual_horizon_s)
        except ValueError as e:
            raise ConfigInvalid("central_horizon_s", str(e)) from None
        if not 0.0 <= self.frac_short_deadline <= 1.0:
            raise ConfigInvalid("frac_short_deadline", "class fractions must sum to 1 in [0,1]")
        if self.load_per_min < 0:
            raise ConfigInvalid("load_per_min", "load must be non-negative")
        if self.deadline_short_s < self.grid.dt or self.deadline_long_s < self.deadline_short_s:
            raise ConfigInvalid("deadline_short_s", "deadlines must be >= dt and ordered")
        if self.deadline_long_s >= self.grid.dt * self.grid.n_slots:
            raise ConfigInvalid("deadline_long_s", "deadline exceeds the horizon")
        if self.sampling_period_s <= 0:
            raise ConfigInvalid("sampling_period_s", "sampling period must be positive")
        if not self.trajectories:
            raise ConfigInvalid("trajectories", "at least one aircraft is required")
        if not self.scene.ground_sources or not self.scene.ground_destinations:
            raise ConfigInvalid("scene", "need at least one source and one destination")

    def to_json_dict(self) -> dict:
        return {
            "scene": self.scene.to_json_dict(),
            "trajectories": [
                {
                    "aircraft_id": t.aircraft_id,
                    "v_max": t.v_max,
                    "waypoints": [[w.t, w.pos.x, w.pos.y, w.pos.z] for w in t.waypoints],
                }
                for t in self.trajectories
            ],
            "deviation": {"sigma_dev": self.deviation.sigma_dev,
                          "reversion_rate": self.deviation.reversion_rate},
            "grid": {"t0": self.grid.t0, "dt": self.grid.dt, "n_slots": self.grid.n_slots},
            "pathloss": {
                "pl0_db": self.pathloss.pl0_db, "d0": self.pathloss.d0,
                "n_los": self.pathloss.n_los, "n_nlos": self.pathloss.n_nlos,
                "sigma_sh_los_db": self.pathloss.sigma_sh_los_db,
                "sigma_sh_nlos_db": self.pathloss.sigma_sh_nlos_db,
                "decorr_dist": self.pathloss.decorr_dist, "noise_dbm": self.pathloss.noise_dbm,
            },
            "budget": {
                "snr_threshold_db": self.budget.snr_threshold_db,
                "outage_eps": self.budget.outage_eps,
                "noise_dbm": self.budget.noise_dbm, "p_max_dbm": self.budget.p_max_dbm,
            },
            "sensitive_cap_dbm": self.sensitive_cap_dbm,
            "range_cutoff_m": self.range_cutoff_m,
            "plan_shield_margin_db": self.plan_shield_margin_db,
            "sampling_period_s": self.sampling_period_s,
            "map_k_neighbors": self.map_k_neighbors,
            "map_idw_exponent": self.map_idw_exponent,
            "map_residual_std_db": self.map_residual_std_db,
            "shadow_terms": self.shadow_terms,
            "central_horizon_s": self.central_horizon_s,
            "local_horizon_s": self.local_horizon_s,
            "individual_horizon_s": self.individual_horizon_s,
            "region_radius_m": self.region_radius_m,
            "blockage_threshold_db": self.blockage_threshold_db,
            "load_per_min": self.load_per_min,
            "frac_short_deadline": self.frac_short_deadline,
            "deadline_short_s": self.deadline_short_s,
            "deadline_long_s": self.deadline_long_s,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)

    @staticmethod
    def from_json_dict(d: dict) -> "ScenarioConfig":
        try:
            trajs = tuple(
                Trajectory4D(
                    td["aircraft_id"],
                    tuple(Waypoint(w[0], Position3(w[1], w[2], w[3])) for w in td["waypoints"]),
                    v_max=td.get("v_max", 60.0),
                )
                for td in d["trajectories"]
            )
            cfg = ScenarioConfig(
                scene=Scene.from_json_dict(d["scene"]),
                trajectories=trajs,
                deviation=DeviationParams(**d["deviation"]),
                grid=SlotGrid(**d["grid"]),
                pathloss=PathLossParams(**d["pathloss"]),
                budget=LinkBudget(**d["budget"]),
                **{k: d[k] for k in (
                    "sensitive_cap_dbm", "range_cutoff_m", "plan_shield_margin_db",
                    "sampling_period_s",
                    "map_k_neighbors", "map_idw_exponent", "map_residual_std_db",
                    "shadow_terms", "central_horizon_s", "local_horizon_s",
                    "individual_horizon_s", "region_radius_m", "blockage_threshold_db",
                    "load_per_min", "frac_short_deadline", "deadline_short_s",
                    "deadline_long_s", "seed",
                )},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigInvalid("config", f"malformed scenario document: {e}") from None
        cfg.validate()
        return cfg

    @staticmethod
    def from_json(s: str) -> "ScenarioConfig":
        return ScenarioConfig.from_json_dict(json.loads(s))


@dataclass(frozen=True)
class FlowRequest:
    source: str
    dest: str
    injection_slot: int
    deadline_s: float

    def __post_init__(self):
        if self.deadline_s <= 0:
            raise ValueError("deadline must be positive")


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate outcome of one (config, method, seed) run."""

    method: str
    n_flows: int
    n_delivered: int
    interference_mw_s: float
    delivery_rate: float
    mean_delay_s: float
    mean_energy_mj: float

    @property
    def interference_db(self) -> float:
        return lin_to_db(self.interference_mw_s) if self.interference_mw_s > 0 else float("-inf")

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "n_flows": self.n_flows,
            "n_delivered": self.n_delivered,
            "interference_mw_s": self.interference_mw_s,
            "interference_db": self.interference_db,
            "delivery_rate": self.delivery_rate,
            "mean_delay_s": self.mean_delay_s,
            "mean_energy_mj": self.mean_energy_mj,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


# ---------------------------------------------------------------------------
# scenario generation


def _corridor_scene(seed: int, params: CityParams, n_sensitive: int) -> Scene:
    """West-to-east delivery corridor with a protected mid-field campus.

    Sources sit on the west edge, destinations on the east edge, and the
    sensitive receivers form one tight cluster astride the direct corridor,
    so the straight crossing is radio-hot while wide flanks stay quiet.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    city = gen_city(replace(params, n_sources=0, n_destinations=0, n_sensitive=0), seed)
    bx, by = city.bounds.hi.x, city.bounds.hi.y
    # the campus itself is open ground
    cx, cy = 0.5 * bx, 0.5 * by
    keep = tuple(b for b in city.obstacles
                 if max(abs(0.5 * (b.lo.x + b.hi.x) - cx),
                        abs(0.5 * (b.lo.y + b.hi.y) - cy)) > 110.0)
    city = replace(city, obstacles=keep)

    def clear_spot(x_lo, x_hi, y_lo, y_hi):
        for _ in range(2000):
            x = rng.uniform(x_lo, x_hi)
            y = rng.uniform(y_lo, y_hi)
            if not any(b.footprint_contains(x, y) for b in city.obstacles):
                return Position3(x, y, 0.0)
        raise ConfigInvalid("scene", "could not place a ground node clear of buildings")

    n_src, n_dst = params.n_sources, params.n_destinations
    lanes = (0.38, 0.62)
    sources = tuple(
        SceneNode(f"src{k}", clear_spot(0.13 * bx, 0.17 * bx,
                                        lanes[k % 2] * by - 0.02 * by,
                                        lanes[k % 2] * by + 0.02 * by))
        for k in range(n_src)
    )
    dests = tuple(
        SceneNode(f"dst{k}", clear_spot(0.83 * bx, 0.87 * bx,
                                        lanes[k % 2] * by - 0.02 * by,
                                        lanes[k % 2] * by + 0.02 * by))
        for k in range(n_dst)
    )
    campus = []
    for k in range(n_sensitive):
        ang = 2.0 * np.pi * k / max(n_sensitive, 1)
        r = rng.uniform(20.0, 45.0)
        campus.append(SceneNode(
            f"sens{k}",
            clear_spot(0.5 * bx + r * np.cos(ang) - 8.0, 0.5 * bx + r * np.cos(ang) + 8.0,
                       0.5 * by + r * np.sin(ang) - 8.0, 0.5 * by + r * np.sin(ang) + 8.0)))
    return replace(city, ground_sources=sources, ground_destinations=dests,
                   sensitive_nodes=tuple(campus))


def _corridor_trajectories(scene: Scene, n_aircraft: int, horizon_s: float, seed,
                           v_cruise: float = 45.0, v_max: float = 60.0) -> tuple:
    """Mission mix for the corridor: phase-staggered shuttles on each delivery
    lane, inspection orbits over the sources, and survey sweeps along the
    north/south flanks. Shuttle speed and lane length are matched so a single
    carrier can span source to destination within the long deadline class."""
    rng = np.random.default_rng(seed)
    bx, by = scene.bounds.hi.x, scene.bounds.hi.y
    sources = list(scene.ground_sources)
    dests = list(scene.ground_destinations)
    terminals = sources + dests
    n_ferry = min(8, max(n_aircraft - 4, 1))
    n_orbit = min(len(terminals), max(n_aircraft - n_ferry - 2, 0))
    plans = []
    for a in range(n_aircraft):
        if a < n_ferry:
            lane = a % max(len(sources), 1)
            alt = rng.uniform(70.0, 95.0)
            s = sources[lane % len(sources)].pos
            d = dests[lane % len(dests)].pos
            jit = rng.uniform(-20, 20, 4)
            p0 = np.clip(np.array([s.x + jit[0], s.y + jit[1]]), 0, [bx, by])
            p1 = np.clip(np.array([d.x + jit[2], d.y + jit[3]]), 0, [bx, by])
            legs = [np.array([p0[0], p0[1], alt]), np.array([p1[0], p1[1], alt])]
            phase = (a // max(len(sources), 1)) / max(n_ferry // max(len(sources), 1), 1)
            phase += rng.uniform(0.0, 0.1)
            plans.append((legs, phase % 1.0))
        elif a < n_ferry + n_orbit:
            anchor = terminals[(a - n_ferry) % len(terminals)].pos
            alt = rng.uniform(60.0, 80.0)
            r = rng.uniform(90.0, 130.0)
            ang0 = rng.uniform(0.0, 2.0 * np.pi)
            legs = []
            for s in range(6):
                ang = ang0 + 2.0 * np.pi * s / 6
                p = np.array([anchor.x + r * np.cos(ang), anchor.y + r * np.sin(ang), alt])
                p[:2] = np.clip(p[:2], 0.0, [bx, by])
                legs.append(p)
            plans.append((legs, rng.uniform(0.0, 1.0)))
        else:
            north = (a % 2 == 0)
            alt = rng.uniform(90.0, 120.0)
            y = rng.uniform(0.06 * by, 0.14 * by)
            y = by - y if north else y
            x0 = rng.uniform(0.10 * bx, 0.25 * bx)
            x1 = rng.uniform(0.75 * bx, 0.90 * bx)
            legs = [np.array([x0, y, alt]), np.array([x1, y, alt])]
            plans.append((legs, rng.uniform(0.0, 1.0)))
    trajs = []
    for a, (legs, phase) in enumerate(plans):
        # phase in [0, 1) positions the aircraft along its first leg at t = 0
        start = np.asarray(legs[0], dtype=float)
        nxt0 = np.asarray(legs[1 % len(legs)], dtype=float)
        waypoints = [Waypoint(0.0, Position3.from_array(start + phase * (nxt0 - start)))]
        t, k = 0.0, 0
        while t < horizon_s + 5.0:
            nxt = legs[(k + 1) % len(legs)]
            cur = waypoints[-1].pos.as_array()
            d = float(np.linalg.norm(nxt - cur))
            if d < 1e-6:
                k += 1
                continue
            t += d / v_cruise
            waypoints.append(Waypoint(t, Position3.from_array(nxt)))
            k += 1
        trajs.append(Trajectory4D(f"uav{a}", tuple(waypoints), v_max=v_max))
    return tuple(trajs)


def gen_default_scenario(seed: int, n_buildings: int = 20, n_aircraft: int = 12,
                         n_sensitive: int = 5, n_sources: int = 1, n_destinations: int = 1,
                         horizon_s: float = 120.0, dt: float = 0.1,
                         load_per_min: float = 4.0, frac_short_deadline: float = 0.15,
                         ) -> ScenarioConfig:
    """The documented desk-scale scenario: a 1000 x 1000 x 150 m city block,
    west-side sources, east-side destinations, a mid-field belt of sensitive
    receivers, and twelve aircraft on crossing shuttle/orbit/survey routes."""
    params = CityParams(n_buildings=n_buildings, n_sources=n_sources,
                        n_destinations=n_destinations, n_sensitive=n_sensitive)
    scene = _corridor_scene(seed, params, n_sensitive)
    trajs = _corridor_trajectories(scene, n_aircraft, horizon_s,
                                   np.random.SeedSequence([seed, 202]))
    grid = SlotGrid(0.0, dt, int(round(horizon_s / dt)))
    # p_max is set so the direct ground hop between the pads does not close,
    # which is what makes the corridor a relaying problem in the first place
    cfg = ScenarioConfig(scene=scene, trajectories=trajs, grid=grid,
                         budget=LinkBudget(p_max_dbm=27.0),
                         load_per_min=load_per_min, frac_short_deadline=frac_short_deadline,
                         seed=seed)
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# world construction (per run seed, shared by all methods and loads)


@dataclass
class World:
    config: ScenarioConfig
    run_seed: int
    truth: GroundTruthChannel
    radio_map: object
    graph: ChannelGraph
    tables: strategic.PlannerTables
    realized: dict
    ground_positions: dict
    base_state: WorldState

    def state_at(self, now_s: float) -> WorldState:
        return self.base_state.at_time(now_s)


def _stream(config: ScenarioConfig, run_seed: int, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence([config.seed, run_seed, *tags])


def build_world(config: ScenarioConfig, run_seed: int) -> World:
    """Deterministic per-seed world: shadow field, realized paths, map, graph."""
    config.validate()
    shadow_ss = _stream(config, run_seed, 1)
    truth = GroundTruthChannel(config.scene, config.pathloss, shadow_ss, config.shadow_terms)
    realized = {}
    for a, traj in enumerate(config.trajectories):
        realized[traj.aircraft_id] = trajectory.realize(
            traj, config.deviation, config.grid, _stream(config, run_seed, 2, a)
        )
    comm_ground = tuple(config.scene.ground_sources) + tuple(config.scene.ground_destinations)
    peers = [n.pos for n in comm_ground + tuple(config.scene.sensitive_nodes)]
    samples = sample_along(config.trajectories, config.scene, config.pathloss, shadow_ss,
                           config.sampling_period_s, peers)
    samples += sample_between(config.trajectories, config.scene, config.pathloss, shadow_ss,
                              config.sampling_period_s)
    samples += sample_ground_pairs(config.scene, config.pathloss, shadow_ss, peers)
    radio_map = build_map(samples, config.map_idw_exponent, config.map_k_neighbors,
                          built_at=config.grid.t0, residual_std_db=config.map_residual_std_db)
    graph = synthesize(config.trajectories, comm_ground, radio_map, config.grid,
                       config.range_cutoff_m)
    tables = prepare_planner(graph, radio_map, config.scene.sensitive_nodes, config.budget,
                             per_node_cap_dbm=config.sensitive_cap_dbm,
                             shield_margin_db=config.plan_shield_margin_db,
                             pathloss=config.pathloss)
    ground_positions = {n.id: n.pos for n in config.scene.all_nodes()}
    base_state = WorldState(
        now_s=config.grid.t0,
        scene=config.scene,
        truth=truth,
        trajectories={t.aircraft_id: t for t in config.trajectories},
        deviation=config.deviation,
        grid=config.grid,
        realized=realized,
        ground_positions=ground_positions,
    )
    return World(config, run_seed, truth, radio_map, graph, tables, realized,
                 ground_positions, base_state)


def draw_flows(config: ScenarioConfig, run_seed: int, load_per_min: float = None) -> list:
    """Seeded Poisson arrivals over the horizon part that fits a full deadline."""
    load = config.load_per_min if load_per_min is None else load_per_min
    if load <= 0:
        return []
    rng = np.random.default_rng(_stream(config, run_seed, 3, int(round(load * 1000))))
    grid = config.grid
    window_end = grid.dt * grid.n_slots - config.deadline_long_s - grid.dt
    sources = [n.id for n in config.scene.ground_sources]
    dests = [n.id for n in config.scene.ground_destinations]
    flows, t = [], 0.0
    while True:
        t += float(rng.exponential(60.0 / load))
        if t >= window_end:
            break
        src = sources[rng.integers(len(sources))]
        dst = dests[rng.integers(len(dests))]
        short = bool(rng.random() < config.frac_short_deadline)
        deadline = config.deadline_short_s if short else config.deadline_long_s
        flows.append(FlowRequest(src, dst, grid.slot_of(t), deadline))
    return flows


# ---------------------------------------------------------------------------
# transmission accounting


class _Accounting:
    """Collects transmissions and flow outcomes; truth-at-realized positions only."""

    def __init__(self, world: World, config: ScenarioConfig, events: list):
        self.world = world
        self.config = config
        self.events = events
        self.interference = 0.0
        self.outcomes = []
        self._sens_pos = np.array(
            [n.pos.as_array() for n in config.scene.sensitive_nodes]
        ).reshape(-1, 3)

    def realized_position(self, node_id: str, slot: int) -> np.ndarray:
        if node_id in self.world.realized:
            return self.world.realized[node_id][slot]
        return self.world.ground_positions[node_id].as_array()

    def measured_gain(self, tx: str, rx: str, slot: int) -> float:
        a = self.realized_position(tx, slot)
        b = self.realized_position(rx, slot)
        return float(self.world.truth.gain_db_many(a[None], b[None])[0])

    def transmit(self, flow_idx: int, hop_idx: int, slot: int, tx: str, rx: str,
                 power_dbm: float, fade_rng) -> bool:
        cfg = self.config
        p_lin = db_to_lin(power_dbm)
        tx_pos = self.realized_position(tx, slot)
        contrib = 0.0
        if self._sens_pos.shape[0]:
            gains = self.world.truth.gain_db_many(
                np.broadcast_to(tx_pos, self._sens_pos.shape), self._sens_pos
            )
            contrib = float((p_lin * np.sum(db_to_lin(gains))) * cfg.grid.dt)
        self.interference += contrib
        g_true = self.measured_gain(tx, rx, slot)
        h = float(fade_rng.standard_exponential())
        snr = p_lin * db_to_lin(g_true) * h / db_to_lin(cfg.budget.noise_dbm)
        success = bool(snr >= db_to_lin(cfg.budget.snr_threshold_db))
        energy = p_lin * cfg.grid.dt
        self.events.append({
            "type": "transmission", "flow": flow_idx, "hop": hop_idx, "slot": slot,
            "tx": tx, "rx": rx, "power_dbm": power_dbm, "success": success,
            "interference_mw_s": contrib, "energy_mw_s": energy,
        })
        return success

    def finish_flow(self, flow_idx: int, flow: FlowRequest, delivered: bool,
                    delivery_slot, energy_mw_s: float) -> None:
        delay = (delivery_slot - flow.injection_slot) * self.config.grid.dt \
            if delivered else None
        self.outcomes.append((delivered, delay, energy_mw_s))
        self.events.append({
            "type": "outcome", "flow": flow_idx, "delivered": delivered,
            "delivery_slot": delivery_slot if delivered else None,
            "energy_mw_s": energy_mw_s,
        })

    def report(self, method: str) -> MetricsReport:
        n = len(self.outcomes)
        delivered = [o for o in self.outcomes if o[0]]
        rate = len(delivered) / n if n else 1.0
        delay = float(np.mean([o[1] for o in delivered])) if delivered else float("nan")
        energy = float(np.mean([o[2] for o in delivered])) if delivered else float("nan")
        return MetricsReport(method, n, len(delivered), self.interference, rate, delay, energy)


# ---------------------------------------------------------------------------
# the predictive cascade


def _local_view(world: World, center: np.ndarray, radius: float,
                cfg: ScenarioConfig = None) -> EchelonView:
    cfg = cfg or world.config
    return EchelonView(
        tier=LOCAL, trajectory_source="realized-within-region",
        map_snapshot=world.radio_map, staleness_s=0.0,
        horizon_s=cfg.local_horizon_s,
        region_center=Position3.from_array(np.maximum(center, 0.0)),
        region_radius=radius,
    )


def _forecast_series(world: World, state: WorldState, view: EchelonView, link, slots):
    grid = world.base_state.grid
    times = grid.t0 + grid.dt * np.asarray(slots, dtype=float)
    return echelon.local_mean_series(view, state, link, times)


def _build_slice(world: World, cfg: ScenarioConfig, state: WorldState, view: EchelonView,
                 links, span):
    """Local per-slot gains and interference weights for candidate links."""
    slots = np.arange(span[0], span[1] + 1)
    mean = {}
    entities = set()
    for a, b in links:
        key = (a, b)
        mean[key] = _forecast_series(world, state, view, key, slots)
        entities.update(key)
    sens = {}
    times = cfg.grid.t0 + cfg.grid.dt * slots.astype(float)
    sens_pos = np.array([n.pos.as_array() for n in cfg.scene.sensitive_nodes])
    for e in sorted(entities):
        pos = echelon._extrapolated_many(state, e, times)
        if sens_pos.size:
            cols = []
            for gp in sens_pos:
                rx = np.broadcast_to(gp, pos.shape)
                cols.append(world.radio_map.query_many(pos, rx))
            sens[e] = np.sum(db_to_lin(np.stack(cols, axis=1)), axis=1)
        else:
            sens[e] = np.zeros(slots.size)
    return tactical.LocalGraphSlice(slots, mean, sens, cfg.budget, cfg.grid.dt)


def _cluster_members(world: World, state: WorldState, center: np.ndarray, radius: float,
                     must_include) -> tuple:
    members = set(must_include)
    for e in sorted(world.realized) + sorted(n.id for n in
                                             tuple(world.config.scene.ground_sources)
                                             + tuple(world.config.scene.ground_destinations)):
        pos = state.realized_pos(e, state.now_s) if e in world.realized \
            else world.ground_positions[e].as_array()
        if np.linalg.norm(pos - center) <= radius:
            members.add(e)
    return tuple(sorted(members))


def _execute_predictive(world: World, cfg: ScenarioConfig, flow: FlowRequest, flow_idx: int,
                        fade_rng, acct: _Accounting) -> None:
    grid = cfg.grid
    deadline_slots = int(math.floor(flow.deadline_s / grid.dt + 1e-9))
    final_slot = flow.injection_slot + min(deadline_slots, grid.n_slots - 1 - flow.injection_slot)
    try:
        res = reserve_path(world.graph, world.radio_map, flow.source, flow.dest,
                           flow.deadline_s, cfg.scene.sensitive_nodes, cfg.budget,
                           injection_slot=flow.injection_slot, tables=world.tables,
                           use_caps=True)
    except NoFeasiblePath:
        acct.finish_flow(flow_idx, flow, False, None, 0.0)
        return
    acct.events.append({"type": "reservation", "flow": flow_idx,
                        "reservation": res.to_json_dict()})
    hops = list(res.hops)
    energy = 0.0
    k = 0
    revision = 0
    last_slot = flow.injection_slot - 1
    skip_blockage = False
    while k < len(hops):
        hop = hops[k]
        now_slot = max(hop.window[0], last_slot + 1)
        now = grid.t_of(now_slot)
        state = world.state_at(now)
        tx_pos = state.realized_pos(hop.tx, now)
        rx_pos = state.realized_pos(hop.rx, now)
        center = 0.5 * (tx_pos + rx_pos)
        radius = max(cfg.region_radius_m, float(np.linalg.norm(tx_pos - rx_pos)) / 2 + 50.0)
        view = _local_view(world, center, radius, cfg)
        blocked = (not skip_blockage) and tactical.detect_blockage(
            view, state, hop, cfg.blockage_threshold_db)
        skip_blockage = False
        if blocked:
            tail = hops[k + 1:k + 2]
            reconnect = tail[0].rx if tail else hop.rx
            anchor = np.array([state.realized_pos(e, now)
                               for e in (hop.tx, hop.rx, reconnect)])
            center = anchor.mean(axis=0)
            radius = max(radius, float(np.linalg.norm(anchor - center, axis=1).max()) + 50.0)
            view = _local_view(world, center, radius, cfg)
            members = _cluster_members(world, state, center, radius,
                                       (hop.tx, hop.rx, reconnect))
            cluster = tactical.LocalCluster(members, {}, frozenset({(hop.tx, hop.rx)}),
                                            world.radio_map)
            span = (hop.window[0], tail[0].window[1] if tail else hop.window[1])
            links = []
            for m in members:
                if m not in (hop.tx, reconnect, hop.rx):
                    links.append((hop.tx, m))
                    links.append((m, reconnect))
            links.append((hop.tx, hop.rx))
            try:
                slc = _build_slice(world, cfg, state, view, links, span)
                repl = tactical.reroute_local(cluster, hop, tail, slc)
                hops[k:k + 1 + len(tail)] = list(repl)
                revision += 1
                acct.events.append({"type": "reroute", "flow": flow_idx, "hop": k,
                                    "revision": revision,
                                    "route": [h.tx for h in hops[k:]] + [hops[-1].rx]})
                hop = hops[k]
            except EscalateToStrategic:
                try:
                    remaining_s = (final_slot - now_slot) * grid.dt
                    res2 = reserve_path(world.graph, world.radio_map, hop.tx, flow.dest,
                                        max(remaining_s, grid.dt), cfg.scene.sensitive_nodes,
                                        cfg.budget, injection_slot=now_slot,
                                        tables=world.tables, use_caps=True)
                except (NoFeasiblePath, ValueError):
                    acct.finish_flow(flow_idx, flow, False, None, energy)
                    return
                hops[k:] = list(res2.hops)
                revision += 1
                acct.events.append({"type": "reroute", "flow": flow_idx, "hop": k,
                                    "revision": revision,
                                    "route": [h.tx for h in hops[k:]] + [flow.dest]})
                skip_blockage = True
                continue
        window_lo = max(hop.window[0], last_slot + 1)
        slots = np.arange(window_lo, hop.window[1] + 1)
        if slots.size == 0:
            acct.finish_flow(flow_idx, flow, False, None, energy)
            return
        series = _forecast_series(world, state, view, (hop.tx, hop.rx), slots)
        try:
            sched = tactical.schedule_timing(
                [replace(hop, window=(window_lo, hop.window[1]))],
                [(slots, series)], deadline_slot=final_slot)
            chosen = sched.hop_slots[0]
        except InfeasibleSchedule:
            chosen = int(slots[0])
        acct.events.append({"type": "schedule", "flow": flow_idx, "hop": k,
                            "slot": int(chosen), "revision": revision})
        sent = False
        for s in range(int(chosen), hop.window[1] + 1):
            measured = acct.measured_gain(hop.tx, hop.rx, s)
            required = required_power_dbm(measured, cfg.budget)
            if required > cfg.budget.p_max_dbm:
                continue
            decision = cap_power(required, Position3.from_array(
                np.maximum(acct.realized_position(hop.tx, s), 0.0)),
                cfg.scene.sensitive_nodes, cfg.sensitive_cap_dbm, world.radio_map,
                cfg.budget.p_max_dbm)
            if not decision.transmit:
                continue
            ok = acct.transmit(flow_idx, k, s, hop.tx, hop.rx, decision.power_dbm, fade_rng)
            energy += db_to_lin(decision.power_dbm) * grid.dt
            if not ok:
                acct.finish_flow(flow_idx, flow, False, None, energy)
                return
            last_slot = s
            sent = True
            break
        if not sent:
            acct.finish_flow(flow_idx, flow, False, None, energy)
            return
        k += 1
    acct.finish_flow(flow_idx, flow, True, last_slot + 1, energy)


# ---------------------------------------------------------------------------
# baselines


def baseline_aggregate(world: World, flow: FlowRequest, cfg: ScenarioConfig = None):
    """Reactive snapshot route: min-hop on the currently measured topology with
    per-hop powers from the measured gains; no foresight, no interference term,
    no caps. Returns (node sequence, powers) or raises NoFeasiblePath."""
    cfg = cfg or world.config
    acct_pos = lambda e: (world.realized[e][flow.injection_slot] if e in world.realized
                          else world.ground_positions[e].as_array())
    entities = sorted(world.realized) + [n.id for n in
                                         tuple(cfg.scene.ground_sources)
                                         + tuple(cfg.scene.ground_destinations)]
    pos = {e: acct_pos(e) for e in entities}
    gain = {}
    feasible = {e: [] for e in entities}
    ids = sorted(entities)
    arr = np.array([pos[e] for e in ids])
    for i, a in enumerate(ids):
        others = [b for b in ids if b != a]
        txs = np.broadcast_to(arr[i], (len(others), 3))
        rxs = np.array([pos[b] for b in others])
        keep = np.linalg.norm(txs - rxs, axis=1) > 0
        g = np.full(len(others), -np.inf)
        if np.any(keep):
            g[keep] = world.truth.gain_db_many(txs[keep], rxs[keep])
        for b, gv in zip(others, g):
            gain[(a, b)] = float(gv)
            if np.isfinite(gv) and required_power_dbm(gv, cfg.budget) <= cfg.budget.p_max_dbm:
                feasible[a].append(b)
    # min-hop BFS from dest, then lexicographic forward walk
    dist = {flow.dest: 0}
    frontier = [flow.dest]
    while frontier:
        nxt = []
        for u in frontier:
            for v in ids:
                if u in feasible[v] and v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    if flow.source not in dist:
        raise NoFeasiblePath("snapshot topology does not connect the flow")
    route = [flow.source]
    while route[-1] != flow.dest:
        u = route[-1]
        cand = sorted(v for v in feasible[u] if dist.get(v, 1 << 30) == dist[u] - 1)
        route.append(cand[0])
    powers = [required_power_dbm(gain[(a, b)], cfg.budget) for a, b in zip(route, route[1:])]
    return route, powers


def baseline_spacetime(world: World, flow: FlowRequest) -> PathReservation:
    """Delivery-time-optimal reservation on the predicted graph; powers are the
    nominal outage-compliant powers at the predicted gains; interference-agnostic."""
    return min_delay_reservation(world.graph, world.radio_map, flow.source, flow.dest,
                                 flow.deadline_s, world.config.scene.sensitive_nodes,
                                 world.config.budget, injection_slot=flow.injection_slot,
                                 tables=world.tables)


def _execute_aggregate(world: World, cfg: ScenarioConfig, flow: FlowRequest, flow_idx: int,
                       fade_rng, acct: _Accounting) -> None:
    grid = cfg.grid
    try:
        route, powers = baseline_aggregate(world, flow, cfg)
    except NoFeasiblePath:
        acct.finish_flow(flow_idx, flow, False, None, 0.0)
        return
    energy = 0.0
    deadline_slots = int(math.floor(flow.deadline_s / grid.dt + 1e-9))
    for k, (tx, rx) in enumerate(zip(route, route[1:])):
        slot = flow.injection_slot + k
        if slot >= grid.n_slots or slot - flow.injection_slot >= deadline_slots:
            acct.finish_flow(flow_idx, flow, False, None, energy)
            return
        ok = acct.transmit(flow_idx, k, slot, tx, rx, float(powers[k]), fade_rng)
        energy += db_to_lin(float(powers[k])) * grid.dt
        if not ok:
            acct.finish_flow(flow_idx, flow, False, None, energy)
            return
    acct.finish_flow(flow_idx, flow, True, flow.injection_slot + len(powers), energy)


def _execute_spacetime(world: World, cfg: ScenarioConfig, flow: FlowRequest, flow_idx: int,
                       fade_rng, acct: _Accounting) -> None:
    try:
        res = baseline_spacetime(world, flow)
    except NoFeasiblePath:
        acct.finish_flow(flow_idx, flow, False, None, 0.0)
        return
    energy = 0.0
    last = flow.injection_slot
    for k, hop in enumerate(res.hops):
        slot = hop.window[0]
        ok = acct.transmit(flow_idx, k, slot, hop.tx, hop.rx, hop.nominal_power_dbm, fade_rng)
        energy += db_to_lin(hop.nominal_power_dbm) * cfg.grid.dt
        last = slot
        if not ok:
            acct.finish_flow(flow_idx, flow, False, None, energy)
            return
    acct.finish_flow(flow_idx, flow, True, last + 1 if res.hops else flow.injection_slot, energy)


_EXECUTORS = {
    "predictive": _execute_predictive,
    "baseline_aggregate": _execute_aggregate,
    "baseline_spacetime": _execute_spacetime,
}


# ---------------------------------------------------------------------------
# run / sweep


def run(config: ScenarioConfig, method: str, seed: int, events: list = None,
        world: World = None, load_per_min: float = None) -> MetricsReport:
    """One deterministic scenario run; interference is accounted from ground
    truth at realized positions for every method."""
    if method not in METHODS:
        raise ConfigInvalid("method", f"unknown method {method!r}")
    config.validate()
    if world is None:
        world = build_world(config, seed)
    events_list = events if events is not None else []
    events_list.append({"type": "meta", "method": method, "seed": seed,
                        "dt_s": config.grid.dt})
    flows = draw_flows(config, seed, load_per_min)
    acct = _Accounting(world, config, events_list)
    execute = _EXECUTORS[method]
    for idx, flow in enumerate(flows):
        events_list.append({
            "type": "flow", "flow": idx, "src": flow.source, "dst": flow.dest,
            "injection_slot": flow.injection_slot, "deadline_s": flow.deadline_s,
        })
        fade_rng = np.random.default_rng(_stream(config, seed, 4, idx))
        execute(world, config, flow, idx, fade_rng, acct)
    return acct.report(method)


def replay_metrics(events) -> MetricsReport:
    """Recompute the metrics report from an emitted event log alone."""
    method, dt = None, None
    interference = 0.0
    outcomes = []
    n_flows = 0
    injection = {}
    for ev in events:
        if ev["type"] == "meta":
            method, dt = ev["method"], ev["dt_s"]
        elif ev["type"] == "flow":
            n_flows += 1
            injection[ev["flow"]] = ev["injection_slot"]
        elif ev["type"] == "transmission":
            interference += ev["interference_mw_s"]
        elif ev["type"] == "outcome":
            outcomes.append(ev)
    delivered = [ev for ev in outcomes if ev["delivered"]]
    rate = len(delivered) / n_flows if n_flows else 1.0
    delays = [(ev["delivery_slot"] - injection[ev["flow"]]) * dt for ev in delivered]
    energies = [ev["energy_mw_s"] for ev in delivered]
    return MetricsReport(
        method, n_flows, len(delivered), interference, rate,
        float(np.mean(delays)) if delivered else float("nan"),
        float(np.mean(energies)) if delivered else float("nan"),
    )


def _seed_rows(args):
    config, loads, methods, seed = args
    world = build_world(config, seed)
    rows = []
    for load in loads:
        for method in methods:
            rep = run(config, method, seed, world=world, load_per_min=load)
            rows.append({
                "load": float(load), "method": method, "seed": seed,
                "interference_mw_s": rep.interference_mw_s,
                "interference_db": rep.interference_db,
                "delivery_rate": rep.delivery_rate,
                "mean_delay_s": rep.mean_delay_s,
                "energy_mj": rep.mean_energy_mj,
            })
    return rows


def sweep(config: ScenarioConfig, loads, methods, n_seeds: int) -> list:
    """Full (load x method x seed) cross product with paired seeds.

    Seeds run independently; AERIS_THREADS bounds process concurrency.
    Row order is (load, method, seed) regardless of execution order.
    """
    if not loads or not methods or n_seeds < 1:
        raise ConfigInvalid("sweep", "loads, methods and seeds must be nonempty")
    for m in methods:
        if m not in METHODS:
            raise ConfigInvalid("method", f"unknown method {m!r}")
    config.validate()
    tasks = [(config, tuple(loads), tuple(methods), s) for s in range(n_seeds)]
    workers = os.environ.get("AERIS_THREADS")
    workers = int(workers) if workers else (os.cpu_count() or 1)
    workers = max(1, min(workers, n_seeds))
    rows = []
    if workers == 1:
        for t in tasks:
            rows.extend(_seed_rows(t))
    else:
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as ex:
            for part in ex.map(_seed_rows, tasks):
                rows.extend(part)
    method_order = {m: i for i, m in enumerate(METHODS)}
    rows.sort(key=lambda r: (r["load"], method_order[r["method"]], r["seed"]))
    return rows


SWEEP_COLUMNS = ("load", "method", "seed", "interference_mw_s", "interference_db",
                 "delivery_rate", "mean_delay_s", "energy_mj")


def sweep_to_csv(rows, path) -> None:
    import csv as _csv

    with open(path, "w", newline="") as f:
        w = _csv.writer(f)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([r["method"] if c == "method" else repr(r[c]) if isinstance(r[c], float)
                        else r[c] for c in SWEEP_COLUMNS])


def sweep_from_csv(path) -> list:
    import csv as _csv

    rows = []
    with open(path, newline="") as f:
        r = _csv.reader(f)
        header = next(r)
        for line in r:
            d = dict(zip(header, line))
            for k in header:
                if k == "method":
                    continue
                d[k] = int(d[k]) if k == "seed" else float(d[k])
            rows.append(d)
    return rows


def plot_data(rows) -> list:
    """Median and interquartile range per (load, method) for plotting."""
    keys = sorted({(r["load"], r["method"]) for r in rows},
                  key=lambda k: (k[0], METHODS.index(k[1])))
    out = []
    for load, method in keys:
        sel = [r for r in rows if r["load"] == load and r["method"] == method]
        vals = np.array([r["interference_mw_s"] for r in sel])
        q25, q50, q75 = np.percentile(vals, [25, 50, 75])
        out.append({
            "load": load, "method": method,
            "interference_mw_s_median": float(q50),
            "interference_mw_s_q25": float(q25),
            "interference_mw_s_q75": float(q75),
            "interference_db_median": float(lin_to_db(q50)) if q50 > 0 else float("-inf"),
            "delivery_rate_median": float(np.nanmedian([r["delivery_rate"] for r in sel])),
            "mean_delay_s_median": float(np.nanmedian([r["mean_delay_s"] for r in sel])),
            "energy_mj_median": float(np.nanmedian([r["energy_mj"] for r in sel])),
        })
    return out


PLOT_COLUMNS = ("load", "method", "interference_mw_s_median", "interference_mw_s_q25",
                "interference_mw_s_q75", "interference_db_median", "delivery_rate_median",
                "mean_delay_s_median", "energy_mj_median")


def plot_data_to_csv(rows, path) -> None:
    import csv as _csv

    with open(path, "w", newline="") as f:
        w = _csv.writer(f)
        w.writerow(PLOT_COLUMNS)
        for r in rows:
            w.writerow([r[c] if c == "method" else repr(float(r[c])) for c in PLOT_COLUMNS])
