"""Static 3D world model: bounds, box obstacles, ground terminals, and
line-of-sight occlusion queries.

All geometry lives in a local east-north-up frame with meters as the unit.
Obstacles are axis-aligned boxes; a link is occluded when the open segment
between its endpoints crosses a box interior, so endpoints sitting exactly
on a face (antennas mounted on a wall) still see outward.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationFailed


@dataclass(frozen=True)
class Position3:
    """A point in the local ENU frame, z >= 0."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError("position coordinates must be finite")
            object.__setattr__(self, name, v)
        if self.z < 0:
            raise ValueError("z must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Position3":
        return Position3(float(a[0]), float(a[1]), float(a[2]))


def distance(a: Position3, b: Position3) -> float:
    return math.dist((a.x, a.y, a.z), (b.x, b.y, b.z))


@dataclass(frozen=True)
class ObstacleBox:
    """Axis-aligned box given by its min and max corners (strict in every axis)."""

    lo: Position3
    hi: Position3

    def __post_init__(self):
        if not (self.hi.x > self.lo.x and self.hi.y > self.lo.y and self.hi.z > self.lo.z):
            raise ValueError("box max corner must exceed min corner in every axis")

    def contains(self, p: Position3, strict: bool = True) -> bool:
        lo, hi = self.lo, self.hi
        if strict:
            return lo.x < p.x < hi.x and lo.y < p.y < hi.y and lo.z < p.z < hi.z
        return lo.x <= p.x <= hi.x and lo.y <= p.y <= hi.y and lo.z <= p.z <= hi.z

    def footprint_contains(self, x: float, y: float) -> bool:
        return self.lo.x < x < self.hi.x and self.lo.y < y < self.hi.y


@dataclass(frozen=True)
class SceneNode:
    """A named static ground node."""

    id: str
    pos: Position3


@dataclass(frozen=True)
class Scene:
    """Immutable world: bounds, obstacles and the three ground node groups."""

    bounds: ObstacleBox
    obstacles: tuple = ()
    ground_sources: tuple = ()
    ground_destinations: tuple = ()
    sensitive_nodes: tuple = ()
    _obs_lo: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _obs_hi: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        ids = [n.id for n in self.all_nodes()]
        if len(ids) != len(set(ids)):
            raise ValueError("node ids must be unique across all groups")
        for box in self.obstacles:
            if not (self.bounds.contains(box.lo, strict=False) and self.bounds.contains(box.hi, strict=False)):
                raise ValueError("obstacle outside scene bounds")
        for node in self.all_nodes():
            if not self.bounds.contains(node.pos, strict=False):
                raise ValueError(f"node {node.id} outside scene bounds")
            for box in self.obstacles:
                if box.contains(node.pos, strict=True):
                    raise ValueError(f"node {node.id} inside an obstacle")
        if self.obstacles:
            lo = np.array([[b.lo.x, b.lo.y, b.lo.z] for b in self.obstacles])
            hi = np.array([[b.hi.x, b.hi.y, b.hi.z] for b in self.obstacles])
        else:
            lo = np.zeros((0, 3))
            hi = np.zeros((0, 3))
        object.__setattr__(self, "_obs_lo", lo)
        object.__setattr__(self, "_obs_hi", hi)

    def all_nodes(self):
        return tuple(self.ground_sources) + tuple(self.ground_destinations) + tuple(self.sensitive_nodes)

    def node_position(self, node_id: str) -> Position3:
        for n in self.all_nodes():
            if n.id == node_id:
                return n.pos
        raise KeyError(node_id)

    def to_json_dict(self) -> dict:
        def box(b):
            return {"min": [b.lo.x, b.lo.y, b.lo.z], "max": [b.hi.x, b.hi.y, b.hi.z]}

        nodes = []
        for role, group in (
            ("source", self.ground_sources),
            ("destination", self.ground_destinations),
            ("sensitive", self.sensitive_nodes),
        ):
            for n in group:
                nodes.append({"id": n.id, "role": role, "pos": [n.pos.x, n.pos.y, n.pos.z]})
        return {"bounds": box(self.bounds), "obstacles": [box(b) for b in self.obstacles], "nodes": nodes}

    @staticmethod
    def from_json_dict(d: dict) -> "Scene":
        def box(bd):
            return ObstacleBox(Position3(*bd["min"]), Position3(*bd["max"]))

        groups = {"source": [], "destination": [], "sensitive": []}
        for nd in d["nodes"]:
            groups[nd["role"]].append(SceneNode(nd["id"], Position3(*nd["pos"])))
        return Scene(
            bounds=box(d["bounds"]),
            obstacles=tuple(box(bd) for bd in d["obstacles"]),
            ground_sources=tuple(groups["source"]),
            ground_destinations=tuple(groups["destination"]),
            sensitive_nodes=tuple(groups["sensitive"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json(s: str) -> "Scene":
        return Scene.from_json_dict(json.loads(s))


def _segment_box_params(a: np.ndarray, d: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Open parameter interval (tlo, thi) per box where a + t*d is strictly inside.

    lo/hi have shape (n_boxes, 3). Returns two (n_boxes,) arrays; an empty
    interval is encoded as tlo >= thi.
    """
    n = lo.shape[0]
    tlo = np.full((n, 3), -np.inf)
    thi = np.full((n, 3), np.inf)
    for ax in range(3):
        da = d[ax]
        if da != 0.0:
            t1 = (lo[:, ax] - a[ax]) / da
            t2 = (hi[:, ax] - a[ax]) / da
            tlo[:, ax] = np.minimum(t1, t2)
            thi[:, ax] = np.maximum(t1, t2)
        else:
            inside = (a[ax] > lo[:, ax]) & (a[ax] < hi[:, ax])
            tlo[:, ax] = np.where(inside, -np.inf, np.inf)
            thi[:, ax] = np.where(inside, np.inf, -np.inf)
    return tlo.max(axis=1), thi.min(axis=1)


def los_blocked(scene: Scene, a: Position3, b: Position3) -> bool:
    """True iff the open segment (a, b) crosses the interior of any obstacle.

    Slab method with strict inequalities: tangent grazes and endpoints lying
    exactly on a face do not count as blockage.
    """
    if scene._obs_lo.shape[0] == 0:
        return False
    av = a.as_array()
    d = b.as_array() - av
    tlo, thi = _segment_box_params(av, d, scene._obs_lo, scene._obs_hi)
    enter = np.maximum(tlo, 0.0)
    leave = np.minimum(thi, 1.0)
    return bool(np.any(enter < leave))


@dataclass(frozen=True)
class CityParams:
    """Knobs for the synthetic urban stand-in used by gen_city."""

    extent_x: float = 1000.0
    extent_y: float = 1000.0
    extent_z: float = 150.0
    n_buildings: int = 20
    footprint_min: float = 30.0
    footprint_max: float = 80.0
    height_min: float = 15.0
    height_max: float = 60.0
    n_sources: int = 3
    n_destinations: int = 3
    n_sensitive: int = 5
    max_node_retries: int = 1000

    def __post_init__(self):
        if self.n_buildings < 0:
            raise ValueError("building count must be non-negative")
        if self.footprint_max > min(self.extent_x, self.extent_y):
            raise ValueError("building footprint exceeds bounds")
        if self.height_max > self.extent_z:
            raise ValueError("building height exceeds bounds")


def gen_city(params: CityParams, seed: int) -> Scene:
    """Generate a random box city with ground nodes placed outside footprints.

    Deterministic for a fixed (params, seed) pair. Raises GenerationFailed
    when a node cannot be placed clear of buildings within the retry budget.
    """
    rng = np.random.default_rng(seed)
    bounds = ObstacleBox(Position3(0, 0, 0), Position3(params.extent_x, params.extent_y, params.extent_z))
    boxes = []
    for _ in range(params.n_buildings):
        w = rng.uniform(params.footprint_min, params.footprint_max)
        dth = rng.uniform(params.footprint_min, params.footprint_max)
        h = rng.uniform(params.height_min, params.height_max)
        x0 = rng.uniform(0.0, params.extent_x - w)
        y0 = rng.uniform(0.0, params.extent_y - dth)
        boxes.append(ObstacleBox(Position3(x0, y0, 0.0), Position3(x0 + w, y0 + dth, h)))

    def place(prefix, count):
        nodes = []
        for k in range(count):
            for _ in range(params.max_node_retries):
                x = rng.uniform(0.0, params.extent_x)
                y = rng.uniform(0.0, params.extent_y)
                if not any(b.footprint_contains(x, y) for b in boxes):
                    nodes.append(SceneNode(f"{prefix}{k}", Position3(x, y, 0.0)))
                    break
            else:
                raise GenerationFailed(f"could not place node {prefix}{k} outside buildings")
        return tuple(nodes)

    return Scene(
        bounds=bounds,
        obstacles=tuple(boxes),
        ground_sources=place("src", params.n_sources),
        ground_destinations=place("dst", params.n_destinations),
        sensitive_nodes=place("sens", params.n_sensitive),
    )
