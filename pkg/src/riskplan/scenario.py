"""Problem instances: vehicle models, static obstacles and risk parameters.

Scenario files are JSON documents::

    {
      "horizon": 10, "dt": 1.0, "delta": 0.05, "psi": 1e-6,
      "world_bounds": {"min": [0, 0], "max": [10, 10]},
      "vehicles": [
        {"A": [[...]], "B": [[...]], "u_min": [...], "u_max": [...],
         "x0_mean": [...], "x0_cov": [[...]], "w_cov": [[...]],
         "goal": {"min": [x, y], "max": [x, y]}, "radius": 0.1}
      ],
      "obstacles": [{"vertices": [[x, y], ...]}]
    }

Matrices are row-major nested lists (a flat row-major list of the right
length is accepted too).  Obstacle vertices are counter-clockwise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .constraints import Box, ConvexRegion, Halfspace, polygon_area, polygon_region

PSD_TOL = 1e-9

DEFAULT_WORLD = ((0.0, 0.0), (10.0, 10.0))
DEFAULT_RADIUS = 0.1
DEFAULT_DT = 1.0
DEFAULT_U_MAX = 1.0
DEFAULT_GOAL_HALF_WIDTH = 0.25
DEFAULT_X0_COV = (1e-4, 1e-4, 1e-6, 1e-6)
DEFAULT_W_COV = (1e-4, 1e-4, 2e-5, 2e-5)
# three evenly spaced square obstacles (center, half-width)
REGULAR_OBSTACLES = (((3.0, 6.75), 0.75), ((7.0, 6.75), 0.75), ((5.0, 3.0), 0.75))


class ScenarioError(ValueError):
    pass


class ScenarioParseError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.problems))


@dataclass(eq=False)
class VehicleModel:
    id: int
    A: np.ndarray
    B: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    x0_mean: np.ndarray
    x0_cov: np.ndarray
    w_cov: np.ndarray
    goal: Box
    radius: float = DEFAULT_RADIUS

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(eq=False)
class StaticObstacle:
    edges: list[Halfspace]
    vertices: np.ndarray | None = None

    @classmethod
    def from_vertices(cls, vertices) -> StaticObstacle:
        region = polygon_region(vertices)
        return cls(region.edges, region.vertices)

    def region(self) -> ConvexRegion:
        return ConvexRegion(list(self.edges), vertices=self.vertices)

    def contains(self, point, tol: float = 0.0) -> bool:
        return self.region().contains(point, tol)


@dataclass(eq=False)
class Scenario:
    vehicles: list[VehicleModel]
    obstacles: list[StaticObstacle] = field(default_factory=list)
    T: int = 10
    dt: float = DEFAULT_DT
    delta_total: float = 0.05
    psi: float = 1e-6
    world_bounds: Box = field(default_factory=lambda: Box(*DEFAULT_WORLD))

    @property
    def N(self) -> int:
        return len(self.vehicles)

    def obstacle_regions(self) -> list[ConvexRegion]:
        return [o.region() for o in self.obstacles]

    def subset(self, ids) -> list[VehicleModel]:
        return [self.vehicles[i] for i in ids]


def double_integrator(dt: float) -> tuple[np.ndarray, np.ndarray]:
    A = np.array(
        [[1.0, 0.0, dt, 0.0], [0.0, 1.0, 0.0, dt], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    )
    B = np.array([[0.5 * dt * dt, 0.0], [0.0, 0.5 * dt * dt], [dt, 0.0], [0.0, dt]])
    return A, B


# ---------------------------------------------------------------------------
# validation


def _is_psd(M: np.ndarray) -> bool:
    return bool(np.allclose(M, M.T, atol=1e-12) and np.linalg.eigvalsh(0.5 * (M + M.T)).min() >= -PSD_TOL)


def _vehicle_problems(v: VehicleModel, world: Box) -> list[str]:
    tag = f"vehicle {v.id}"
    out = []
    if v.A.ndim != 2 or v.A.shape[0] != v.A.shape[1]:
        return [f"{tag}: A must be square, got shape {v.A.shape}"]
    n = v.A.shape[0]
    if n < 2:
        out.append(f"{tag}: state needs at least 2 position components")
    if v.B.ndim != 2 or v.B.shape[0] != n:
        return out + [f"{tag}: B must have {n} rows, got shape {v.B.shape}"]
    m = v.B.shape[1]
    for name in ("u_min", "u_max"):
        if getattr(v, name).shape != (m,):
            out.append(f"{tag}: {name} must have length {m}")
    if not out and np.any(v.u_min > v.u_max):
        out.append(f"{tag}: u_min exceeds u_max")
    if v.x0_mean.shape != (n,):
        out.append(f"{tag}: x0_mean must have length {n}")
    for name in ("x0_cov", "w_cov"):
        M = getattr(v, name)
        if M.shape != (n, n):
            out.append(f"{tag}: {name} must be {n}x{n}")
        elif not _is_psd(M):
            out.append(f"{tag}: {name} is not symmetric positive semidefinite")
    if not np.all(v.goal.lo <= v.goal.hi):
        out.append(f"{tag}: goal box has min > max")
    if v.radius < 0:
        out.append(f"{tag}: radius must be non-negative")
    if v.x0_mean.shape == (n,) and not world.contains(v.x0_mean[:2]):
        out.append(f"{tag}: start outside world bounds")
    if not (world.contains(v.goal.lo) and world.contains(v.goal.hi)):
        out.append(f"{tag}: goal outside world bounds")
    return out


def _obstacle_problems(o: StaticObstacle, idx: int) -> list[str]:
    tag = f"obstacle {idx}"
    if len(o.edges) < 3:
        return [f"{tag}: needs at least 3 edges"]
    if o.vertices is not None:
        if polygon_area(o.vertices) <= 0:
            return [f"{tag}: vertices must be counter-clockwise with positive area"]
        centroid = np.mean(o.vertices, axis=0)
        if not o.contains(centroid):
            return [f"{tag}: polygon is not convex"]
    return []


def validate(scenario: Scenario) -> Scenario:
    """Raise :class:`ScenarioValidationError` listing every violated invariant."""
    problems = []
    if scenario.T < 1:
        problems.append("horizon must be >= 1")
    if scenario.dt <= 0:
        problems.append("dt must be positive")
    if not 0.0 < scenario.delta_total < 0.5:
        problems.append("delta must lie in (0, 0.5)")
    if not 0.0 < scenario.psi < 1.0:
        problems.append("psi must lie in (0, 1)")
    if not np.all(scenario.world_bounds.lo < scenario.world_bounds.hi):
        problems.append("world_bounds min must be below max")
    if not scenario.vehicles:
        problems.append("at least one vehicle is required")
    for i, v in enumerate(scenario.vehicles):
        if v.id != i:
            problems.append(f"vehicle {v.id}: id must equal its index {i}")
        problems.extend(_vehicle_problems(v, scenario.world_bounds))
    for j, o in enumerate(scenario.obstacles):
        problems.extend(_obstacle_problems(o, j))
    if problems:
        raise ScenarioValidationError(problems)
    return scenario


# ---------------------------------------------------------------------------
# serialization


def _matrix(raw, shape_hint: int | None, what: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.ndim == 1 and shape_hint is not None and arr.size == shape_hint * shape_hint:
        arr = arr.reshape(shape_hint, shape_hint)
    if arr.ndim != 2:
        raise ScenarioParseError(f"{what} must be a matrix")
    return arr


def _box(raw: Any, what: str) -> Box:
    try:
        return Box(np.asarray(raw["min"], dtype=float), np.asarray(raw["max"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioParseError(f"{what} must have 'min' and 'max' corners") from exc


def _vehicle_from_dict(i: int, raw: dict) -> VehicleModel:
    try:
        x0 = np.asarray(raw["x0_mean"], dtype=float)
        n = x0.size
        A = _matrix(raw["A"], n, f"vehicle {i} A")
        B = np.asarray(raw["B"], dtype=float)
        if B.ndim == 1 and n and B.size % n == 0:
            B = B.reshape(n, B.size // n)
        return VehicleModel(
            id=i,
            A=A,
            B=B,
            u_min=np.asarray(raw["u_min"], dtype=float),
            u_max=np.asarray(raw["u_max"], dtype=float),
            x0_mean=x0,
            x0_cov=_matrix(raw["x0_cov"], n, f"vehicle {i} x0_cov"),
            w_cov=_matrix(raw["w_cov"], n, f"vehicle {i} w_cov"),
            goal=_box(raw["goal"], f"vehicle {i} goal"),
            radius=float(raw.get("radius", DEFAULT_RADIUS)),
        )
    except KeyError as exc:
        raise ScenarioParseError(f"vehicle {i}: missing key {exc}") from exc
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioParseError):
            raise
        raise ScenarioParseError(f"vehicle {i}: {exc}") from exc


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario document must be a mapping")
    missing = [k for k in ("vehicles", "horizon", "delta") if k not in doc]
    if missing:
        raise ScenarioParseError(f"missing top-level keys: {', '.join(missing)}")
    vehicles = [_vehicle_from_dict(i, v) for i, v in enumerate(doc["vehicles"])]
    obstacles = []
    for j, o in enumerate(doc.get("obstacles", [])):
        try:
            obstacles.append(StaticObstacle.from_vertices(o["vertices"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioParseError(f"obstacle {j}: {exc}") from exc
    world = (
        _box(doc["world_bounds"], "world_bounds") if "world_bounds" in doc else Box(*DEFAULT_WORLD)
    )
    try:
        scenario = Scenario(
            vehicles=vehicles,
            obstacles=obstacles,
            T=int(doc["horizon"]),
            dt=float(doc.get("dt", DEFAULT_DT)),
            delta_total=float(doc["delta"]),
            psi=float(doc.get("psi", 1e-6)),
            world_bounds=world,
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioParseError(str(exc)) from exc
    return validate(scenario)


def scenario_to_dict(scenario: Scenario) -> dict:
    def box(b: Box) -> dict:
        return {"min": b.lo.tolist(), "max": b.hi.tolist()}

    vehicles = []
    for v in scenario.vehicles:
        vehicles.append(
            {
                "A": v.A.tolist(),
                "B": v.B.tolist(),
                "u_min": v.u_min.tolist(),
                "u_max": v.u_max.tolist(),
                "x0_mean": v.x0_mean.tolist(),
                "x0_cov": v.x0_cov.tolist(),
                "w_cov": v.w_cov.tolist(),
                "goal": box(v.goal),
                "radius": v.radius,
            }
        )
    obstacles = []
    for o in scenario.obstacles:
        if o.vertices is None:
            raise ScenarioError("only vertex-defined obstacles can be serialized")
        obstacles.append({"vertices": np.asarray(o.vertices).tolist()})
    return {
        "horizon": scenario.T,
        "dt": scenario.dt,
        "delta": scenario.delta_total,
        "psi": scenario.psi,
        "world_bounds": box(scenario.world_bounds),
        "vehicles": vehicles,
        "obstacles": obstacles,
    }


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    return scenario_from_dict(doc)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


# ---------------------------------------------------------------------------
# random instances


def _square_vertices(center, half: float) -> np.ndarray:
    return np.asarray(center, dtype=float) + half * np.array(
        [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
    )


def random_scenario(
    n_vehicles: int,
    n_obstacles: int = 3,
    seed: int = 0,
    *,
    T: int = 10,
    dt: float = DEFAULT_DT,
    delta: float = 0.05,
    psi: float = 1e-6,
    radius: float = DEFAULT_RADIUS,
    min_separation: float = 1.5,
    obstacle_clearance: float = 0.5,
    goal_half_width: float = DEFAULT_GOAL_HALF_WIDTH,
    u_max: float = DEFAULT_U_MAX,
    max_attempts: int = 10_000,
) -> Scenario:
    """Random double-integrator instance with uniformly sampled starts and goals.

    The first three obstacles follow a fixed regular layout; further ones are
    random non-overlapping squares.  Every start and goal keeps
    ``min_separation`` (at least ``2 * radius``) from all other starts/goals
    and ``obstacle_clearance`` from every obstacle.
    """
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    rng = np.random.default_rng(seed)
    world = Box(*DEFAULT_WORLD)
    min_separation = max(min_separation, 2.0 * radius)

    squares = [c_h for c_h in REGULAR_OBSTACLES[:n_obstacles]]
    attempts = 0
    while len(squares) < n_obstacles:
        attempts += 1
        if attempts > max_attempts:
            raise ScenarioError("could not place obstacles (world too crowded)")
        half = rng.uniform(0.4, 0.8)
        c = rng.uniform(world.lo + half + 0.5, world.hi - half - 0.5)
        if all(np.max(np.abs(c - np.asarray(c2))) > half + h2 + 1.0 for c2, h2 in squares):
            squares.append((tuple(c), half))
    obstacles = [StaticObstacle.from_vertices(_square_vertices(c, h)) for c, h in squares]

    def clear(p, placed) -> bool:
        for c, h in squares:
            if np.max(np.abs(p - np.asarray(c))) <= h + obstacle_clearance:
                return False
        return all(np.linalg.norm(p - q) >= min_separation for q in placed)

    margin = 0.5
    placed: list[np.ndarray] = []
    for _ in range(2 * n_vehicles):
        for attempt in range(max_attempts):
            p = rng.uniform(world.lo + margin, world.hi - margin)
            if clear(p, placed):
                placed.append(p)
                break
        else:
            raise ScenarioError("rejection sampling failed (world too crowded)")

    kw = dict(dt=dt, radius=radius, u_max=u_max, goal_half_width=goal_half_width)
    vehicles = [_vehicle(i, placed[2 * i], placed[2 * i + 1], **kw) for i in range(n_vehicles)]
    return validate(Scenario(vehicles, obstacles, T, dt, delta, psi, world))


def _vehicle(i: int, start, goal, *, dt: float, radius: float, u_max: float, goal_half_width: float):
    A, B = double_integrator(dt)
    start, goal = np.asarray(start, dtype=float), np.asarray(goal, dtype=float)
    return VehicleModel(
        id=i,
        A=A,
        B=B,
        u_min=np.full(2, -u_max),
        u_max=np.full(2, u_max),
        x0_mean=np.array([start[0], start[1], 0.0, 0.0]),
        x0_cov=np.diag(DEFAULT_X0_COV),
        w_cov=np.diag(DEFAULT_W_COV),
        goal=Box(goal - goal_half_width, goal + goal_half_width),
        radius=radius,
    )


def head_on_scenario(
    *, T: int = 10, delta: float = 0.05, psi: float = 1e-6, y: float = 5.0, offset: float = 0.0
) -> Scenario:
    """Two vehicles swapping ends of the same horizontal line, no obstacles.

    ``offset`` shifts the second vehicle's line vertically.
    """
    kw = dict(dt=DEFAULT_DT, radius=DEFAULT_RADIUS, u_max=DEFAULT_U_MAX, goal_half_width=DEFAULT_GOAL_HALF_WIDTH)
    vehicles = [
        _vehicle(0, (2.0, y), (8.0, y), **kw),
        _vehicle(1, (8.0, y + offset), (2.0, y + offset), **kw),
    ]
    return validate(Scenario(vehicles, [], T, DEFAULT_DT, delta, psi, Box(*DEFAULT_WORLD)))


def corridor_scenario(
    n_vehicles: int = 2, *, T: int = 10, delta: float = 0.05, psi: float = 1e-6, spacing: float | None = None
) -> Scenario:
    """Vehicles in parallel horizontal lanes, alternating direction, no obstacles.

    Lanes are spread evenly over the world height unless ``spacing`` is given.
    """
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    world = Box(*DEFAULT_WORLD)
    height = world.hi[1] - world.lo[1] - 2.0
    if spacing is None:
        spacing = height / max(n_vehicles - 1, 1)
    if spacing * (n_vehicles - 1) > height + 1e-9:
        raise ScenarioError("lanes do not fit inside the world")
    kw = dict(dt=DEFAULT_DT, radius=DEFAULT_RADIUS, u_max=DEFAULT_U_MAX, goal_half_width=DEFAULT_GOAL_HALF_WIDTH)
    vehicles = []
    for i in range(n_vehicles):
        y = world.lo[1] + 1.0 + i * spacing
        a, b = (1.5, 8.5) if i % 2 == 0 else (8.5, 1.5)
        vehicles.append(_vehicle(i, (a, y), (b, y), **kw))
    return validate(Scenario(vehicles, [], T, DEFAULT_DT, delta, psi, world))


def scenario_digest(scenario: Scenario) -> str:
    """Stable text form, handy for bit-identity comparisons."""
    return json.dumps(scenario_to_dict(scenario), sort_keys=True)


def world_diameter(scenario: Scenario) -> float:
    return float(math.dist(scenario.world_bounds.lo, scenario.world_bounds.hi))
