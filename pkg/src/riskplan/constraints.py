"""Halfspace geometry, chance-constraint tightening and collision probabilities.

Conventions
-----------
A :class:`Halfspace` ``(h, g)`` is the constraint ``h . x <= g``.  For a
``KEEP_OUT`` region the edges are oriented so that the safe side of each edge
is ``h . x <= g``; the forbidden interior is where *every* edge is violated
(``h . x > g`` for all edges).  For a ``KEEP_IN`` region the inside is where
every edge holds.

Gaussian tails are evaluated through the scalar projection
``h . x ~ N(h . mean, h' cov h)``.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .dynamics import GaussianState

logger = logging.getLogger(__name__)

VAR_TOL = 1e-12
MIN_SQUARE = 1e-6


class DegenerateHullError(ValueError):
    """Fewer than three non-collinear points were given to :func:`convex_hull`."""


@dataclass(frozen=True, eq=False)
class Halfspace:
    h: np.ndarray
    g: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        if not np.linalg.norm(h) > 0.0:
            raise ValueError("halfspace normal must be nonzero")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "g", float(self.g))

    def lifted(self, n: int) -> np.ndarray:
        """Normal zero-padded to a length-``n`` state vector."""
        if self.h.size == n:
            return self.h
        out = np.zeros(n)
        out[: self.h.size] = self.h
        return out

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.h @ x[: self.h.size])


class RegionKind(enum.Enum):
    KEEP_OUT = "keep_out"
    KEEP_IN = "keep_in"


@dataclass(eq=False)
class ConvexRegion:
    edges: list[Halfspace]
    kind: RegionKind = RegionKind.KEEP_OUT
    vertices: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.edges)

    def contains(self, point, tol: float = 0.0) -> bool:
        vals = np.array([e.value(point) - e.g for e in self.edges])
        if self.kind is RegionKind.KEEP_OUT:
            return bool(np.all(vals > tol))
        return bool(np.all(vals <= tol))

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked ``(H, g)`` with ``H`` of shape ``(L, 2)``."""
        return np.array([e.h for e in self.edges]), np.array([e.g for e in self.edges])


@dataclass(frozen=True, eq=False)
class Box:
    """Closed axis-aligned box ``lo <= p <= hi``."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, point, tol: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)[: self.lo.size]
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def keep_in(self) -> ConvexRegion:
        edges = []
        for axis in range(self.lo.size):
            e = np.zeros(self.lo.size)
            e[axis] = 1.0
            edges.append(Halfspace(e, self.hi[axis]))
            edges.append(Halfspace(-e, -self.lo[axis]))
        return ConvexRegion(edges, RegionKind.KEEP_IN)


def polygon_region(vertices) -> ConvexRegion:
    """KEEP_OUT region from a counter-clockwise convex polygon."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise ValueError("polygon needs at least 3 two-dimensional vertices")
    edges = []
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        d = b - a
        outward = np.array([d[1], -d[0]])
        norm = np.linalg.norm(outward)
        if norm == 0.0:
            raise ValueError("polygon has repeated vertices")
        outward /= norm
        edges.append(Halfspace(-outward, -float(outward @ a)))
    return ConvexRegion(edges, RegionKind.KEEP_OUT, v)


def polygon_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


# ---------------------------------------------------------------------------
# probabilistic constraints


def _projected_variance(hs: Halfspace, cov) -> float:
    cov = np.asarray(cov, dtype=float)
    h = hs.lifted(cov.shape[0])
    var = float(h @ cov @ h)
    if var < -VAR_TOL:
        raise ValueError(f"negative projected variance {var:.3e}")
    return max(var, 0.0)


def _check_delta(delta: float) -> float:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"risk bound must lie in (0, 0.5], got {delta}")
    if delta > 0.5:
        logger.warning("risk bound %.4g clamped to 0.5", delta)
        delta = 0.5
    return delta


def margin(var: float, delta: float) -> float:
    """Back-off ``sqrt(2 var) * erfinv(1 - 2 delta)`` for a projected variance."""
    delta = _check_delta(delta)
    if var <= 0.0:
        return 0.0
    return math.sqrt(2.0 * var) * float(special.erfinv(1.0 - 2.0 * delta))


def tighten(hs: Halfspace, cov, delta: float) -> float:
    """Tightened offset: ``h . mean <= tighten(...)`` implies ``Pr[h . x <= g] >= 1 - delta``."""
    return hs.g - margin(_projected_variance(hs, cov), delta)


def tail_probability(slack: float, var: float) -> float:
    """``Pr[z > slack]`` for ``z ~ N(0, var)``; a step function when ``var == 0``."""
    if var <= 0.0:
        return 0.0 if slack >= 0.0 else 1.0
    # erfc form keeps precision deep in the tail
    return 0.5 * float(special.erfc(slack / math.sqrt(2.0 * var)))


def residual_risk(hs: Halfspace, state: GaussianState) -> float:
    """Smallest risk bound the current nominal state satisfies for ``hs``."""
    return tail_probability(hs.g - hs.value(state.mean), _projected_variance(hs, state.cov))


def collision_probability(hs: Halfspace, state: GaussianState) -> float:
    """Probability that ``state`` crosses an (activated) obstacle edge ``hs``."""
    return residual_risk(hs, state)


# ---------------------------------------------------------------------------
# temporal obstacles


def sigma_radius(cov) -> float:
    """Three times the largest standard deviation of the position block."""
    cov = np.asarray(cov, dtype=float)
    block = cov[:2, :2] if cov.ndim == 2 and cov.shape[0] >= 2 else np.atleast_2d(cov)
    lam = float(np.linalg.eigvalsh(0.5 * (block + block.T)).max())
    return 3.0 * math.sqrt(max(lam, 0.0))


def square_region(center, d: float) -> ConvexRegion:
    """Axis-aligned KEEP_OUT square of half-width ``d``."""
    if d < 0:
        raise ValueError("half-width must be non-negative")
    d = max(float(d), MIN_SQUARE)
    c = np.asarray(center, dtype=float)[:2]
    corners = c + d * np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    return polygon_region(corners)


def _square_corners(center, d: float) -> np.ndarray:
    d = max(float(d), MIN_SQUARE)
    return np.asarray(center, dtype=float)[:2] + d * np.array(
        [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
    )


def convex_hull(points, tol: float = 1e-12) -> ConvexRegion:
    """Convex hull (monotone chain) as a KEEP_OUT region with CCW vertices."""
    pts = sorted({(float(p[0]), float(p[1])) for p in np.asarray(points, dtype=float)})
    if len(pts) < 3:
        raise DegenerateHullError("need at least 3 distinct points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple[float, float]] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= tol:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= tol:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateHullError("points are collinear")
    return polygon_region(np.array(hull))


@dataclass(eq=False)
class TemporalObstacle:
    """Per-timestep KEEP_OUT regions bounding one vehicle's planned 3-sigma tube.

    ``regions[s]`` applies at absolute time ``start_time + s``; the last region
    is held for every later time.
    """

    owner: int
    regions: list[ConvexRegion]
    start_time: int = 0
    version: int = 0
    in_goal: bool = False
    centers: list[np.ndarray] = field(default_factory=list)

    def region_at(self, t: int) -> ConvexRegion:
        s = min(max(t - self.start_time, 0), len(self.regions) - 1)
        return self.regions[s]


def temporal_obstacle(
    states: Sequence[GaussianState],
    in_goal_flag: bool = False,
    *,
    owner: int = -1,
    start_time: int | None = None,
    margin: float = 0.0,
    horizon: int | None = None,
    version: int = 0,
) -> TemporalObstacle:
    """Wrap a planned state sequence in time-indexed 3-sigma regions.

    ``margin`` inflates every square (e.g. by the collision distance between
    two vehicles).  ``horizon`` pads the region list so it has ``horizon + 1``
    entries.
    """
    if not states:
        raise ValueError("temporal obstacle needs at least one state")
    if start_time is None:
        start_time = int(states[0].time)
    half = [sigma_radius(s.cov) + margin for s in states]
    centers = [np.asarray(s.mean, dtype=float)[:2] for s in states]
    if in_goal_flag:
        regions = [square_region(centers[-1], half[-1])]
    else:
        regions = [square_region(centers[0], half[0])]
        for k in range(1, len(states) - 1):
            pts = np.vstack(
                [_square_corners(centers[k], half[k]), _square_corners(centers[k + 1], half[k + 1])]
            )
            try:
                regions.append(convex_hull(pts))
            except DegenerateHullError:
                regions.append(square_region(centers[k], half[k]))
        if len(states) > 1:
            regions.append(square_region(centers[-1], half[-1]))
    if horizon is not None:
        while len(regions) < horizon + 1:
            regions.append(regions[-1])
    return TemporalObstacle(owner, regions, start_time, version, in_goal_flag, centers)
