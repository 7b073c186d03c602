"""Obstacle-free space as an ordered chain of overlapping convex polytopes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from .errors import CorridorError, CorridorParseError, DomainError, UnsupportedError


@dataclass(frozen=True, eq=False)
class ConvexRegion:
    """Polytope ``{p : A p <= b}`` with optional vertex list."""

    A: np.ndarray
    b: np.ndarray
    vertices: np.ndarray | None = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[1] != 3 or A.shape[0] != b.size or b.size == 0:
            raise ValueError(f"halfspace arrays have shapes A{A.shape}, b{b.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("halfspace data must be finite")
        A.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.vertices is not None:
            v = np.array(self.vertices, dtype=float).reshape(-1, 3)
            v.flags.writeable = False
            object.__setattr__(self, "vertices", v)

    @property
    def halfspaces(self):
        return list(zip(self.A, self.b))

    def violation(self, p) -> float:
        """Largest ``a.p - b`` over the halfspaces (<= 0 inside)."""
        return float(np.max(self.A @ np.asarray(p, dtype=float) - self.b))

    def to_dict(self) -> dict:
        d = {"A": self.A.tolist(), "b": self.b.tolist()}
        if self.vertices is not None:
            d["vertices"] = self.vertices.tolist()
        return d


def box(lo, hi) -> ConvexRegion:
    """Axis-aligned box ``lo <= p <= hi`` with its eight vertices."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    A = np.vstack([np.eye(3), -np.eye(3)])
    b = np.concatenate([hi, -lo])
    corners = np.array(
        [[(hi if (i >> k) & 1 else lo)[k] for k in range(3)] for i in range(8)]
    )
    return ConvexRegion(A, b, corners)


def contains(region: ConvexRegion, p, tol: float = 0.0) -> bool:
    """True iff ``a_j . p <= b_j + tol`` for every halfspace."""
    p = np.asarray(p, dtype=float)
    return bool(np.all(region.A @ p <= region.b + tol))


def chebyshev_center(A, b):
    """Center and radius of the largest ball inside ``A p <= b``.

    Returns ``(None, -inf)`` when the polytope is empty. The radius is capped
    at 1e6 so unbounded sets still return a point.
    """
    norms = np.linalg.norm(A, axis=1)
    c = np.array([0.0, 0.0, 0.0, -1.0])
    res = linprog(
        c,
        A_ub=np.hstack([A, norms[:, None]]),
        b_ub=b,
        bounds=[(None, None)] * 3 + [(None, 1e6)],
        method="highs",
    )
    if res.status != 0:
        return None, -math.inf
    return res.x[:3], float(res.x[3])


def central_point(A, b):
    """A well-centred interior point of ``A p <= b``, or ``None`` if empty.

    Chebyshev centres are not unique for slabs and boxes (the LP returns a
    vertex of the optimal face), so the set is shrunk by half the Chebyshev
    radius and the midpoint of its axis-aligned extent is used when it stays
    inside; otherwise the Chebyshev centre itself.
    """
    center, radius = chebyshev_center(A, b)
    if center is None or radius < 0.0:
        return None, radius
    shrunk = b - 0.5 * radius * np.linalg.norm(A, axis=1)
    lo = np.empty(3)
    hi = np.empty(3)
    for k in range(3):
        for sign, out in ((1.0, lo), (-1.0, hi)):
            c = np.zeros(3)
            c[k] = sign
            res = linprog(c, A_ub=A, b_ub=shrunk, bounds=[(None, None)] * 3, method="highs")
            if res.status != 0:
                return center, radius
            out[k] = res.x[k]
    mid = 0.5 * (lo + hi)
    if np.all(A @ mid <= shrunk + 1e-12):
        return mid, radius
    return center, radius


def _is_bounded(A, b) -> bool:
    for k in range(3):
        for sign in (1.0, -1.0):
            c = np.zeros(3)
            c[k] = sign
            res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * 3, method="highs")
            if res.status != 0:
                return False
    return True


def check_region(region: ConvexRegion, index: int) -> np.ndarray:
    """Validate one region; returns an interior probe point."""
    center, radius = chebyshev_center(region.A, region.b)
    if center is None or radius < 0.0:
        raise CorridorError(f"region {index} is empty", index=index)
    if not _is_bounded(region.A, region.b):
        raise CorridorError(f"region {index} is unbounded", index=index)
    if region.vertices is not None:
        for v in region.vertices:
            if not contains(region, v, 1e-9):
                raise CorridorError(
                    f"region {index} lists vertex {v.tolist()} outside its halfspaces",
                    index=index,
                )
    return center


def _unit_quaternion(q, name):
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != 4 or not np.all(np.isfinite(q)) or np.linalg.norm(q) == 0.0:
        raise CorridorError(f"{name} must be a nonzero quaternion [w, x, y, z]", field=name)
    q = q / np.linalg.norm(q)
    q.flags.writeable = False
    return q


@dataclass(frozen=True, eq=False)
class Corridor:
    """Ordered regions ``P_1..P_m`` with start and goal points.

    Construction validates every region and the overlap of consecutive
    regions; ``overlap_points[k]`` is a point inside both ``P_{k+1}`` and
    ``P_{k+2}`` (0-based list of ``m - 1`` points).
    """

    regions: tuple
    start: np.ndarray
    goal: np.ndarray
    start_frame: np.ndarray | None = None
    goal_frame: np.ndarray | None = None
    overlap_points: tuple = field(init=False, repr=False)
    region_centers: tuple = field(init=False, repr=False)

    def __post_init__(self):
        regions = tuple(self.regions)
        if not regions:
            raise CorridorError("a corridor needs at least one region")
        object.__setattr__(self, "regions", regions)
        for name in ("start", "goal"):
            p = np.array(getattr(self, name), dtype=float).reshape(-1)
            if p.size != 3 or not np.all(np.isfinite(p)):
                raise CorridorError(f"{name} must be a finite 3-vector", field=name)
            p.flags.writeable = False
            object.__setattr__(self, name, p)
        for name in ("start_frame", "goal_frame"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, _unit_quaternion(getattr(self, name), name))

        for k, r in enumerate(regions):
            check_region(r, k + 1)
        centers = [central_point(r.A, r.b)[0] for r in regions]
        overlaps = []
        for k in range(len(regions) - 1):
            A = np.vstack([regions[k].A, regions[k + 1].A])
            b = np.concatenate([regions[k].b, regions[k + 1].b])
            q, radius = central_point(A, b)
            if q is None or radius < 0.0:
                raise CorridorError(
                    f"region {k + 2} does not overlap region {k + 1}", index=k + 2
                )
            overlaps.append(q)
        if not contains(regions[0], self.start, 1e-9):
            raise CorridorError("start lies outside region 1", index=1, field="start")
        if not contains(regions[-1], self.goal, 1e-9):
            raise CorridorError(
                f"goal lies outside region {len(regions)}", index=len(regions), field="goal"
            )
        object.__setattr__(self, "overlap_points", tuple(overlaps))
        object.__setattr__(self, "region_centers", tuple(centers))

    @property
    def m(self) -> int:
        return len(self.regions)

    def waypoints(self) -> np.ndarray:
        """Start, the overlap probe points, and goal: ``m + 1`` points."""
        return np.vstack([self.start, *self.overlap_points, self.goal])

    def is_planar(self, tol: float = 1e-2) -> bool:
        """True when every region is thinner than ``tol`` in z around z = 0."""
        for r in self.regions:
            for sign in (1.0, -1.0):
                res = linprog(
                    [0.0, 0.0, -sign], A_ub=r.A, b_ub=r.b, bounds=[(None, None)] * 3,
                    method="highs",
                )
                if res.status != 0 or abs(res.x[2]) > tol:
                    return False
        return abs(self.start[2]) <= tol and abs(self.goal[2]) <= tol

    def to_dict(self) -> dict:
        d = {
            "regions": [r.to_dict() for r in self.regions],
            "start": self.start.tolist(),
            "goal": self.goal.tolist(),
        }
        if self.start_frame is not None:
            d["start_frame"] = self.start_frame.tolist()
        if self.goal_frame is not None:
            d["goal_frame"] = self.goal_frame.tolist()
        return d


def region_of(corridor: Corridor, xi: float) -> int:
    """1-based index of the region paired with global parameter ``xi``."""
    m = corridor.m
    if not (0.0 <= xi <= m) or not math.isfinite(xi):
        raise DomainError(f"xi must lie in [0, {m}], got {xi!r}")
    return min(int(math.floor(xi)) + 1, m)


def corridor_from_dict(doc) -> Corridor:
    if not isinstance(doc, dict):
        raise CorridorParseError("corridor document must be a JSON object")
    try:
        raw_regions = doc["regions"]
        start = doc["start"]
        goal = doc["goal"]
    except KeyError as exc:
        raise CorridorParseError(f"missing key {exc.args[0]!r}", field=exc.args[0]) from None
    if not isinstance(raw_regions, list) or not raw_regions:
        raise CorridorParseError("'regions' must be a non-empty list", field="regions")
    regions = []
    for k, r in enumerate(raw_regions, start=1):
        try:
            regions.append(ConvexRegion(r["A"], r["b"], r.get("vertices")))
        except (KeyError, TypeError, ValueError) as exc:
            raise CorridorParseError(f"region {k}: {exc}", index=k) from None
    try:
        return Corridor(
            regions, start, goal, doc.get("start_frame"), doc.get("goal_frame")
        )
    except (TypeError, ValueError) as exc:
        raise CorridorParseError(str(exc)) from None


def load_corridor(path) -> Corridor:
    """Read and validate a corridor JSON file."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CorridorParseError(f"cannot read corridor file {path}: {exc}") from None
    return corridor_from_dict(doc)


def save_corridor(corridor: Corridor, path) -> None:
    Path(path).write_text(json.dumps(corridor.to_dict(), indent=2) + "\n")


def _axis_bounds(region: ConvexRegion):
    lo = np.full(3, -np.inf)
    hi = np.full(3, np.inf)
    for a, bj in zip(region.A, region.b):
        nz = np.flatnonzero(a)
        if nz.size != 1:
            raise UnsupportedError("box_split needs an axis-aligned box")
        k = nz[0]
        if a[k] > 0:
            hi[k] = min(hi[k], bj / a[k])
        else:
            lo[k] = max(lo[k], bj / a[k])
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnsupportedError("box_split needs a bounded box")
    return lo, hi


def box_split(region: ConvexRegion, cuts: int) -> list[ConvexRegion]:
    """Split a box along its longest axis into ``cuts + 1`` overlapping boxes.

    Neighbouring pieces overlap by 10% of the piece width, centered on the cut.
    """
    if cuts < 0:
        raise ValueError("cuts must be non-negative")
    lo, hi = _axis_bounds(region)
    if cuts == 0:
        return [region]
    k = int(np.argmax(hi - lo))
    width = (hi[k] - lo[k]) / (cuts + 1)
    out = []
    for i in range(cuts + 1):
        a = lo.copy()
        b = hi.copy()
        a[k] = max(lo[k], lo[k] + i * width - 0.05 * width)
        b[k] = min(hi[k], lo[k] + (i + 1) * width + 0.05 * width)
        out.append(box(a, b))
    return out
