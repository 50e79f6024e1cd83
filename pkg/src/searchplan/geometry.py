"""Cuboid algebra, camera footprint model, face decomposition and coverage volumes.

Bodies are convex halfspace systems ``A x <= b`` with unit outward normals.
Coverage volumes are boxes placed at a standoff distance from each face cell
so that occupying one guarantees the camera footprint spans that cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Slack applied to every halfspace test so boundary points count as inside.
CONTAINMENT_SLACK = 1e-9

# Face index convention for axis-aligned boxes: 1:+x 2:-x 3:+y 4:-y 5:+z 6:-z.
FACE_NORMALS = {
    1: np.array([1.0, 0.0, 0.0]),
    2: np.array([-1.0, 0.0, 0.0]),
    3: np.array([0.0, 1.0, 0.0]),
    4: np.array([0.0, -1.0, 0.0]),
    5: np.array([0.0, 0.0, 1.0]),
    6: np.array([0.0, 0.0, -1.0]),
}
LATERAL_FACES = (1, 2, 3, 4)
TOP_FACE = 5
BOTTOM_FACE = 6


def _vec3(value, label: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{label} must be a finite 3-vector, got {value!r}")
    return arr


@dataclass(frozen=True)
class Cuboid:
    """Convex body ``{x : a_rows @ x <= b}`` with unit-norm outward normals.

    Rows are normalized on construction (offsets rescaled to match) so that
    row residuals are distances in meters.
    """

    a_rows: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_rows, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if a.ndim != 2 or a.shape[1] != 3 or a.shape[0] != b.shape[0]:
            raise ValueError("halfspace system needs an (L,3) matrix and matching offsets")
        if a.shape[0] < 4:
            raise ValueError("a bounded 3D body needs at least 4 halfspaces")
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("zero normal row in halfspace system")
        a = a / norms[:, None]
        b = b / norms
        # Necessary condition for boundedness: every axis direction is blocked
        # by some halfspace.
        for axis in range(3):
            for sign in (1.0, -1.0):
                if not np.any(a[:, axis] * sign > 1e-9):
                    raise ValueError("halfspace system is unbounded")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a_rows", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_center_half_extents(cls, center, half_extents) -> "Cuboid":
        c = _vec3(center, "center")
        h = _vec3(half_extents, "half_extents")
        if np.any(h <= 0):
            raise ValueError("half_extents must be positive")
        rows = np.vstack([FACE_NORMALS[i] for i in range(1, 7)])
        offsets = np.array([c[0] + h[0], -(c[0] - h[0]),
                            c[1] + h[1], -(c[1] - h[1]),
                            c[2] + h[2], -(c[2] - h[2])])
        return cls(rows, offsets)

    @property
    def num_faces(self) -> int:
        return self.a_rows.shape[0]

    def translate(self, offset) -> "Cuboid":
        d = _vec3(offset, "offset")
        return Cuboid(self.a_rows, self.b + self.a_rows @ d)

    def is_axis_aligned_box(self) -> bool:
        if self.num_faces != 6:
            return False
        try:
            self.box_bounds()
        except ValueError:
            return False
        return True

    def box_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-axis (min, max) corners; requires the body to be an axis box."""
        lo = np.full(3, np.nan)
        hi = np.full(3, np.nan)
        for row, off in zip(self.a_rows, self.b):
            axis = int(np.argmax(np.abs(row)))
            rest = np.delete(row, axis)
            if abs(abs(row[axis]) - 1.0) > 1e-9 or np.any(np.abs(rest) > 1e-9):
                raise ValueError("cuboid is not an axis-aligned box")
            if row[axis] > 0:
                hi[axis] = off if np.isnan(hi[axis]) else min(hi[axis], off)
            else:
                lo[axis] = -off if np.isnan(lo[axis]) else max(lo[axis], -off)
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo >= hi):
            raise ValueError("cuboid is not an axis-aligned box")
        return lo, hi

    def centroid(self) -> np.ndarray:
        lo, hi = self.box_bounds()
        return (lo + hi) / 2.0

    def max_face_violation(self, point) -> float:
        """Largest signed distance outside any face (<= 0 means inside)."""
        p = _vec3(point, "point")
        return float(np.max(self.a_rows @ p - self.b))


def contains(cuboid: Cuboid, point, slack: float = CONTAINMENT_SLACK) -> bool:
    """True iff every halfspace inequality holds within ``slack``."""
    return cuboid.max_face_violation(point) <= slack


def footprint_side(d: float, fov_angle: float) -> float:
    """Side length of the square camera footprint at distance ``d``."""
    if not 0.0 < fov_angle < math.pi:
        raise ValueError(f"fov_angle must lie in (0, pi), got {fov_angle}")
    if d < 0:
        raise ValueError("distance must be nonnegative")
    return 2.0 * d * math.tan(fov_angle / 2.0)


@dataclass(frozen=True)
class FaceRect:
    """Rectangle in 3D given by an origin corner and two in-plane edges."""

    origin: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin, "origin"))
        object.__setattr__(self, "edge_u", _vec3(self.edge_u, "edge_u"))
        object.__setattr__(self, "edge_v", _vec3(self.edge_v, "edge_v"))
        if abs(float(self.edge_u @ self.edge_v)) > 1e-9:
            raise ValueError("rectangle edges must be orthogonal")

    @property
    def len_u(self) -> float:
        return float(np.linalg.norm(self.edge_u))

    @property
    def len_v(self) -> float:
        return float(np.linalg.norm(self.edge_v))

    @property
    def area(self) -> float:
        return self.len_u * self.len_v

    @property
    def center(self) -> np.ndarray:
        return self.origin + 0.5 * self.edge_u + 0.5 * self.edge_v


@dataclass(frozen=True)
class FaceSpec:
    """One face of an object: outward normal plus the face rectangle."""

    object_id: str
    face_index: int
    outward_normal: np.ndarray
    rectangle: FaceRect

    def __post_init__(self):
        n = _vec3(self.outward_normal, "outward_normal")
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("outward_normal must be a unit vector")
        if not 1 <= self.face_index <= 6:
            raise ValueError("face_index must lie in 1..6")
        r = self.rectangle
        if abs(float(n @ r.edge_u)) > 1e-9 or abs(float(n @ r.edge_v)) > 1e-9:
            raise ValueError("face edges must be orthogonal to the normal")
        object.__setattr__(self, "outward_normal", n)


@dataclass(frozen=True)
class Waypoint:
    position: np.ndarray
    object_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))


@dataclass(frozen=True)
class CoverageCuboid:
    """Box at standoff distance from one face cell; entering it covers the cell."""

    cuboid: Cuboid
    object_id: str
    face_index: int
    cell_index: int
    cell_rect: FaceRect

    @property
    def centroid(self) -> np.ndarray:
        return self.cuboid.centroid()


def box_faces(cuboid: Cuboid, object_id: str = "") -> dict[int, FaceSpec]:
    """All six faces of an axis-aligned box, keyed by face index.

    In-plane edges follow ascending axis order so cell numbering is stable.
    """
    lo, hi = cuboid.box_bounds()
    size = hi - lo
    faces: dict[int, FaceSpec] = {}
    for idx, normal in FACE_NORMALS.items():
        axis = int(np.argmax(np.abs(normal)))
        u_axis, v_axis = [a for a in range(3) if a != axis]
        origin = lo.copy()
        if normal[axis] > 0:
            origin[axis] = hi[axis]
        edge_u = np.zeros(3)
        edge_u[u_axis] = size[u_axis]
        edge_v = np.zeros(3)
        edge_v[v_axis] = size[v_axis]
        faces[idx] = FaceSpec(object_id, idx, normal, FaceRect(origin, edge_u, edge_v))
    return faces


def decompose_face(face: FaceSpec, r: float) -> list[FaceRect]:
    """Tile the face with a grid of cells no larger than ``r`` per side.

    Cell counts are ``ceil(len/r)`` per axis and cells shrink to fit exactly,
    so the union of cells always equals the face rectangle.
    """
    if r <= 0:
        raise ValueError("cell size must be positive")
    rect = face.rectangle
    if rect.area <= 0:
        raise ValueError("face rectangle must have positive area")
    n_u = max(1, math.ceil(rect.len_u / r - 1e-9))
    n_v = max(1, math.ceil(rect.len_v / r - 1e-9))
    du = rect.edge_u / n_u
    dv = rect.edge_v / n_v
    cells = []
    for iu in range(n_u):
        for iv in range(n_v):
            cells.append(FaceRect(rect.origin + iu * du + iv * dv, du, dv))
    return cells


def generate_coverage_cuboids(
    obj: Cuboid,
    faces,
    d: float,
    fov_angle: float,
    depth: float,
    object_id: str = "",
) -> list[CoverageCuboid]:
    """One coverage box per face cell, centered ``d`` out along the face normal.

    The box cross-section equals the cell rectangle and it spans
    ``[d - depth/2, d + depth/2]`` from the face plane, so it can never touch
    the parent object as long as ``d > depth/2``.
    """
    face_set = sorted(set(int(f) for f in faces))
    if not face_set:
        raise ValueError("at least one face must be selected")
    if any(f < 1 or f > 6 for f in face_set):
        raise ValueError("face indices must lie in 1..6")
    if d <= 0 or depth <= 0:
        raise ValueError("standoff distance and depth must be positive")
    if d <= depth / 2.0:
        raise ValueError(
            f"coverage boxes would intersect the object: standoff {d} <= depth/2 {depth / 2.0}"
        )
    r = footprint_side(d, fov_angle)
    all_faces = box_faces(obj, object_id)
    out: list[CoverageCuboid] = []
    for face_index in face_set:
        face = all_faces[face_index]
        normal = face.outward_normal
        for cell_index, cell in enumerate(decompose_face(face, r), start=1):
            center = cell.center + d * normal
            half = np.abs(cell.edge_u) / 2 + np.abs(cell.edge_v) / 2 + np.abs(normal) * depth / 2
            box = Cuboid.from_center_half_extents(center, half)
            out.append(CoverageCuboid(box, object_id, face_index, cell_index, cell))
    return out


def generate_waypoint(obj: Cuboid, clearance: float, object_id: str = "") -> Waypoint:
    """Point above the top-face centroid, raised by ``clearance``."""
    if clearance <= 0:
        raise ValueError("clearance must be positive")
    lo, hi = obj.box_bounds()
    position = np.array([(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, hi[2] + clearance])
    return Waypoint(position, object_id)
