"""Scene description, exact support/distance oracles and rasterization."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

UNIT_TOL = 1e-12


class GeometryError(ValueError):
    pass


def _as_unit(omega, normalize: bool = False) -> np.ndarray:
    w = np.asarray(omega, dtype=float).reshape(2)
    norm = math.hypot(w[0], w[1])
    if normalize:
        if norm == 0.0:
            raise GeometryError("zero direction")
        return w / norm
    if abs(norm - 1.0) > UNIT_TOL:
        raise GeometryError(f"direction {w.tolist()} is not a unit vector (|w| = {norm!r})")
    return w


@dataclass(frozen=True)
class Disk:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError("disk radius must be positive")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def contains(self, x, y):
        return (np.asarray(x) - self.center[0]) ** 2 + (np.asarray(y) - self.center[1]) ** 2 < self.radius**2

    def bounds(self):
        cx, cy = self.center
        r = self.radius
        return cx - r, cy - r, cx + r, cy + r

    @property
    def area(self) -> float:
        return math.pi * self.radius**2


@dataclass(frozen=True)
class Rect:
    lo: tuple[float, float]
    hi: tuple[float, float]

    def __post_init__(self):
        lo = (float(self.lo[0]), float(self.lo[1]))
        hi = (float(self.hi[0]), float(self.hi[1]))
        if not (lo[0] < hi[0] and lo[1] < hi[1]):
            raise GeometryError(f"rect corners not strictly ordered: {lo} {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        return (x > self.lo[0]) & (x < self.hi[0]) & (y > self.lo[1]) & (y < self.hi[1])

    def corners(self) -> np.ndarray:
        (x0, y0), (x1, y1) = self.lo, self.hi
        return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])

    def bounds(self):
        return self.lo[0], self.lo[1], self.hi[0], self.hi[1]

    @property
    def area(self) -> float:
        return (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])


@dataclass(frozen=True)
class ShapeUnion:
    members: tuple

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise GeometryError("empty union")

    def contains(self, x, y):
        out = self.members[0].contains(x, y)
        for m in self.members[1:]:
            out = out | m.contains(x, y)
        return out

    def bounds(self):
        b = np.array([m.bounds() for m in self.members])
        return b[:, 0].min(), b[:, 1].min(), b[:, 2].max(), b[:, 3].max()

    @property
    def area(self) -> float:
        # members are required to be disjoint
        return sum(m.area for m in self.members)


Shape = Union[Disk, Rect, ShapeUnion]


def support_function(shape: Shape, omega, normalize: bool = False) -> float:
    """Return ``sup_{x in shape} x . omega``.

    With ``normalize=False`` (the default) ``omega`` must be a unit vector.
    ``normalize=True`` skips the check and uses ``omega`` as given, which makes
    the result positively homogeneous of degree one in ``omega``.
    """
    w = np.asarray(omega, dtype=float).reshape(2) if normalize else _as_unit(omega)
    if isinstance(shape, Disk):
        return float(np.dot(shape.center, w) + shape.radius * math.hypot(w[0], w[1]))
    if isinstance(shape, Rect):
        return float(np.max(shape.corners() @ w))
    if isinstance(shape, ShapeUnion):
        return max(support_function(m, w, normalize=True) for m in shape.members)
    raise TypeError(f"unknown shape {shape!r}")


def _distance_unchecked(shape: Shape, p: np.ndarray) -> float:
    if isinstance(shape, Disk):
        return float(math.hypot(p[0] - shape.center[0], p[1] - shape.center[1]) - shape.radius)
    if isinstance(shape, Rect):
        dx = max(shape.lo[0] - p[0], 0.0, p[0] - shape.hi[0])
        dy = max(shape.lo[1] - p[1], 0.0, p[1] - shape.hi[1])
        return float(math.hypot(dx, dy))
    if isinstance(shape, ShapeUnion):
        return min(_distance_unchecked(m, p) for m in shape.members)
    raise TypeError(f"unknown shape {shape!r}")


def distance_to_point(shape: Shape, p) -> float:
    """Euclidean distance from ``p`` to the shape; ``p`` must lie outside it."""
    p = np.asarray(p, dtype=float).reshape(2)
    if bool(shape.contains(p[0], p[1])):
        raise GeometryError(f"point {p.tolist()} lies inside the shape")
    return _distance_unchecked(shape, p)


@dataclass(frozen=True)
class Scene:
    """Rectangular body ``[x0,x1] x [y0,y1]`` holding insulated cavities."""

    omega_rect: tuple[float, float, float, float]
    cavities: tuple = ()
    final_time: float = 1.0

    def __post_init__(self):
        x0, y0, x1, y1 = (float(v) for v in self.omega_rect)
        object.__setattr__(self, "omega_rect", (x0, y0, x1, y1))
        object.__setattr__(self, "cavities", tuple(self.cavities))
        if not (x1 > x0 and y1 > y0):
            raise GeometryError("omega_rect must have positive area")
        if not self.final_time > 0:
            raise GeometryError("final time must be positive")
        for c in self.cavities:
            bx0, by0, bx1, by1 = c.bounds()
            if not (bx0 > x0 and by0 > y0 and bx1 < x1 and by1 < y1):
                raise GeometryError(f"cavity {c!r} is not strictly inside the body")
        members = [m for c in self.cavities for m in (c.members if isinstance(c, ShapeUnion) else (c,))]
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                if _overlap(members[i], members[j]):
                    raise GeometryError("cavities must be pairwise disjoint")

    @property
    def cavity(self) -> Shape | None:
        if not self.cavities:
            return None
        if len(self.cavities) == 1:
            return self.cavities[0]
        return ShapeUnion(self.cavities)

    def body_support(self, omega) -> float:
        return support_function(Rect(self.omega_rect[:2], self.omega_rect[2:]), omega)

    def outside_body(self, p) -> bool:
        x0, y0, x1, y1 = self.omega_rect
        return not (x0 <= p[0] <= x1 and y0 <= p[1] <= y1)


def _overlap(a: Shape, b: Shape) -> bool:
    if isinstance(a, Disk) and isinstance(b, Disk):
        return math.dist(a.center, b.center) < a.radius + b.radius
    if isinstance(a, Disk) and isinstance(b, Rect):
        return _distance_unchecked(b, np.array(a.center)) < a.radius
    if isinstance(a, Rect) and isinstance(b, Disk):
        return _overlap(b, a)
    ax0, ay0, ax1, ay1 = a.bounds()
    bx0, by0, bx1, by1 = b.bounds()
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1


FLUID = 0
CAVITY = 1


@dataclass
class CellMask:
    """Uniform ``n x n`` cell grid over the body with FLUID/CAVITY tags.

    ``tags[i, j]`` refers to the cell with center ``(xc[i], yc[j])``.
    """

    n: int
    rect: tuple[float, float, float, float]
    tags: np.ndarray
    fluid_index: np.ndarray = field(init=False)

    def __post_init__(self):
        x0, y0, x1, y1 = self.rect
        hx = (x1 - x0) / self.n
        hy = (y1 - y0) / self.n
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise GeometryError("cells must be square: use a square body or matching extents")
        self.tags = np.asarray(self.tags, dtype=np.int8)
        idx = np.full(self.tags.shape, -1, dtype=np.int64)
        fl = self.tags == FLUID
        idx[fl] = np.arange(int(fl.sum()))
        self.fluid_index = idx

    @property
    def h(self) -> float:
        return (self.rect[2] - self.rect[0]) / self.n

    @property
    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        h = self.h
        xc = self.rect[0] + (np.arange(self.n) + 0.5) * h
        yc = self.rect[1] + (np.arange(self.n) + 0.5) * h
        return xc, yc

    @property
    def n_fluid(self) -> int:
        return int((self.tags == FLUID).sum())

    @property
    def n_cavity(self) -> int:
        return int((self.tags == CAVITY).sum())

    def fluid_cells(self) -> tuple[np.ndarray, np.ndarray]:
        """(i, j) index arrays of FLUID cells in fluid-index order."""
        order = np.argsort(self.fluid_index[self.tags == FLUID])
        ii, jj = np.nonzero(self.tags == FLUID)
        return ii[order], jj[order]

    def to_grid(self, values: np.ndarray, fill=np.nan) -> np.ndarray:
        out = np.full(self.tags.shape, fill, dtype=float)
        ii, jj = self.fluid_cells()
        out[ii, jj] = values
        return out


def rasterize(scene: Scene, n: int) -> CellMask:
    """Tag each cell CAVITY if its center lies inside a cavity."""
    if n < 8:
        raise GeometryError("need at least 8 cells per axis")
    x0, y0, x1, y1 = scene.omega_rect
    if abs((x1 - x0) - (y1 - y0)) > 1e-12 * (x1 - x0):
        raise GeometryError("rasterize needs a square body for square cells")
    tags = np.zeros((n, n), dtype=np.int8)
    mask = CellMask(n, scene.omega_rect, tags)
    xc, yc = mask.centers
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    h = mask.h
    for c in scene.cavities:
        inside = c.contains(X, Y)
        tags[inside] = CAVITY
        bx0, by0, bx1, by1 = c.bounds()
        if min(bx1 - bx0, by1 - by0) < 2 * h:
            warnings.warn(f"cavity {c!r} is thinner than two cells at n={n}", stacklevel=2)
    return CellMask(n, scene.omega_rect, tags)


def shape_from_dict(d: dict) -> Shape:
    kind = d.get("type")
    if kind == "disk":
        return Disk(tuple(d["center"]), float(d["radius"]))
    if kind == "rect":
        return Rect(tuple(d["lo"]), tuple(d["hi"]))
    if kind == "union":
        return ShapeUnion(tuple(shape_from_dict(m) for m in d["members"]))
    raise GeometryError(f"unknown shape type {kind!r}")


def shape_to_dict(s: Shape) -> dict:
    if isinstance(s, Disk):
        return {"type": "disk", "center": list(s.center), "radius": s.radius}
    if isinstance(s, Rect):
        return {"type": "rect", "lo": list(s.lo), "hi": list(s.hi)}
    return {"type": "union", "members": [shape_to_dict(m) for m in s.members]}


def scene_from_dict(d: dict) -> Scene:
    return Scene(
        omega_rect=tuple(d["omega_rect"]),
        cavities=tuple(shape_from_dict(c) for c in d.get("cavities", [])),
        final_time=float(d.get("final_time", 1.0)),
    )


def sample_shape(shape: Shape, m: int = 64) -> np.ndarray:
    """Points on the closure of ``shape`` (boundary plus a coarse interior fill)."""
    if isinstance(shape, Disk):
        th = np.linspace(0, 2 * np.pi, 4 * m, endpoint=False)
        pts = [np.c_[shape.center[0] + shape.radius * np.cos(th), shape.center[1] + shape.radius * np.sin(th)]]
        for rr in np.linspace(0, shape.radius, 6)[:-1]:
            pts.append(np.c_[shape.center[0] + rr * np.cos(th[::4]), shape.center[1] + rr * np.sin(th[::4])])
        return np.vstack(pts)
    if isinstance(shape, Rect):
        s = np.linspace(0, 1, m)
        X, Y = np.meshgrid(shape.lo[0] + s * (shape.hi[0] - shape.lo[0]), shape.lo[1] + s * (shape.hi[1] - shape.lo[1]))
        return np.c_[X.ravel(), Y.ravel()]
    return np.vstack([sample_shape(mm, m) for mm in shape.members])


def unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def uniform_directions(k: int) -> list[np.ndarray]:
    return [unit(2 * math.pi * i / k) for i in range(k)]


__all__: Sequence[str] = [
    "CAVITY", "FLUID", "CellMask", "Disk", "GeometryError", "Rect", "Scene", "Shape", "ShapeUnion",
    "distance_to_point", "rasterize", "sample_shape", "scene_from_dict", "shape_from_dict", "shape_to_dict",
    "support_function", "uniform_directions", "unit",
]
