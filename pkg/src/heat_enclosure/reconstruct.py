"""Convex-hull estimates from support values and ball-complement enclosures from distances."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Disk, Rect, ShapeUnion, _as_unit


class ReconstructionError(ValueError):
    def __init__(self, msg, constraints=None):
        super().__init__(msg)
        self.constraints = constraints or []


@dataclass
class SupportEntry:
    omega: tuple[float, float]
    h: float
    diagnostics: dict = field(default_factory=dict)


@dataclass
class SupportTable:
    """Support estimates per direction; entries beyond the body's own support get flagged."""

    entries: list[SupportEntry]
    rect: tuple[float, float, float, float] | None = None
    margin: float = 0.05

    def __post_init__(self):
        fixed = []
        for e in self.entries:
            if not isinstance(e, SupportEntry):
                e = SupportEntry(*e)
            w = _as_unit(e.omega, normalize=True)
            fixed.append(SupportEntry((float(w[0]), float(w[1])), float(e.h), dict(e.diagnostics)))
        self.entries = fixed
        W = self.directions
        for i in range(len(W)):
            for j in range(i):
                if np.linalg.norm(W[i] - W[j]) < 1e-9:
                    raise ReconstructionError(f"duplicate direction {tuple(W[i])}")
        if self.rect is not None:
            hb = _rect_support(self.rect, W)
            for e, lim in zip(self.entries, hb):
                e.diagnostics["outside_body"] = bool(e.h > lim + self.margin)

    @property
    def directions(self) -> np.ndarray:
        return np.array([e.omega for e in self.entries], dtype=float).reshape(-1, 2)

    @property
    def values(self) -> np.ndarray:
        return np.array([e.h for e in self.entries], dtype=float)

    def flagged(self) -> list[SupportEntry]:
        return [e for e in self.entries if e.diagnostics.get("outside_body")]


@dataclass
class HullEstimate:
    vertices: np.ndarray  # (k, 2), counter-clockwise
    residuals: np.ndarray | None = None  # h_est - support of the polygon, per table direction

    @property
    def area(self) -> float:
        v = self.vertices
        if len(v) < 3:
            return 0.0
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def support(self, W) -> np.ndarray:
        W = np.atleast_2d(np.asarray(W, dtype=float))
        return np.max(self.vertices @ W.T, axis=0)

    def contains(self, pts, tol: float = 1e-9) -> np.ndarray:
        """Point-in-convex-polygon test with slack ``tol``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        rel = pts[:, None, :] - v[None, :, :]
        cross = e[None, :, 0] * rel[..., 1] - e[None, :, 1] * rel[..., 0]
        lens = np.linalg.norm(e, axis=1)
        return np.all(cross >= -tol * lens[None, :], axis=1)


def _rect_support(rect, W) -> np.ndarray:
    x0, y0, x1, y1 = rect
    c = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    return np.max(c @ np.atleast_2d(W).T, axis=0)


def shape_support_many(shape, W) -> np.ndarray:
    """Vectorized support function over many unit directions ``W`` (k, 2)."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if isinstance(shape, Disk):
        return W @ np.asarray(shape.center) + shape.radius * np.linalg.norm(W, axis=1)
    if isinstance(shape, Rect):
        return np.max(shape.corners() @ W.T, axis=0)
    if isinstance(shape, ShapeUnion):
        return np.max([shape_support_many(m, W) for m in shape.members], axis=0)
    if isinstance(shape, HullEstimate):
        return shape.support(W)
    raise ReconstructionError(f"unsupported shape {shape!r}")


def _clip(poly: list, w: np.ndarray, h: float) -> list:
    """Sutherland-Hodgman clip of a polygon against ``x.w <= h``."""
    out = []
    k = len(poly)
    for i in range(k):
        a, b = poly[i], poly[(i + 1) % k]
        fa, fb = a @ w - h, b @ w - h
        if fa <= 0:
            out.append(a)
        if (fa < 0 < fb) or (fb < 0 < fa):
            t = fa / (fa - fb)
            out.append(a + t * (b - a))
    # drop consecutive duplicates
    clean = []
    for p in out:
        if not clean or np.linalg.norm(p - clean[-1]) > 1e-14:
            clean.append(p)
    if len(clean) > 1 and np.linalg.norm(clean[0] - clean[-1]) <= 1e-14:
        clean.pop()
    return clean


def _spans_circle(W: np.ndarray) -> bool:
    ang = np.sort(np.arctan2(W[:, 1], W[:, 0]))
    gaps = np.diff(np.r_[ang, ang[0] + 2 * math.pi])
    return len(W) >= 3 and float(np.max(gaps)) < math.pi - 1e-12


def halfplane_intersection(table: SupportTable, rect=None) -> HullEstimate:
    """Intersect ``{x : x.omega <= h(omega)}`` over the table, clipped to ``rect``.

    Raises :class:`ReconstructionError` (carrying the constraints) when the
    intersection is empty.
    """
    W, H = table.directions, table.values
    if not _spans_circle(W):
        raise ReconstructionError("directions must not lie in a closed half-circle (need >= 3 spanning S^1)")
    rect = rect if rect is not None else table.rect
    if rect is None:
        # a box that certainly contains the intersection
        R = 2.0 * float(np.max(np.abs(H))) + 1.0
        rect = (-R, -R, R, R)
    x0, y0, x1, y1 = rect
    poly = [np.array(p, dtype=float) for p in ((x0, y0), (x1, y0), (x1, y1), (x0, y1))]
    for w, h in zip(W, H):
        poly = _clip(poly, w, h)
        if len(poly) < 3:
            raise ReconstructionError(
                "empty intersection: support estimates are mutually inconsistent",
                [(tuple(w), float(h)) for w, h in zip(W, H)],
            )
    hull = HullEstimate(np.array(poly))
    if hull.area <= 0:
        raise ReconstructionError("degenerate intersection", [(tuple(w), float(h)) for w, h in zip(W, H)])
    hull.residuals = H - hull.support(W)
    return hull


def hausdorff_convex(a, b, n_dirs: int = 8192) -> float:
    """Hausdorff distance between the convex hulls of ``a`` and ``b``: ``max_w |h_a(w) - h_b(w)|``.

    Directions: a dense uniform set plus the edge normals and vertex
    directions of any polygon argument, where the maximum is attained.
    """
    t = np.linspace(0.0, 2.0 * math.pi, n_dirs, endpoint=False)
    W = [np.c_[np.cos(t), np.sin(t)]]
    for s in (a, b):
        if isinstance(s, HullEstimate):
            v = s.vertices
            e = np.roll(v, -1, axis=0) - v
            nrm = np.c_[e[:, 1], -e[:, 0]]
            W.append(nrm / np.linalg.norm(nrm, axis=1)[:, None])
            other = b if s is a else a
            if isinstance(other, Disk):
                d = v - np.asarray(other.center)
                ok = np.linalg.norm(d, axis=1) > 0
                W.append(d[ok] / np.linalg.norm(d[ok], axis=1)[:, None])
    W = np.vstack(W)
    return float(np.max(np.abs(shape_support_many(a, W) - shape_support_many(b, W))))


def hull_contains_hull(inner: HullEstimate, outer: HullEstimate, tol: float = 1e-9) -> bool:
    """Set inclusion through the vertices of ``inner`` (both convex)."""
    return bool(np.all(outer.contains(inner.vertices, tol)))


# ---------------------------------------------------------------------------
# point probes


@dataclass
class BallEnclosure:
    """Region of ``rect`` not excluded by any ball ``|x - p_i| < d_i``."""

    points: np.ndarray
    radii: np.ndarray
    rect: tuple[float, float, float, float]
    n: int
    allowed: np.ndarray  # (n, n) bool on cell centres, [ix, iy]
    full_cover: bool

    @property
    def cell_area(self) -> float:
        x0, y0, x1, y1 = self.rect
        return (x1 - x0) * (y1 - y0) / self.n**2

    @property
    def area(self) -> float:
        return float(self.allowed.sum()) * self.cell_area

    def constraints(self) -> list[dict]:
        return [{"p": [float(p[0]), float(p[1])], "d": float(d)} for p, d in zip(self.points, self.radii)]

    def admits(self, pts) -> np.ndarray:
        """True where a point is outside every open excluded ball."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        dist = np.linalg.norm(pts[:, None, :] - self.points[None, :, :], axis=2)
        return np.all(dist >= self.radii[None, :], axis=1)


def ball_complement_enclosure(points, distances, rect, n: int = 256) -> BallEnclosure:
    """Constraints ``|x - p_i| >= d_i`` and their rasterized indicator on an ``n x n`` grid over ``rect``."""
    P = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, 2)
    d = np.asarray(distances, dtype=float).reshape(-1)
    if P.shape[0] != d.size:
        raise ReconstructionError("one distance per point")
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise ReconstructionError("distances must be finite and non-negative")
    x0, y0, x1, y1 = rect
    inside = (P[:, 0] >= x0) & (P[:, 0] <= x1) & (P[:, 1] >= y0) & (P[:, 1] <= y1)
    if np.any(inside):
        raise ReconstructionError(f"source points must lie outside the body: {P[inside].tolist()}")
    xc = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    yc = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    allowed = np.ones((n, n), dtype=bool)
    for p, r in zip(P, d):
        allowed &= np.hypot(X - p[0], Y - p[1]) >= r
    return BallEnclosure(P, d, tuple(rect), n, allowed, not bool(allowed.any()))


# ---------------------------------------------------------------------------
# SVG output


def _svg_shape(shape, tf, style) -> list[str]:
    if shape is None:
        return []
    if isinstance(shape, ShapeUnion):
        return [s for m in shape.members for s in _svg_shape(m, tf, style)]
    if isinstance(shape, Disk):
        cx, cy = tf(shape.center)
        r = shape.radius * tf.scale
        return [f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{r:.3f}" {style}/>']
    if isinstance(shape, Rect):
        pts = " ".join("{:.3f},{:.3f}".format(*tf(c)) for c in shape.corners())
        return [f'<polygon points="{pts}" {style}/>']
    raise ReconstructionError(f"unsupported shape {shape!r}")


class _Transform:
    def __init__(self, box, size):
        x0, y0, x1, y1 = box
        self.box = box
        self.scale = size / max(x1 - x0, y1 - y0)
        self.size = size

    def __call__(self, p):
        x0, y0, _, y1 = self.box
        return (p[0] - x0) * self.scale, (y1 - p[1]) * self.scale


def overlay_svg(rect, true_shape=None, hull: HullEstimate | None = None, balls: BallEnclosure | None = None,
                size: int = 480) -> str:
    """Body outline, true cavity (if known), estimated hull and excluded balls."""
    x0, y0, x1, y1 = rect
    pad = 0.1 * max(x1 - x0, y1 - y0)
    box = (x0 - pad, y0 - pad, x1 + pad, y1 + pad)
    tf = _Transform(box, size)
    w = (box[2] - box[0]) * tf.scale
    h = (box[3] - box[1]) * tf.scale
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}">',
           '<rect width="100%" height="100%" fill="white"/>']
    out.append('<g clip-path="none">')
    if balls is not None:
        for p, r in zip(balls.points, balls.radii):
            cx, cy = tf(p)
            out.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="{r * tf.scale:.3f}" fill="#f4c7c3" '
                       f'fill-opacity="0.4" stroke="#c0392b" stroke-dasharray="4 3"/>')
    out.append('</g>')
    a, b = tf((x0, y1)), tf((x1, y0))
    out.append(f'<rect x="{a[0]:.3f}" y="{a[1]:.3f}" width="{b[0] - a[0]:.3f}" height="{b[1] - a[1]:.3f}" '
               'fill="none" stroke="black" stroke-width="2"/>')
    out += _svg_shape(true_shape, tf, 'fill="#9ecae1" stroke="#08519c"')
    if hull is not None:
        pts = " ".join("{:.3f},{:.3f}".format(*tf(v)) for v in hull.vertices)
        out.append(f'<polygon points="{pts}" fill="none" stroke="#d95f02" stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def sweep_svg(sqrt_tau, h_est, reference: float | None = None, fit_h: float | None = None, size: int = 420,
              label: str = "") -> str:
    """Pointwise estimates against sqrt(tau), with optional reference and fitted levels."""
    s = np.asarray(sqrt_tau, dtype=float)
    y = np.asarray(h_est, dtype=float)
    levels = [v for v in (reference, fit_h) if v is not None]
    finite = y[np.isfinite(y)]
    ylo = min([*finite, *levels], default=0.0)
    yhi = max([*finite, *levels], default=1.0)
    if yhi - ylo < 1e-6:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    pad = 0.1 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = (float(s.min()), float(s.max())) if s.size else (0.0, 1.0)
    if xhi - xlo < 1e-9:
        xlo, xhi = xlo - 1, xhi + 1
    m = 40

    def px(v):
        return m + (v - xlo) / (xhi - xlo) * (size - 2 * m)

    def py(v):
        return size - m - (v - ylo) / (yhi - ylo) * (size - 2 * m)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<line x1="{m}" y1="{size - m}" x2="{size - m}" y2="{size - m}" stroke="black"/>',
           f'<line x1="{m}" y1="{m}" x2="{m}" y2="{size - m}" stroke="black"/>',
           f'<text x="{size / 2:.0f}" y="{size - 8}" font-size="12" text-anchor="middle">sqrt(tau)</text>',
           f'<text x="8" y="{m - 10}" font-size="12">h_est {label}</text>',
           f'<text x="{m - 4}" y="{py(ylo) + 4:.1f}" font-size="10" text-anchor="end">{ylo:.3g}</text>',
           f'<text x="{m - 4}" y="{py(yhi) + 4:.1f}" font-size="10" text-anchor="end">{yhi:.3g}</text>']
    if reference is not None:
        out.append(f'<line x1="{m}" y1="{py(reference):.2f}" x2="{size - m}" y2="{py(reference):.2f}" '
                   'stroke="#08519c" stroke-dasharray="5 4"/>')
    if fit_h is not None:
        out.append(f'<line x1="{m}" y1="{py(fit_h):.2f}" x2="{size - m}" y2="{py(fit_h):.2f}" stroke="#d95f02"/>')
    for a, b in zip(s, y):
        if np.isfinite(b):
            out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


__all__ = [
    "BallEnclosure", "HullEstimate", "ReconstructionError", "SupportEntry", "SupportTable",
    "ball_complement_enclosure", "halfplane_intersection", "hausdorff_convex", "hull_contains_hull",
    "overlay_svg", "shape_support_many", "sweep_svg",
]
