import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from heat_enclosure.geometry import Disk, Rect, ShapeUnion, support_function
from heat_enclosure.reconstruct import (
    HullEstimate, ReconstructionError, SupportTable, ball_complement_enclosure, halfplane_intersection,
    hausdorff_convex, hull_contains_hull, overlay_svg, shape_support_many, sweep_svg,
)

RECT = (-0.5, -0.5, 0.5, 0.5)


def uniform(k, phase=0.0):
    t = phase + 2 * math.pi * np.arange(k) / k
    return np.c_[np.cos(t), np.sin(t)]


def exact_table(shape, W, rect=RECT):
    return SupportTable([(tuple(w), support_function(shape, tuple(w))) for w in W], rect)


def sample_shape(shape, rng, n=2000):
    if isinstance(shape, Disk):
        r = shape.radius * np.sqrt(rng.random(n))
        t = rng.random(n) * 2 * math.pi
        return np.asarray(shape.center) + np.c_[r * np.cos(t), r * np.sin(t)]
    if isinstance(shape, Rect):
        lo, hi = np.asarray(shape.lo), np.asarray(shape.hi)
        return lo + rng.random((n, 2)) * (hi - lo)
    return np.vstack([sample_shape(m, rng, n) for m in shape.members])


def test_square_from_axis_directions():
    a = 0.3
    hull = halfplane_intersection(SupportTable([((1, 0), a), ((0, 1), a), ((-1, 0), a), ((0, -1), a)], RECT))
    v = hull.vertices
    assert sorted(map(tuple, np.round(v, 14).tolist())) == sorted([(-a, -a), (a, -a), (a, a), (-a, a)])
    assert hull.area == pytest.approx(4 * a * a, rel=1e-14)
    assert np.allclose(hull.residuals, 0, atol=1e-15)


def test_circumscribed_polygon_bound():
    # exact Hausdorff distance of the circumscribed 64-gon is r (sec(pi/64) - 1)
    d = Disk((0.1, 0.05), 0.15)
    hull = halfplane_intersection(exact_table(d, uniform(64)))
    got = hausdorff_convex(hull, d)
    assert got == pytest.approx(0.15 * (1 / math.cos(math.pi / 64) - 1), rel=1e-9)
    assert len(hull.vertices) == 64


def test_hausdorff_oracle_against_brute_force(rng):
    hull = halfplane_intersection(exact_table(Disk((0, 0), 0.2), uniform(5, 0.3)))
    d = Disk((0.02, -0.01), 0.19)
    # brute force: max over dense boundary points of distance to the other set
    t = np.linspace(0, 2 * math.pi, 20001)
    circ = np.c_[0.02 + 0.19 * np.cos(t), -0.01 + 0.19 * np.sin(t)]
    v = hull.vertices
    edges = [v[i] + np.outer(np.linspace(0, 1, 4001), v[(i + 1) % len(v)] - v[i]) for i in range(len(v))]
    poly = np.vstack(edges)
    d_poly_to_disk = np.max(np.maximum(np.linalg.norm(poly - [0.02, -0.01], axis=1) - 0.19, 0))
    out = circ[~hull.contains(circ, tol=0)]
    d_disk_to_poly = max((np.min(np.linalg.norm(poly - c, axis=1)) for c in out), default=0.0)
    want = max(d_poly_to_disk, d_disk_to_poly)
    assert hausdorff_convex(hull, d) == pytest.approx(want, rel=1e-4)


@pytest.mark.parametrize("shape", [
    Disk((0.1, 0.05), 0.15),
    Rect((-0.3, -0.1), (0.05, 0.2)),
    ShapeUnion((Disk((-0.2, 0.1), 0.08), Rect((0.1, -0.25), (0.3, -0.05)))),
])
@pytest.mark.parametrize("k", [3, 7, 16])
def test_enclosure_soundness(shape, k, rng):
    hull = halfplane_intersection(exact_table(shape, uniform(k, 0.1)))
    pts = sample_shape(shape, rng)
    W, H = uniform(k, 0.1), np.array([support_function(shape, tuple(w)) for w in uniform(k, 0.1)])
    assert np.all(pts @ W.T <= H + 1e-9)
    assert hull.contains(pts, tol=1e-9).all()


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 2 * math.pi), min_size=1, max_size=8), st.floats(0, 2 * math.pi))
def test_adding_directions_never_enlarges(extra, phase):
    shape = Disk((0.1, 0.05), 0.15)
    base = uniform(4, phase)
    hull = halfplane_intersection(exact_table(shape, base))
    W = list(map(tuple, base))
    for t in extra:
        w = (math.cos(t), math.sin(t))
        if min(math.dist(w, u) for u in W) < 1e-6:
            continue
        W.append(w)
        finer = halfplane_intersection(exact_table(shape, np.array(W)))
        assert hull_contains_hull(finer, hull, tol=1e-9)
        assert finer.area <= hull.area + 1e-12
        hull = finer


def test_empty_intersection_reports_constraints():
    tab = SupportTable([((1, 0), -0.2), ((-1, 0), -0.2), ((0, 1), 0.1), ((0, -1), 0.1)], RECT)
    with pytest.raises(ReconstructionError) as e:
        halfplane_intersection(tab)
    assert len(e.value.constraints) == 4


def test_half_circle_directions_rejected():
    tab = SupportTable([((1, 0), 0.1), ((0, 1), 0.1), ((-1, 1e-3), 0.1)], RECT)
    with pytest.raises(ReconstructionError):
        halfplane_intersection(tab)


def test_table_validation_and_flags():
    with pytest.raises(ReconstructionError):
        SupportTable([((1, 0), 0.1), ((2, 0), 0.2)])
    tab = SupportTable([((3, 4), 0.1), ((1, 0), 0.9)], RECT)
    assert tab.entries[0].omega == pytest.approx((0.6, 0.8))
    assert [e.omega for e in tab.flagged()] == [(1.0, 0.0)]


def test_slightly_infeasible_estimates_keep_residuals():
    d = Disk((0, 0), 0.15)
    W = uniform(8)
    # raising one value past the corner of its two neighbours makes that constraint redundant
    H = shape_support_many(d, W) + np.r_[0.1, np.zeros(7)]
    hull = halfplane_intersection(SupportTable(list(zip(map(tuple, W), H)), RECT))
    assert hull.residuals[0] == pytest.approx(0.25 - 0.15 / math.cos(math.pi / 4), rel=1e-12)
    assert np.allclose(hull.residuals[1:], 0, atol=1e-15)


# --- balls

def test_single_ball_excludes_exactly_ball_in_body():
    enc = ball_complement_enclosure([(1.0, 0.0)], [0.7], RECT, n=200)
    x = -0.5 + (np.arange(200) + 0.5) / 200
    X, Y = np.meshgrid(x, x, indexing="ij")
    assert np.array_equal(enc.allowed, np.hypot(X - 1.0, Y) >= 0.7)
    assert enc.constraints() == [{"p": [1.0, 0.0], "d": 0.7}]
    assert not enc.full_cover


def test_zero_distance_excludes_nothing():
    enc = ball_complement_enclosure([(0.5, 0.9)], [0.0], RECT, n=64)
    assert enc.allowed.all()


def _allowed_length(x, P, d):
    iv = []
    for (px, py), r in zip(P, d):
        q = r * r - (x - px) ** 2
        if q > 0:
            s = math.sqrt(q)
            iv.append((max(py - s, -0.5), min(py + s, 0.5)))
    iv = sorted(i for i in iv if i[1] > i[0])
    covered, end = 0.0, -math.inf
    for a, b in iv:
        a = max(a, end)
        if b > a:
            covered += b - a
        end = max(end, b)
    return 1.0 - covered


def test_compass_probes_enclose_disk(rng):
    disk = Disk((0.0, 0.0), 0.15)
    P = [(1.5, 0), (0, 1.5), (-1.5, 0), (0, -1.5)]
    d = [1.35] * 4
    enc = ball_complement_enclosure(P, d, RECT, n=1024)
    assert enc.admits(sample_shape(disk, rng)).all()
    # independent area oracle: integrate the allowed chord length across x
    area = quad(_allowed_length, -0.5, 0.5, args=(P, d), limit=400, points=[-0.15, 0.15])[0]
    assert enc.area == pytest.approx(area, abs=4 / 1024)
    assert enc.area - disk.area > 0


def test_ball_soundness(rng):
    from heat_enclosure.geometry import distance_to_point

    shape = ShapeUnion((Disk((-0.2, 0.1), 0.08), Rect((0.1, -0.25), (0.3, -0.05))))
    P = [(0.9, 0.1), (-1.2, -0.7), (0.0, 1.4), (0.6, -0.8)]
    d = [distance_to_point(shape, p) for p in P]
    enc = ball_complement_enclosure(P, d, RECT)
    assert enc.admits(sample_shape(shape, rng)).all()


def test_full_cover_flagged_and_errors():
    enc = ball_complement_enclosure([(1.0, 0.0)], [3.0], RECT, n=32)
    assert enc.full_cover
    with pytest.raises(ReconstructionError):
        ball_complement_enclosure([(0.0, 0.0)], [0.1], RECT)
    with pytest.raises(ReconstructionError):
        ball_complement_enclosure([(1.0, 0.0)], [-0.1], RECT)


def test_svg_outputs():
    d = Disk((0.1, 0.05), 0.15)
    hull = halfplane_intersection(exact_table(d, uniform(16)))
    enc = ball_complement_enclosure([(1.5, 0)], [1.25], RECT, n=64)
    s = overlay_svg(RECT, d, hull, enc)
    assert s.startswith("<svg") and "<polygon" in s and "<circle" in s
    s2 = sweep_svg([5, 10, 20], [0.1, 0.2, 0.22], 0.25, 0.24, label="dir00")
    assert s2.startswith("<svg") and "dir00" in s2
