import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from heat_enclosure import _fallback, grid
from heat_enclosure.geometry import CAVITY, FLUID, CellMask, Disk, Rect, Scene, rasterize
from heat_enclosure.grid import (
    ConvergenceError, GridError, SparseOperator, boundary_faces, build_neumann_laplacian, cavity_faces, cg_solve,
    flux_load,
)
from heat_enclosure.probes import DirectionalProbe, probe_normal_derivative

UNIT = (0.0, 0.0, 1.0, 1.0)


def empty(n, rect=UNIT):
    return CellMask(n, rect, np.zeros((n, n), dtype=np.int8))


def test_two_by_two_row_sums_zero():
    A = build_neumann_laplacian(empty(2)).to_scipy().toarray()
    assert np.allclose(A.sum(axis=1), 0.0, atol=1e-12)
    assert A.shape == (4, 4)


def test_constants_in_null_space(small_mask):
    A = build_neumann_laplacian(small_mask)
    assert np.max(np.abs(A.matvec(np.ones(A.dim)))) < 1e-9


def test_eigenvalues_match_cosine_pattern():
    n = 16
    A = build_neumann_laplacian(empty(n)).to_scipy().toarray()
    h = 1.0 / n
    got = np.sort(np.linalg.eigvalsh(A))
    j, k = np.meshgrid(np.arange(n), np.arange(n))
    want = np.sort((2 * (2 - np.cos(np.pi * j / n) - np.cos(np.pi * k / n)) / h**2).ravel())
    assert np.max(np.abs(got - want)) <= 1e-10 * np.max(want)


def test_at_most_five_nonzeros_and_symmetric(small_mask):
    A = build_neumann_laplacian(small_mask)
    assert np.max(np.diff(A.indptr)) <= 5
    S = A.to_scipy()
    assert abs(S - S.T).max() == 0.0


def test_disconnected_fluid_rejected():
    tags = np.zeros((8, 8), dtype=np.int8)
    tags[:, 4] = CAVITY
    with pytest.raises(GridError):
        build_neumann_laplacian(CellMask(8, UNIT, tags))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_symmetry_and_semidefinite(seed):
    rng = np.random.default_rng(seed)
    n = 24
    tags = (rng.random((n, n)) < 0.15).astype(np.int8)
    tags[0, :] = tags[-1, :] = tags[:, 0] = tags[:, -1] = FLUID
    mask = CellMask(n, UNIT, tags)
    try:
        A = build_neumann_laplacian(mask)
    except GridError:
        return  # random cavity cut the fluid region
    y, z = rng.standard_normal(A.dim), rng.standard_normal(A.dim)
    scale = np.linalg.norm(y) * np.linalg.norm(z) * 8 * n * n
    assert abs(y @ A.matvec(z) - z @ A.matvec(y)) <= 1e-12 * scale
    assert y @ A.matvec(y) >= -1e-12 * (y @ y)
    # zero-flux evolution keeps the mean: A maps into the complement of constants
    assert abs(np.sum(A.matvec(y))) <= 1e-9 * np.linalg.norm(y) * n * n


def test_boundary_faces_tile_the_boundary(small_mask):
    f = boundary_faces(small_mask)
    assert len(f) == 4 * small_mask.n
    assert np.isclose(f.length.sum(), 4.0)
    assert np.all(np.abs(np.linalg.norm(f.normal, axis=1) - 1) == 0)
    assert set(map(tuple, f.normal.tolist())) == {(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)}
    # counter-clockwise: consecutive face centres turn left overall
    c = f.center
    area = 0.5 * np.sum(c[:, 0] * np.roll(c[:, 1], -1) - np.roll(c[:, 0], -1) * c[:, 1])
    assert area > 0


def test_cavity_touching_boundary_rejected():
    tags = np.zeros((8, 8), dtype=np.int8)
    tags[0, 3] = CAVITY
    with pytest.raises(GridError):
        boundary_faces(CellMask(8, UNIT, tags))


def test_cavity_faces_normals_point_into_cavity(small_mask):
    cf = cavity_faces(small_mask)
    step = cf.cavity_center - cf.fluid_center
    assert np.allclose(step, cf.normal * small_mask.h)
    ii, jj = cf.cavity_ij.T
    assert np.all(small_mask.tags[ii, jj] == CAVITY)


def test_flux_load_zero_and_perimeter(small_mask):
    f = boundary_faces(small_mask)
    assert np.all(flux_load(small_mask, f, np.zeros(len(f))) == 0)
    b = flux_load(small_mask, f, np.ones(len(f)))
    assert math.isclose(b.sum() * small_mask.h**2, 4.0, rel_tol=1e-14)
    with pytest.raises(GridError):
        flux_load(small_mask, f, np.ones(3))


def test_flux_load_matches_edge_quadrature():
    # midpoint sums of dv/dnu against Gauss-Legendre on each edge (analytic probe)
    n, tau = 128, 25.0
    mask = empty(n, (-0.5, -0.5, 0.5, 0.5))
    f = boundary_faces(mask)
    pr = DirectionalProbe((0.6, 0.8), tau)
    g = probe_normal_derivative(pr, f.center, f.normal)
    total = flux_load(mask, f, g).sum() * mask.h**2
    xg, wg = np.polynomial.legendre.leggauss(40)
    s = 0.5 * xg
    exact = 0.0
    for nu, pts in (((1, 0), np.c_[np.full_like(s, 0.5), s]), ((-1, 0), np.c_[np.full_like(s, -0.5), s]),
                    ((0, 1), np.c_[s, np.full_like(s, 0.5)]), ((0, -1), np.c_[s, np.full_like(s, -0.5)])):
        exact += 0.5 * wg @ probe_normal_derivative(pr, pts, np.tile(nu, (s.size, 1)))
    # midpoint rule error ~ h^2 tau / 24 relative
    assert abs(total - exact) <= 2 * mask.h**2 * tau / 24 * abs(exact) + 1e-12


def test_cg_zero_rhs(small_mask):
    A = build_neumann_laplacian(small_mask)
    assert np.all(cg_solve(A, 1.0, np.zeros(A.dim)) == 0)


def test_cg_single_cell_identity():
    A = build_neumann_laplacian(CellMask(1, UNIT, np.zeros((1, 1), dtype=np.int8)))
    x = cg_solve(A, 1.0, np.array([3.5]))
    assert x[0] == pytest.approx(3.5, rel=1e-14)


def test_cg_random_spd_against_dense(rng):
    n = 50
    M = rng.standard_normal((n, n))
    S = sp.csr_matrix(M @ M.T / n)
    A = SparseOperator(S.indptr, S.indices, S.data)
    b = rng.standard_normal(n)
    x = cg_solve(A, 1.0, b, tol=1e-10, max_iter=1000)
    dense = np.linalg.solve(S.toarray() + np.eye(n), b)
    assert np.linalg.norm(S @ x + x - b) / np.linalg.norm(b) <= 1e-10
    assert np.allclose(x, dense, rtol=1e-8, atol=1e-9)


def test_cg_nonconvergence_carries_residual(small_mask, rng):
    A = build_neumann_laplacian(small_mask)
    with pytest.raises(ConvergenceError) as e:
        cg_solve(A, 1e-3, rng.standard_normal(A.dim), tol=1e-14, max_iter=3)
    assert e.value.residual > 1e-14


def test_cg_negative_shift_rejected(small_mask):
    A = build_neumann_laplacian(small_mask)
    with pytest.raises(GridError):
        cg_solve(A, -1.0, np.ones(A.dim))


def test_stencil_and_csr_paths_agree(small_mask, rng):
    A = build_neumann_laplacian(small_mask)
    x = rng.standard_normal(A.dim)
    st_ = A.stencil
    out = np.zeros_like(st_.diag)
    grid._backend.stencil_matvec(st_.ce, st_.cn, st_.inv_h2, st_.scatter(x), 2.5, out)
    assert np.allclose(st_.gather(out), A.matvec(x, 2.5), rtol=1e-13, atol=1e-9)


@pytest.mark.skipif(grid.BACKEND != "compiled", reason="compiled extension not built")
def test_compiled_and_python_backends_agree(small_mask, rng):
    from heat_enclosure import _kernels

    A = build_neumann_laplacian(small_mask)
    st_ = A.stencil
    b = st_.scatter(rng.standard_normal(A.dim))
    res = []
    for mod in (_kernels, _fallback):
        x = np.zeros_like(b)
        work = np.empty((5,) + b.shape)
        it, r = mod.pcg_stencil(st_.ce, st_.cn, st_.inv_h2, st_.diag, 50.0, b, x, 1e-12, 10_000, work)
        res.append((it, x))
    assert abs(res[0][0] - res[1][0]) <= 2
    assert np.allclose(res[0][1], res[1][1], rtol=1e-9, atol=1e-12)
    xs = []
    for mod in (_kernels, _fallback):
        x = np.zeros(A.dim)
        bb = st_.gather(b)
        mod.pcg(A.indptr, A.indices, A.data, A.diag, 50.0, bb, x, 1e-12, 10_000, np.empty((4, A.dim)))
        xs.append(x)
    assert np.allclose(xs[0], xs[1], rtol=1e-9, atol=1e-12)
