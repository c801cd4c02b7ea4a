import math

import numpy as np
import pytest

from heat_enclosure.forward import (
    BoundaryTrace, ForwardError, SolverOptions, TimeGrid, boundary_temperature, laplace_weights, read_trace_csv,
    simulate, simulate_state, write_trace_csv,
)
from heat_enclosure.geometry import CellMask, Disk, Scene, rasterize
from heat_enclosure.grid import boundary_faces, build_neumann_laplacian
from heat_enclosure.probes import DirectionalProbe, TemporalProfile

UNIT = (0.0, 0.0, 1.0, 1.0)
PR = DirectionalProbe((1.0, 0.0), 25.0)


def manufactured_error(n, n_steps, T, scheme):
    """L2 error at T of u* = cos(pi x) cos(pi y) exp(-2 pi^2 t) on the unit square."""
    mask = CellMask(n, UNIT, np.zeros((n, n), dtype=np.int8))
    xc, _ = mask.centers
    ii, jj = mask.fluid_cells()
    u0 = np.cos(np.pi * xc[ii]) * np.cos(np.pi * xc[jj])
    u = simulate_state(mask, TimeGrid.uniform(n_steps, T), u0, scheme=scheme, tol=1e-13)
    exact = u0 * math.exp(-2 * math.pi**2 * T)
    return math.sqrt(np.sum((u - exact) ** 2) * mask.h**2)


def test_time_grid():
    t = TimeGrid.graded(10, 2.0, 2.0).times
    assert t[0] == 0 and t[-1] == 2.0 and np.all(np.diff(t) > 0)
    assert t[5] == pytest.approx(2.0 * 0.25)
    assert np.allclose(np.diff(TimeGrid.uniform(4, 1.0).times), 0.25)
    with pytest.raises(ForwardError):
        TimeGrid(0, 1.0)
    with pytest.raises(ForwardError):
        TimeGrid(5, 1.0, 0.5)


def test_temporal_order_backward_euler():
    errs = [manufactured_error(128, N, 0.1, "backward_euler") for N in (4, 8, 16, 32)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 0.9), rates


def test_spatial_order():
    errs = [manufactured_error(n, 200, 0.1, "crank_nicolson") for n in (16, 32, 64)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 1.9), rates


def test_crank_nicolson_is_second_order_in_time():
    errs = [manufactured_error(128, N, 0.1, "crank_nicolson") for N in (8, 16, 32)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 1.8), rates


def test_zero_flux_gives_zero_trace(small_scene, small_mask):
    tg = TimeGrid.graded(20, 1.0)
    faces = boundary_faces(small_mask)
    tr = simulate(small_scene, small_mask, PR, TemporalProfile(), tg, face_flux=np.zeros(len(faces)))
    assert np.all(tr.u_values == 0) and np.all(tr.f_values == 0)


def test_constant_flux_total_heat_exact():
    n, T, c = 32, 0.7, 1.7
    scene = Scene(UNIT, (), T)
    mask = CellMask(n, UNIT, np.zeros((n, n), dtype=np.int8))
    faces = boundary_faces(mask)
    tg = TimeGrid.graded(25, T)
    tr = simulate(scene, mask, PR, TemporalProfile(), tg, SolverOptions(tol=1e-14, max_iter=100_000),
                  face_flux=np.full(len(faces), c))
    heat = tr.final_state.sum() * mask.h**2
    assert heat == pytest.approx(c * 4.0 * T, rel=1e-10)


def test_insulated_cavity_conserves_heat(small_scene, small_mask, rng):
    u0 = rng.random(small_mask.n_fluid)
    tg = TimeGrid.graded(30, 1.0)
    faces = boundary_faces(small_mask)
    tr = simulate(small_scene, small_mask, PR, TemporalProfile(), tg, SolverOptions(tol=1e-14, max_iter=100_000),
                  initial=u0, face_flux=np.zeros(len(faces)))
    assert tr.final_state.sum() == pytest.approx(u0.sum(), rel=1e-10)


def test_backward_euler_unconditionally_stable(small_scene, small_mask, rng):
    u0 = rng.standard_normal(small_mask.n_fluid)
    u = simulate_state(small_mask, TimeGrid.uniform(3, 1000.0), u0)
    assert np.linalg.norm(u) <= np.linalg.norm(u0)


def test_trace_shapes_and_initial_zero(small_scene, small_mask):
    tg = TimeGrid.graded(40, 1.0)
    tr = simulate(small_scene, small_mask, PR, TemporalProfile("monomial", k=1), tg)
    assert tr.u_values.shape == (4 * 64, 41)
    assert np.all(tr.u_values[:, 0] == 0)
    assert tr.tau == PR.tau


def test_flux_bound_is_grid_stable():
    # ||u(T)|| / ||f|| should settle under refinement (discrete a-priori bound)
    ratios = []
    for n in (32, 64):
        scene = Scene((-0.5, -0.5, 0.5, 0.5), (Disk((0.1, 0.05), 0.15),), 1.0)
        mask = rasterize(scene, n)
        tr = simulate(scene, mask, DirectionalProbe((1.0, 0.0), 9.0), TemporalProfile(), TimeGrid.graded(60, 1.0))
        unorm = math.sqrt(np.sum(tr.final_state**2) * mask.h**2)
        fnorm = math.sqrt(np.sum(tr.f_values[:, -1] ** 2 * mask.h))
        ratios.append(unorm / fnorm)
    assert ratios[1] == pytest.approx(ratios[0], rel=0.05)


def test_mask_scene_mismatch(small_scene, small_mask):
    with pytest.raises(ForwardError):
        simulate(small_scene, small_mask, PR, TemporalProfile(), TimeGrid.graded(5, 2.0))
    with pytest.raises(ForwardError):
        simulate(small_scene, small_mask, PR, TemporalProfile(), TimeGrid.graded(5, 1.0),
                 SolverOptions(scheme="leapfrog"))


def test_boundary_temperature_examples():
    n = 16
    mask = CellMask(n, UNIT, np.zeros((n, n), dtype=np.int8))
    f = boundary_faces(mask)
    const = np.full(mask.n_fluid, 2.5)
    assert np.all(boundary_temperature(const, f, np.zeros(len(f))) == 2.5)
    xc, _ = mask.centers
    ii, _ = mask.fluid_cells()
    lin = xc[ii]
    g = f.normal[:, 0]  # d(x)/dnu
    assert np.allclose(boundary_temperature(lin, f, g), f.center[:, 0], atol=1e-15)


def test_face_value_error_second_order():
    errs = []
    for n in (16, 32, 64):
        mask = CellMask(n, UNIT, np.zeros((n, n), dtype=np.int8))
        f = boundary_faces(mask)
        xc, _ = mask.centers
        ii, jj = mask.fluid_cells()
        u = np.cos(np.pi * xc[ii]) * np.cos(np.pi * xc[jj])
        uf = boundary_temperature(u, f, np.zeros(len(f)))
        exact = np.cos(np.pi * f.center[:, 0]) * np.cos(np.pi * f.center[:, 1])
        errs.append(np.max(np.abs(uf - exact)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_matched_weights_closed_forms():
    tau = 100.0
    t = TimeGrid.uniform(800, 1.0).times
    a = laplace_weights(t, tau)
    dt = 1 / 800
    gamma_end = (1 - tau * dt) ** 800
    assert a.sum() == pytest.approx((1 - gamma_end) / tau, rel=1e-13)
    # exact for F(t) = t in the infinite-horizon limit
    assert a @ t == pytest.approx(1 / tau**2, rel=1e-12)
    cn = laplace_weights(t, tau, "crank_nicolson")
    assert cn.sum() == pytest.approx(1 / tau, rel=1e-12)
    tr = laplace_weights(t, tau, rule="trapezoid")
    # trapezoid error is (tau dt)^2 / 12 relative
    assert tr.sum() == pytest.approx((1 - math.exp(-tau)) / tau, rel=(tau * dt) ** 2 / 12 * 1.1)


def test_matched_weights_warn_when_too_coarse():
    with pytest.warns(UserWarning):
        laplace_weights(TimeGrid.uniform(10, 1.0).times, 400.0)
    with pytest.raises(ForwardError):
        laplace_weights(np.array([0.0, 0.5, 0.5]), 1.0)
    with pytest.raises(ForwardError):
        laplace_weights(np.array([0.0, 1.0]), 1.0, rule="simpson")


def test_trace_csv_roundtrip(small_scene, small_mask, tmp_path):
    tr = simulate(small_scene, small_mask, PR, TemporalProfile(), TimeGrid.graded(12, 1.0))
    p = tmp_path / "t.csv"
    write_trace_csv(tr, p)
    back = read_trace_csv(p)
    assert np.array_equal(back.u_values, tr.u_values) and np.array_equal(back.f_values, tr.f_values)
    assert np.array_equal(back.times, tr.times) and back.tau == tr.tau and back.rect == tr.rect
    assert np.array_equal(back.faces.center, tr.faces.center)
    assert p.read_text().splitlines()[1] == "face_id,time_index,u,f"


def test_trace_csv_rejects_incomplete(tmp_path, small_scene, small_mask):
    tr = simulate(small_scene, small_mask, PR, TemporalProfile(), TimeGrid.graded(3, 1.0))
    p = tmp_path / "t.csv"
    write_trace_csv(tr, p)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ForwardError):
        read_trace_csv(p)
    p.write_text("face_id,time_index,u,f\n")
    with pytest.raises(ForwardError):
        read_trace_csv(p)


def test_trace_shape_validation(small_mask):
    f = boundary_faces(small_mask)
    with pytest.raises(ForwardError):
        BoundaryTrace(f, np.zeros(3), np.zeros((len(f), 2)), np.zeros((len(f), 3)), 1.0)
