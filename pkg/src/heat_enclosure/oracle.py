"""Stationary ``(A + tau) w = b`` solves, the Neumann-to-Dirichlet gap and cavity weights.

Everything here works on the same cell lattice as the time-domain solver but
never calls it, so agreement between the two is a genuine cross-check.

Sign convention.  ``gap_boundary`` is the literal pairing
``sum_faces h g (w_empty - w_cavity)``.  An insulating cavity makes the body
harder to heat, so ``w_cavity >= w_empty`` in the quadratic-form sense and the
pairing is *non-positive*; exactly

    gap_boundary = -(|grad R|^2 + tau |R|^2 + |grad v|^2_D + tau |v|^2_D)

with every term computed by the same lattice sums.  ``gap_energy`` is the
(non-negative) right-hand side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CAVITY, FLUID, CellMask, Disk, Rect, ShapeUnion, _as_unit
from .grid import (
    SparseOperator,
    boundary_faces,
    build_neumann_laplacian,
    cavity_faces,
    cavity_load,
    cg_solve,
    flux_load,
    interior_fluid_faces,
)
from .probes import DirectionalProbe, PointProbe, Probe, TemporalProfile, laplace_of_profile, realize


class OracleError(ValueError):
    pass


def empty_mask(mask: CellMask) -> CellMask:
    """The same lattice with every cell FLUID."""
    return CellMask(mask.n, tuple(mask.rect), np.full_like(mask.tags, FLUID))


@dataclass
class EllipticSolution:
    tau: float
    with_cavity: bool
    values: np.ndarray  # one per FLUID cell
    residual: float


def solve_stationary(mask: CellMask, tau: float, outer_flux=None, cavity_flux=None, *, tol: float = 1e-12,
                     operator: SparseOperator | None = None, max_iter: int = 50_000) -> EllipticSolution:
    """Solve ``(A + tau) w = load`` for outward flux data on the body boundary.

    ``cavity_flux`` is the derivative along the staircase normal pointing
    from the fluid into the cavity, which is the outward normal of the fluid
    region there.  ``None`` means zero data.
    """
    if not tau > 0:
        raise OracleError("tau must be positive")
    A = operator if operator is not None else build_neumann_laplacian(mask)
    b = np.zeros(mask.n_fluid)
    if outer_flux is not None:
        b += flux_load(mask, boundary_faces(mask), outer_flux)
    if cavity_flux is not None:
        b += cavity_load(mask, cavity_faces(mask), cavity_flux)
    w = cg_solve(A, float(tau), b, tol=tol, max_iter=max_iter)
    bn = np.linalg.norm(b)
    res = float(np.linalg.norm(A.matvec(w, tau) - b) / bn) if bn > 0 else 0.0
    return EllipticSolution(float(tau), mask.n_cavity > 0, w, res)


def _outer_data(probe: Probe, mask: CellMask):
    faces = boundary_faces(mask)
    lat = realize(probe, mask.h, mask.rect)
    v, g = lat.face_data(faces)
    return faces, lat, v, g


def _check_tau(probe: Probe, tau):
    if tau is not None and abs(float(tau) - probe.tau) > 1e-12 * probe.tau:
        raise OracleError(f"tau={tau} differs from the probe's tau={probe.tau}")


def ntd_gap_boundary(mask: CellMask, probe: Probe, tau: float | None = None, *, tol: float = 1e-12) -> float:
    """``sum_faces h g (w_empty - w_cavity)`` with ``g`` the lattice probe flux.

    Both traces use the flux-corrected face value ``w_cell + (h/2) g``; the
    correction cancels in the difference.  Non-positive (see module notes).
    """
    _check_tau(probe, tau)
    tau = probe.tau
    faces, _, _, g = _outer_data(probe, mask)
    w_d = solve_stationary(mask, tau, g, tol=tol).values
    if mask.n_cavity == 0:
        return 0.0
    em = empty_mask(mask)
    ef = boundary_faces(em)
    w_e = solve_stationary(em, tau, g, tol=tol).values
    diff = w_e[ef.cell] - w_d[faces.cell]
    return math.fsum(faces.length * g * diff)


@dataclass
class GapReport:
    tau: float
    probe: dict
    gap_boundary: float
    gap_energy: float
    part_gradR: float
    part_R: float
    part_gradv: float
    part_v: float
    cavity_weight: float = math.nan
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        parts = (self.part_gradR, self.part_R, self.part_gradv, self.part_v)
        if min(parts) < 0:
            raise OracleError("negative energy part")

    @property
    def parts(self) -> tuple[float, float, float, float]:
        return self.part_gradR, self.part_R, self.part_gradv, self.part_v

    @property
    def lower_bound(self) -> float:
        """Cavity-only energy of the probe, the part that does not need a solve."""
        return self.part_gradv + self.part_v

    @property
    def relative_disagreement(self) -> float:
        """``|gap_boundary + gap_energy| / gap_energy`` (the two paths, sign-corrected)."""
        if self.gap_energy == 0:
            return abs(self.gap_boundary)
        return abs(self.gap_boundary + self.gap_energy) / self.gap_energy

    def row(self) -> dict:
        return {
            "tau": self.tau,
            "gap_boundary": self.gap_boundary,
            "gap_energy": self.gap_energy,
            "part_gradR": self.part_gradR,
            "part_R": self.part_R,
            "part_gradv": self.part_gradv,
            "part_v": self.part_v,
            "cavity_weight": self.cavity_weight,
        }


def _cavity_energy(mask: CellMask, lat, tau: float) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Lattice energy of the probe on the cavity and the fluid->cavity normal derivatives.

    Returns ``(sum over faces touching a cavity cell of (dv)^2, tau h^2 sum_D v^2,
    dv_per_cavity_face, cavity_face_fluid_cells)``.
    """
    n, h = mask.n, mask.h
    xc, yc = mask.centers
    touch = mask.tags == CAVITY
    need = touch.copy()
    need[1:, :] |= touch[:-1, :]
    need[:-1, :] |= touch[1:, :]
    need[:, 1:] |= touch[:, :-1]
    need[:, :-1] |= touch[:, 1:]
    ii, jj = np.nonzero(need)
    vals = np.zeros((n, n))
    vals[ii, jj] = lat.values(np.c_[xc[ii], yc[jj]])
    # faces with at least one cavity cell
    sq = []
    ex = touch[:-1, :] | touch[1:, :]
    sq.append(((vals[1:, :] - vals[:-1, :])[ex]) ** 2)
    ny = touch[:, :-1] | touch[:, 1:]
    sq.append(((vals[:, 1:] - vals[:, :-1])[ny]) ** 2)
    grad = math.fsum(np.concatenate(sq))
    vol = tau * h * h * math.fsum(vals[touch] ** 2)
    cf = cavity_faces(mask)
    fi, fj = mask.fluid_cells()
    vf = vals[fi, fj][cf.fluid_cell]
    vcav = vals[cf.cavity_ij[:, 0], cf.cavity_ij[:, 1]]
    return grad, vol, (vcav - vf) / h, cf


def ntd_gap_energy(mask: CellMask, probe: Probe, tau: float | None = None, *, tol: float = 1e-12,
                   with_boundary: bool = True, shape=None) -> GapReport:
    """Energy form of the gap: solve the reflector problem and sum its parts.

    The reflector ``R`` solves ``(A + tau) R = 0`` in the fluid with zero
    outer flux and cavity-side data equal to the probe's lattice normal
    derivative.  ``shape`` (optional) adds the analytic cavity weight.
    """
    _check_tau(probe, tau)
    tau = probe.tau
    h = mask.h
    if mask.n_cavity == 0:
        gb = ntd_gap_boundary(mask, probe, tol=tol) if with_boundary else 0.0
        return GapReport(tau, probe.describe(), gb, 0.0, 0.0, 0.0, 0.0, 0.0, _weight_or_nan(shape, probe))
    lat = realize(probe, h, mask.rect)
    grad_v, vol_v, dv, cf = _cavity_energy(mask, lat, tau)
    R = solve_stationary(mask, tau, None, dv, tol=tol).values
    a, b = interior_fluid_faces(mask)
    grad_r = math.fsum((R[a] - R[b]) ** 2)
    vol_r = tau * h * h * math.fsum(R * R)
    energy = math.fsum((grad_r, vol_r, grad_v, vol_v))
    gb = ntd_gap_boundary(mask, probe, tol=tol) if with_boundary else math.nan
    return GapReport(tau, probe.describe(), gb, energy, grad_r, vol_r, grad_v, vol_v, _weight_or_nan(shape, probe))


def _weight_or_nan(shape, probe: Probe) -> float:
    if shape is None:
        return math.nan
    return cavity_weight_for(shape, probe)


def ntd_pairing(mask: CellMask, tau: float, g1, g2, *, tol: float = 1e-12) -> float:
    """``<g1, R_D(tau) g2>`` with the flux-corrected face trace of the ``g2`` solution."""
    faces = boundary_faces(mask)
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    w = solve_stationary(mask, tau, g2, tol=tol).values
    trace = w[faces.cell] + 0.5 * faces.length * g2
    return math.fsum(faces.length * g1 * trace)


# ---------------------------------------------------------------------------
# cavity weights  int_D e^{2 sqrt(tau) x.omega} dx  and  int_D e^{-2 sqrt(tau)|x-p|} dx


def _gauss(a: float, b: float, panels: int, order: int = 16):
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    return (mid[:, None] + half[:, None] * xg).ravel(), (half[:, None] * wg).ravel()


def _integrate(shape, f, panels: int) -> float:
    if isinstance(shape, ShapeUnion):
        return math.fsum(_integrate(m, f, panels) for m in shape.members)
    if isinstance(shape, Disk):
        r, wr = _gauss(0.0, shape.radius, panels)
        t, wt = _gauss(0.0, 2.0 * math.pi, 2 * panels)
        rr, tt = np.meshgrid(r, t, indexing="ij")
        x = shape.center[0] + rr * np.cos(tt)
        y = shape.center[1] + rr * np.sin(tt)
        return float(np.einsum("i,j,ij->", wr * r, wt, f(x, y)))
    if isinstance(shape, Rect):
        x, wx = _gauss(shape.lo[0], shape.hi[0], panels)
        y, wy = _gauss(shape.lo[1], shape.hi[1], panels)
        xx, yy = np.meshgrid(x, y, indexing="ij")
        return float(np.einsum("i,j,ij->", wx, wy, f(xx, yy)))
    raise OracleError(f"unsupported shape {shape!r}")


def _adaptive(shape, f, rtol: float = 1e-13, max_panels: int = 64) -> float:
    panels = 1
    prev = _integrate(shape, f, panels)
    while panels < max_panels:
        panels *= 2
        cur = _integrate(shape, f, panels)
        if abs(cur - prev) <= rtol * abs(cur):
            return cur
        prev = cur
    return prev


def cavity_weight(shape, tau: float, *, omega=None, p=None) -> float:
    """``int_D exp(2 sqrt(tau) x.omega) dx`` (``omega`` given) or ``int_D exp(-2 sqrt(tau)|x - p|) dx``."""
    if not tau > 0:
        raise OracleError("tau must be positive")
    if (omega is None) == (p is None):
        raise OracleError("give exactly one of omega or p")
    s = 2.0 * math.sqrt(tau)
    if omega is not None:
        w = _as_unit(omega)
        return _adaptive(shape, lambda x, y: np.exp(s * (w[0] * x + w[1] * y)))
    px, py = float(p[0]), float(p[1])
    return _adaptive(shape, lambda x, y: np.exp(-s * np.hypot(x - px, y - py)))


def cavity_weight_for(shape, probe: Probe) -> float:
    if isinstance(probe, DirectionalProbe):
        return cavity_weight(shape, probe.tau, omega=probe.omega)
    return cavity_weight(shape, probe.tau, p=probe.p)


# ---------------------------------------------------------------------------
# time-domain / stationary bridge


@dataclass
class IdentityReport:
    tau: float
    J: float
    laplace_phi: float
    gap: float
    residual: float

    @property
    def relative(self) -> float:
        return abs(self.residual) / abs(self.J) if self.J != 0 else math.inf

    def row(self) -> dict:
        return {"tau": self.tau, "J": self.J, "laplace_phi": self.laplace_phi, "gap_boundary": self.gap,
                "bridge_residual": self.residual, "bridge_relative": self.relative}


def verify_basic_identity(trace, probe: Probe, phi: TemporalProfile, mask: CellMask, *, gap: float | None = None,
                          tol: float = 1e-12) -> IdentityReport:
    """``r = J - Phi(tau) gap`` for a simulated trace (``Phi`` the truncated Laplace transform of ``phi``)."""
    from .indicator import compute_indicator

    _check_tau(probe, trace.tau)
    sample = compute_indicator(trace, probe)
    T = float(trace.times[-1])
    lap = laplace_of_profile(phi, probe.tau, T)
    if gap is None:
        gap = ntd_gap_boundary(mask, probe, tol=tol)
    J = sample.J
    return IdentityReport(probe.tau, J, lap, gap, J - lap * gap)


__all__ = [
    "EllipticSolution", "GapReport", "IdentityReport", "OracleError", "cavity_weight", "cavity_weight_for",
    "empty_mask", "ntd_gap_boundary", "ntd_gap_energy", "ntd_pairing", "solve_stationary",
    "verify_basic_identity",
]
