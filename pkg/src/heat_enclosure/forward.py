"""Time stepping of the insulated-cavity heat problem and boundary traces.

The solver advances ``u' + A u = b(t)`` on FLUID cells, where ``A`` is the
Neumann Laplacian and ``b`` the load of the outer-face flux.  Backward Euler
is the default; Crank-Nicolson is available for convergence studies.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import CellMask, Scene
from .grid import BoundaryFaceSet, SparseOperator, boundary_faces, build_neumann_laplacian, cg_solve, flux_load
from .probes import Probe, TemporalProfile, probe_from_dict, realize

log = logging.getLogger(__name__)

SCHEMES = ("backward_euler", "crank_nicolson")


class ForwardError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Node times ``0 = t_0 < ... < t_N = T``; graded nodes are ``T (j/N)^q``."""

    n_steps: int
    final_time: float
    grading: float = 1.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ForwardError("need at least one time step")
        if not self.final_time > 0:
            raise ForwardError("final time must be positive")
        if not self.grading >= 1.0:
            raise ForwardError("grading exponent must be >= 1")

    @classmethod
    def uniform(cls, n_steps: int, final_time: float) -> "TimeGrid":
        return cls(n_steps, final_time, 1.0)

    @classmethod
    def graded(cls, n_steps: int, final_time: float, q: float = 2.0) -> "TimeGrid":
        return cls(n_steps, final_time, q)

    @property
    def times(self) -> np.ndarray:
        t = self.final_time * (np.arange(self.n_steps + 1) / self.n_steps) ** self.grading
        t[-1] = self.final_time
        return t

    def describe(self) -> dict:
        return {"n_steps": self.n_steps, "final_time": self.final_time, "grading": self.grading}


def laplace_weights(times: np.ndarray, tau: float, scheme: str = "backward_euler", rule: str = "matched") -> np.ndarray:
    """Weights ``a_n`` so that ``sum_n a_n F(t_n)`` approximates ``int_0^T e^{-tau t} F dt``.

    ``rule="matched"`` gives the discrete exponential that is the exact
    adjoint of the time stepper: applied to a simulated trajectory, the
    weighted sum then satisfies the stationary problem ``(A + tau) W = ...``
    to round-off, which the indicator relies on.  ``rule="trapezoid"`` is the
    plain trapezoid rule on ``e^{-tau t} F(t)``.
    """
    times = np.asarray(times, dtype=float)
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise ForwardError("time nodes must be strictly increasing")
    n = dt.size
    a = np.zeros(n + 1)
    if rule == "trapezoid":
        e = np.exp(-tau * times)
        a[:-1] += 0.5 * dt * e[:-1]
        a[1:] += 0.5 * dt * e[1:]
        return a
    if rule != "matched":
        raise ForwardError(f"unknown quadrature rule {rule!r}")
    if scheme == "backward_euler":
        # gamma_1 = 1, gamma_{n+1} = gamma_n (1 - tau dt_n);  a_n = dt_n gamma_n
        factors = 1.0 - tau * dt
        gamma = np.concatenate(([1.0], np.cumprod(factors[:-1])))
        a[1:] = dt * gamma
        bad = np.abs(factors) > 1.0
    elif scheme == "crank_nicolson":
        # psi_1 (1 + tau dt_1 / 2) = 1, psi_{n+1} (1 + tau dt_{n+1}/2) = psi_n (1 - tau dt_n / 2)
        num = 1.0 - 0.5 * tau * dt
        den = 1.0 + 0.5 * tau * dt
        psi = np.empty(n)
        psi[0] = 1.0 / den[0]
        for k in range(1, n):
            psi[k] = psi[k - 1] * num[k - 1] / den[k]
        pd = psi * dt
        a[:-1] += 0.5 * pd
        a[1:] += 0.5 * pd
        gamma = psi
        bad = np.abs(num / den) > 1.0
    else:
        raise ForwardError(f"unknown scheme {scheme!r}")
    if np.any(bad & (np.abs(gamma) > 1e-16)):
        warnings.warn(
            f"time steps too coarse for tau={tau}: the matched weights are not decaying; refine the time grid",
            stacklevel=2,
        )
    return a


@dataclass
class BoundaryTrace:
    """Temperature ``u`` and applied flux ``f`` on each outer face at each node time."""

    faces: BoundaryFaceSet
    times: np.ndarray
    u_values: np.ndarray  # (faces, times)
    f_values: np.ndarray
    tau: float
    scheme: str = "backward_euler"
    probe: dict = field(default_factory=dict)
    rect: tuple | None = None

    def __post_init__(self):
        shape = (len(self.faces), self.times.size)
        if self.u_values.shape != shape or self.f_values.shape != shape:
            raise ForwardError(f"trace arrays must have shape {shape}")


@dataclass
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 20_000
    scheme: str = "backward_euler"
    flux_correction: bool = True
    realization: str = "lattice"


def boundary_temperature(state: np.ndarray, faces: BoundaryFaceSet, flux, correct: bool = True) -> np.ndarray:
    """Face temperatures ``u_cell + (h/2) g`` (or the bare cell value)."""
    u = np.asarray(state)[faces.cell]
    if correct:
        u = u + 0.5 * faces.length * np.asarray(flux)
    return u


def simulate(
    scene: Scene,
    mask: CellMask,
    probe: Probe,
    phi: TemporalProfile,
    tg: TimeGrid,
    options: SolverOptions | None = None,
    *,
    operator: SparseOperator | None = None,
    initial=None,
    face_flux=None,
) -> BoundaryTrace:
    """Run the heat problem for the flux ``dv/dnu * phi(t)`` of ``probe``.

    ``initial`` overrides the zero initial state and ``face_flux`` replaces
    the probe flux by fixed face data ``g`` (times ``phi``); both serve
    verification runs.
    """
    opts = options or SolverOptions()
    if opts.scheme not in SCHEMES:
        raise ForwardError(f"unknown scheme {opts.scheme!r}")
    if abs(tg.final_time - scene.final_time) > 1e-12 * scene.final_time:
        raise ForwardError("time grid does not end at the scene's final time")
    if tuple(mask.rect) != tuple(scene.omega_rect):
        raise ForwardError("mask does not match the scene")
    faces = boundary_faces(mask)
    A = operator if operator is not None else build_neumann_laplacian(mask)
    if face_flux is None:
        if opts.realization == "lattice":
            _, g = realize(probe, mask.h, mask.rect).face_data(faces)
        else:
            from .probes import face_data

            _, g = face_data(probe, faces, realization=opts.realization)
    else:
        g = np.asarray(face_flux, dtype=float)
    load = flux_load(mask, faces, g)

    t = tg.times
    phit = np.asarray(phi(t), dtype=float)
    u = np.zeros(mask.n_fluid) if initial is None else np.array(initial, dtype=float)
    U = np.empty((len(faces), t.size))
    F = np.outer(g, phit)
    U[:, 0] = boundary_temperature(u, faces, F[:, 0], opts.flux_correction)
    u_prev = u.copy()
    for n in range(1, t.size):
        dt = t[n] - t[n - 1]
        if dt <= 0:
            raise ForwardError("non-positive time step")
        s = 1.0 / dt
        if opts.scheme == "backward_euler":
            rhs = s * u + phit[n] * load
            shift = s
        else:
            rhs = 2.0 * s * u - A.matvec(u) + (phit[n] + phit[n - 1]) * load
            shift = 2.0 * s
        # linear extrapolation as the CG starting guess
        guess = u + (u - u_prev) * (dt / (t[n - 1] - t[n - 2])) if n > 1 else u
        u_prev = u
        u = cg_solve(A, shift, rhs, tol=opts.tol, max_iter=opts.max_iter, x0=guess)
        U[:, n] = boundary_temperature(u, faces, F[:, n], opts.flux_correction)
    trace = BoundaryTrace(faces, t, U, F, float(probe.tau), opts.scheme, probe.describe(), tuple(mask.rect))
    trace.final_state = u
    return trace


def simulate_state(mask: CellMask, tg: TimeGrid, initial, scheme: str = "backward_euler", tol: float = 1e-12,
                   operator: SparseOperator | None = None) -> np.ndarray:
    """Zero-flux evolution of ``initial`` to the final time; returns the cell state."""
    A = operator if operator is not None else build_neumann_laplacian(mask)
    u = np.array(initial, dtype=float)
    t = tg.times
    for n in range(1, t.size):
        s = 1.0 / (t[n] - t[n - 1])
        if scheme == "backward_euler":
            u = cg_solve(A, s, s * u, tol=tol, x0=u)
        else:
            u = cg_solve(A, 2 * s, 2 * s * u - A.matvec(u), tol=tol, x0=u)
    return u


# ---------------------------------------------------------------------------
# CSV persistence
#
# One comment line holding JSON metadata (tau, scheme, probe, node times and
# the face geometry), then rows ``face_id,time_index,u,f``.


def write_trace_csv(trace: BoundaryTrace, path) -> None:
    fc = trace.faces
    meta = {
        "tau": trace.tau,
        "scheme": trace.scheme,
        "probe": trace.probe,
        "rect": list(trace.rect) if trace.rect else None,
        "times": [float(t) for t in trace.times],
        "face_center": fc.center.tolist(),
        "face_normal": fc.normal.tolist(),
        "face_length": fc.length.tolist(),
    }
    nf, nt = trace.u_values.shape
    fid, tid = np.meshgrid(np.arange(nf), np.arange(nt), indexing="ij")
    rows = np.c_[fid.ravel(), tid.ravel(), trace.u_values.ravel(), trace.f_values.ravel()]
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        fh.write("face_id,time_index,u,f\n")
        np.savetxt(fh, rows, fmt=["%d", "%d", "%.17g", "%.17g"], delimiter=",")


def read_trace_csv(path) -> BoundaryTrace:
    """Load a trace written by :func:`write_trace_csv` (or any file with that schema)."""
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ForwardError(f"{path}: missing metadata header")
        meta = json.loads(first[1:])
        header = fh.readline().strip().split(",")
        if header != ["face_id", "time_index", "u", "f"]:
            raise ForwardError(f"{path}: unexpected columns {header}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    for key in ("tau", "probe", "times", "face_center", "face_normal", "face_length"):
        if key not in meta:
            raise ForwardError(f"{path}: metadata lacks {key!r}")
    times = np.asarray(meta["times"], dtype=float)
    nf = len(meta["face_length"])
    U = np.full((nf, times.size), np.nan)
    F = np.full((nf, times.size), np.nan)
    fid = data[:, 0].astype(int)
    tid = data[:, 1].astype(int)
    U[fid, tid] = data[:, 2]
    F[fid, tid] = data[:, 3]
    if np.isnan(U).any() or np.isnan(F).any():
        raise ForwardError(f"{path}: incomplete trace table")
    faces = BoundaryFaceSet(
        cell=np.full(nf, -1),
        side=np.full(nf, -1),
        center=np.asarray(meta["face_center"], dtype=float),
        normal=np.asarray(meta["face_normal"], dtype=float),
        length=np.asarray(meta["face_length"], dtype=float),
    )
    rect = tuple(meta["rect"]) if meta.get("rect") else None
    return BoundaryTrace(faces, times, U, F, float(meta["tau"]), meta.get("scheme", "backward_euler"), meta["probe"], rect)


def trace_probe(trace: BoundaryTrace) -> Probe:
    return probe_from_dict(trace.probe)


__all__ = [
    "BoundaryTrace", "ForwardError", "SCHEMES", "SolverOptions", "TimeGrid", "boundary_temperature",
    "laplace_weights", "read_trace_csv", "simulate", "simulate_state", "trace_probe", "write_trace_csv",
]

