"""Probe solutions of ``(Laplace - tau) v = 0``, temporal profiles and probe fluxes.

Two realizations of each probe exist:

* the analytic one (``probe_value`` / ``probe_normal_derivative``), and
* a lattice one (:class:`LatticeProbe`) that solves the five-point equation
  ``Delta_h v = tau v`` exactly at every point of the cell-centre lattice with
  spacing ``h``.  It agrees with the analytic field to ``O(h^2 tau)`` and is
  what the simulator, the indicator and the elliptic oracle use, so that the
  cancellation inside the indicator is not swamped by discretization error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaln

from .geometry import _as_unit
from .special import k0, k1


class ProbeError(ValueError):
    pass


@dataclass(frozen=True)
class DirectionalProbe:
    omega: tuple[float, float]
    tau: float

    def __post_init__(self):
        w = _as_unit(self.omega)
        object.__setattr__(self, "omega", (float(w[0]), float(w[1])))
        if not self.tau > 0:
            raise ProbeError("tau must be positive")

    kind = "directional"

    def describe(self) -> dict:
        return {"kind": self.kind, "omega": list(self.omega), "tau": self.tau}


@dataclass(frozen=True)
class PointProbe:
    p: tuple[float, float]
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "p", (float(self.p[0]), float(self.p[1])))
        if not self.tau > 0:
            raise ProbeError("tau must be positive")

    kind = "point"

    def describe(self) -> dict:
        return {"kind": self.kind, "p": list(self.p), "tau": self.tau}


Probe = DirectionalProbe | PointProbe


def probe_from_dict(d: dict) -> Probe:
    if d["kind"] == "directional":
        return DirectionalProbe(tuple(d["omega"]), float(d["tau"]))
    if d["kind"] == "point":
        return PointProbe(tuple(d["p"]), float(d["tau"]))
    raise ProbeError(f"unknown probe kind {d['kind']!r}")


def _radial(probe: PointProbe, x: np.ndarray):
    d = x - np.asarray(probe.p)
    r = np.hypot(d[..., 0], d[..., 1])
    if np.any(r == 0.0):
        raise ProbeError("point probe evaluated at its singularity")
    return d, r


def probe_value(probe: Probe, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    st = math.sqrt(probe.tau)
    if isinstance(probe, DirectionalProbe):
        return np.exp(st * (x @ np.asarray(probe.omega)))
    _, r = _radial(probe, x)
    return k0(st * r)


def probe_normal_derivative(probe: Probe, x, nu) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    st = math.sqrt(probe.tau)
    if isinstance(probe, DirectionalProbe):
        w = np.asarray(probe.omega)
        return st * (nu @ w) * np.exp(st * (x @ w))
    d, r = _radial(probe, x)
    radial_dot_nu = np.sum(d * nu, axis=-1) / r
    return -st * k1(st * r) * radial_dot_nu


# ---------------------------------------------------------------------------
# lattice realizations


def _lattice_rate(omega, tau: float, h: float) -> float:
    """Solve ``sum_d 2 (cosh(s w_d h) - 1) = tau h^2`` for s > 0 by Newton."""
    w = np.abs(np.asarray(omega, dtype=float))
    target = tau * h * h
    s = math.sqrt(tau)
    for _ in range(60):
        f = np.sum(2.0 * (np.cosh(s * w * h) - 1.0)) - target
        df = np.sum(2.0 * w * h * np.sinh(s * w * h))
        step = f / df
        s -= step
        if abs(step) <= 1e-15 * s:
            break
    return float(s)


def _gauss_panels(a: float, b: float, panels: int, order: int = 16):
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xg).ravel()
    weights = (half[:, None] * wg).ravel()
    return nodes, weights


@dataclass
class LatticeProbe:
    """Exact discrete solution matching ``probe`` on the lattice of spacing ``h``.

    Directional probes become the lattice plane wave ``exp(s x.omega)`` with
    ``s`` on the discrete dispersion curve.  Point probes become the
    superposition of lattice plane waves decaying away from ``p`` along the
    axis separating ``p`` from the body (a discrete analogue of the Fourier
    representation of ``K0``).  ``rect`` fixes that axis.
    """

    probe: Probe
    h: float
    rect: tuple[float, float, float, float]
    panels: int = 320
    _rate: float = field(init=False, default=0.0)
    _axis: int = field(init=False, default=0)
    _sign: float = field(init=False, default=1.0)

    def __post_init__(self):
        if isinstance(self.probe, DirectionalProbe):
            self._rate = _lattice_rate(self.probe.omega, self.probe.tau, self.h)
            return
        p = self.probe.p
        x0, y0, x1, y1 = self.rect
        sep = [(max(x0 - p[0], p[0] - x1), 0), (max(y0 - p[1], p[1] - y1), 1)]
        gap, axis = max(sep)
        if gap < 4 * self.h:
            raise ProbeError(f"point probe p={p} must be at least 4 cells outside the body")
        lo_side = (x0, y0)[axis] - p[axis] > 0
        self._axis = axis
        self._sign = 1.0 if lo_side else -1.0
        th, wt = _gauss_panels(0.0, math.pi, self.panels)
        cb = 1.0 + 0.5 * self.probe.tau * self.h**2 + (1.0 - np.cos(th))
        self._beta = np.arccosh(cb)
        self._theta = th
        self._wt = wt / np.sinh(self._beta)

    def values(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if isinstance(self.probe, DirectionalProbe):
            return np.exp(self._rate * (x @ np.asarray(self.probe.omega)))
        d = x - np.asarray(self.probe.p)
        along = self._sign * d[..., self._axis] / self.h
        across = d[..., 1 - self._axis] / self.h
        if np.any(along <= 0):
            raise ProbeError("point probe lattice field evaluated on the wrong side of the source")
        flat_a = along.ravel()
        flat_c = across.ravel()
        out = np.empty(flat_a.size)
        chunk = 2048
        for s in range(0, flat_a.size, chunk):
            e = np.exp(-np.outer(flat_a[s:s + chunk], self._beta))
            c = np.cos(np.outer(flat_c[s:s + chunk], self._theta))
            out[s:s + chunk] = (e * c) @ self._wt
        return out.reshape(along.shape)

    def face_data(self, faces) -> tuple[np.ndarray, np.ndarray]:
        """Face value and outward normal derivative consistent with the FV scheme.

        ``v_face = (v_cell + v_ghost) / 2`` and ``dv = (v_ghost - v_cell) / h``.
        """
        vc = self.values(faces.cell_centers())
        vg = self.values(faces.ghost_centers())
        return 0.5 * (vc + vg), (vg - vc) / faces.length


def realize(probe: Probe, h: float, rect) -> LatticeProbe:
    return LatticeProbe(probe, float(h), tuple(float(v) for v in rect))


def face_data(probe: Probe, faces, rect=None, realization: str = "lattice"):
    """(v, dv/dnu) on each face, either lattice-consistent or analytic at face centres."""
    if realization == "lattice":
        if rect is None:
            rect = faces_rect(faces)
        return realize(probe, faces.h, rect).face_data(faces)
    if realization == "exact":
        return probe_value(probe, faces.center), probe_normal_derivative(probe, faces.center, faces.normal)
    raise ProbeError(f"unknown realization {realization!r}")


def faces_rect(faces) -> tuple[float, float, float, float]:
    c = faces.center
    return float(c[:, 0].min()), float(c[:, 1].min()), float(c[:, 0].max()), float(c[:, 1].max())


# ---------------------------------------------------------------------------
# temporal profiles


@dataclass(frozen=True)
class TemporalProfile:
    """``const_one``, ``monomial`` (t^k) or ``table`` (piecewise linear samples).

    ``mu`` is the certified exponent of the admissibility condition
    ``liminf tau^mu |int_0^T e^{-tau t} phi dt| > 0``.
    """

    kind: str = "const_one"
    k: int = 0
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("const_one", "monomial", "table"):
            raise ProbeError(f"unknown profile kind {self.kind!r}")
        if self.kind == "monomial" and self.k < 0:
            raise ProbeError("monomial degree must be >= 0")
        if self.kind == "table":
            t = np.asarray(self.times, float)
            if t.size < 2 or np.any(np.diff(t) <= 0) or len(self.values) != t.size:
                raise ProbeError("table profile needs increasing times and matching values")

    @property
    def mu(self) -> float | None:
        if self.kind == "const_one":
            return 1.0
        if self.kind == "monomial":
            return float(self.k + 1)
        return None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "const_one":
            return np.ones_like(t)
        if self.kind == "monomial":
            return t**self.k
        return np.interp(t, self.times, self.values)

    def describe(self) -> dict:
        if self.kind == "table":
            return {"kind": "table", "times": list(self.times), "values": list(self.values)}
        if self.kind == "monomial":
            return {"kind": "monomial", "k": self.k}
        return {"kind": "const_one"}


def profile_from_dict(d: dict) -> TemporalProfile:
    kind = d.get("kind", "const_one")
    if kind == "table":
        return TemporalProfile("table", times=tuple(d["times"]), values=tuple(d["values"]))
    return TemporalProfile(kind, k=int(d.get("k", 0)))


def laplace_of_profile(phi: TemporalProfile, tau: float, T: float) -> float:
    """``int_0^T exp(-tau t) phi(t) dt``."""
    if not (tau > 0 and T > 0):
        raise ProbeError("tau and T must be positive")
    if phi.kind == "const_one":
        return -math.expm1(-tau * T) / tau
    if phi.kind == "monomial":
        k = phi.k
        # k!/tau^(k+1) * P(k+1, tau T)
        return math.exp(gammaln(k + 1) - (k + 1) * math.log(tau)) * float(gammainc(k + 1, tau * T))
    # graded trapezoid: nodes cluster at t=0 where the weight lives
    m = 4000
    s = np.linspace(0.0, 1.0, m + 1)
    t = T * s**3
    t = np.union1d(t, np.asarray(phi.times)[(np.asarray(phi.times) > 0) & (np.asarray(phi.times) < T)])
    f = np.exp(-tau * t) * phi(t)
    return float(np.trapezoid(f, t))


def flux_on_faces(probe: Probe, faces, phi: TemporalProfile, t: float, rect=None, realization: str = "lattice"):
    """``f(x, t) = dv/dnu(x) phi(t)`` on every face."""
    _, dv = face_data(probe, faces, rect, realization)
    return dv * float(phi(t))
