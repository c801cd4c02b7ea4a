"""The indicator ``J(tau)`` from boundary data, and support/distance estimates from tau-sweeps.

``J = int_dOmega int_0^T e^{-tau t} (v f - u dv/dnu) dt dS`` is evaluated with
the face-midpoint rule in space and, by default, the Laplace weights matched
to the time stepper (see :func:`heat_enclosure.forward.laplace_weights`).
``J`` is a small difference of large terms, so the summation is compensated
and the result is kept as ``(sign, log|J|)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .forward import BoundaryTrace, laplace_weights
from .probes import Probe, faces_rect, realize

# |J| below this fraction of the summed magnitudes is indistinguishable from solver noise
DETECTION_RATIO = 1e-8


class IndicatorError(ValueError):
    pass


@dataclass(frozen=True)
class IndicatorSample:
    """One ``J(tau)`` value; ``log_scale`` is ``log sum |terms|`` (the size of the cancellation)."""

    tau: float
    sign: int
    log_abs_J: float
    log_scale: float = math.nan

    @classmethod
    def from_value(cls, tau: float, J: float, scale: float = math.nan) -> "IndicatorSample":
        sign = int(np.sign(J))
        log_abs = math.log(abs(J)) if J != 0 else -math.inf
        log_scale = math.log(scale) if scale > 0 else math.nan
        return cls(float(tau), sign, log_abs, log_scale)

    @property
    def J(self) -> float:
        if not self.sign:
            return 0.0
        if self.log_abs_J > 709.0:  # beyond double range; log_abs_J stays exact
            return self.sign * math.inf
        return self.sign * math.exp(self.log_abs_J)

    @property
    def h_est(self) -> float | None:
        return support_estimate_pointwise(self)

    @property
    def detected(self) -> bool:
        if self.sign == 0:
            return False
        if math.isnan(self.log_scale):
            return True
        return self.log_abs_J - self.log_scale > math.log(DETECTION_RATIO)


def compute_indicator(trace: BoundaryTrace, probe: Probe, rule: str = "matched",
                      realization: str = "lattice") -> IndicatorSample:
    """Evaluate ``J(tau)`` from a boundary trace and the probe that generated its flux.

    Only the trace (times, faces, u, f) and the probe enter; the cavity is
    never consulted.
    """
    if abs(trace.tau - probe.tau) > 1e-12 * probe.tau:
        raise IndicatorError(f"trace was generated for tau={trace.tau}, probe has tau={probe.tau}")
    faces = trace.faces
    if realization == "lattice":
        rect = trace.rect if trace.rect is not None else faces_rect(faces)
        v, dv = realize(probe, faces.h, rect).face_data(faces)
    elif realization == "exact":
        from .probes import face_data

        v, dv = face_data(probe, faces, realization="exact")
    else:
        raise IndicatorError(f"unknown realization {realization!r}")
    a = laplace_weights(trace.times, probe.tau, trace.scheme, rule)
    terms = np.concatenate([
        ((faces.length * v)[:, None] * trace.f_values * a).ravel(),
        (-(faces.length * dv)[:, None] * trace.u_values * a).ravel(),
    ])
    scale = float(np.max(np.abs(terms))) if terms.size else 0.0
    if scale == 0.0:
        return IndicatorSample(probe.tau, 0, -math.inf, -math.inf)
    # factor out the largest magnitude so neither the sum nor its log overflows
    s = math.fsum(terms / scale)
    total = math.fsum(np.abs(terms) / scale)
    if s == 0.0:
        return IndicatorSample(probe.tau, 0, -math.inf, math.log(total) + math.log(scale))
    return IndicatorSample(probe.tau, 1 if s > 0 else -1, math.log(abs(s)) + math.log(scale),
                           math.log(total) + math.log(scale))


def support_estimate_pointwise(sample: IndicatorSample) -> float | None:
    """``log|J| / (2 sqrt(tau))``; ``None`` marks a missing sample (``J = 0``)."""
    if sample.sign == 0:
        return None
    return sample.log_abs_J / (2.0 * math.sqrt(sample.tau))


@dataclass(frozen=True)
class SupportFit:
    """Least-squares fit ``log|J| = 2 h sqrt(tau) + mu log(tau) + c``."""

    h: float
    mu: float
    c: float
    residual_norm: float
    n_samples: int

    def to_dict(self) -> dict:
        return {"h": self.h, "mu": self.mu, "c": self.c, "residual_norm": self.residual_norm,
                "n_samples": self.n_samples}


@dataclass
class SweepResult:
    probe: dict
    samples: list[IndicatorSample]
    fit: SupportFit | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        taus = [s.tau for s in self.samples]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise IndicatorError("sweep samples must have strictly increasing tau")

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.samples])

    @property
    def detected(self) -> bool:
        return sum(s.detected for s in self.samples) >= 3

    @property
    def estimate(self) -> float | None:
        return None if self.fit is None else self.fit.h


def fit_support(samples: list[IndicatorSample]) -> SupportFit:
    if len(samples) < 3:
        raise IndicatorError("regression needs at least 3 samples")
    if any(s.sign == 0 for s in samples):
        raise IndicatorError("regression needs J != 0 in every sample")
    tau = np.array([s.tau for s in samples], dtype=float)
    y = np.array([s.log_abs_J for s in samples])
    X = np.c_[2.0 * np.sqrt(tau), np.log(tau), np.ones_like(tau)]
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < 3:
        raise IndicatorError("rank-deficient regression design (need at least 3 distinct tau values)")
    res = float(np.linalg.norm(X @ coef - y))
    return SupportFit(float(coef[0]), float(coef[1]), float(coef[2]), res, len(samples))


def regress_support(sweep: SweepResult | list[IndicatorSample]) -> float:
    """Slope estimate ``h`` of the sweep fit (the support value for directional probes).

    For a :class:`SweepResult` only detected samples enter the fit, as in :func:`build_sweep`;
    a plain list is fitted as given.
    """
    samples = [s for s in sweep.samples if s.detected] if isinstance(sweep, SweepResult) else sweep
    fit = fit_support(samples)
    if isinstance(sweep, SweepResult):
        sweep.fit = fit
        sweep.diagnostics.update(fit.to_dict())
    return fit.h


def distance_estimate(sweep: SweepResult | list[IndicatorSample]) -> float:
    """Estimate of the distance from the source point to the cavity: ``-h`` of the sweep fit."""
    if isinstance(sweep, SweepResult) and sweep.probe.get("kind") not in (None, "point"):
        raise IndicatorError("distance_estimate needs a point-probe sweep")
    return -regress_support(sweep)


def build_sweep(probe_desc: dict, samples: list[IndicatorSample]) -> SweepResult:
    """Order samples by tau, decide detection and fit the detected ones.

    With fewer than three detected samples the sweep reports no detection
    and carries no estimate.
    """
    samples = sorted(samples, key=lambda s: s.tau)
    sweep = SweepResult(dict(probe_desc), samples)
    used = [s for s in samples if s.detected]
    sweep.diagnostics["n_detected"] = len(used)
    if len(used) < 3:
        sweep.diagnostics["status"] = "no detection"
        return sweep
    fit = fit_support(used)
    sweep.fit = fit
    sweep.diagnostics.update(fit.to_dict())
    sweep.diagnostics["status"] = "detected"
    if probe_desc.get("kind") == "point":
        sweep.diagnostics["distance"] = -fit.h
    return sweep


def sweep_rows(sweep: SweepResult) -> list[dict]:
    rows = []
    for s in sweep.samples:
        h = support_estimate_pointwise(s)
        rows.append({
            "tau": s.tau,
            "sqrt_tau": math.sqrt(s.tau),
            "sign_J": s.sign,
            "log_abs_J": s.log_abs_J,
            "h_est_pointwise": math.nan if h is None else h,
        })
    return rows


__all__ = [
    "DETECTION_RATIO", "IndicatorError", "IndicatorSample", "SupportFit", "SweepResult", "build_sweep",
    "compute_indicator", "distance_estimate", "fit_support", "regress_support", "support_estimate_pointwise",
    "sweep_rows",
]
