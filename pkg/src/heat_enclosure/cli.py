"""Config-driven pipeline: forward traces, indicator sweeps, oracle cross-check, reconstruction.

    heat-enclosure all --config run.json --out runs/ref

Stages communicate only through files under the output directory.  The
indicator stage reads traces and probe descriptors, never the cavity, so the
reconstruction uses boundary data alone.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 empty reconstruction.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .forward import SolverOptions, TimeGrid, read_trace_csv, simulate, write_trace_csv
from .geometry import GeometryError, distance_to_point, rasterize, scene_from_dict, support_function, unit
from .grid import ConvergenceError, GridError
from .indicator import build_sweep, compute_indicator, sweep_rows
from .probes import PointProbe, ProbeError, probe_from_dict, profile_from_dict, realize
from .reconstruct import (
    ReconstructionError,
    SupportEntry,
    SupportTable,
    ball_complement_enclosure,
    halfplane_intersection,
    hausdorff_convex,
    overlay_svg,
    sweep_svg,
)

log = logging.getLogger("heat_enclosure")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_EMPTY = 0, 2, 3, 4
DEFAULT_SQRT_TAUS = [5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0]

_POINT = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_SHAPE = {
    "type": "object",
    "required": ["type"],
    "properties": {"type": {"enum": ["disk", "rect", "union"]}},
}
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["scene"],
    "additionalProperties": False,
    "properties": {
        "scene": {
            "type": "object",
            "required": ["omega_rect"],
            "additionalProperties": False,
            "properties": {
                "omega_rect": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                "cavities": {"type": "array", "items": _SHAPE},
                "final_time": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "grid": {"type": "object", "properties": {"n": {"type": "integer", "minimum": 8}},
                 "additionalProperties": False},
        "time": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_steps": {"type": "integer", "minimum": 1}, "grading": {"type": "number", "minimum": 1}},
        },
        "probes": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directions": {"type": "array", "items": _POINT},
                "n_directions": {"type": "integer", "minimum": 1},
                "points": {"type": "array", "items": _POINT},
            },
        },
        "taus": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "sqrt_taus": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "profile": {"type": "object", "properties": {"kind": {"enum": ["const_one", "monomial", "table"]}}},
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "scheme": {"enum": ["backward_euler", "crank_nicolson"]},
            },
        },
        "output": {"type": "string"},
        "oracle": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scene: dict
    n: int = 128
    n_steps: int = 800
    grading: float = 2.0
    directions: list = field(default_factory=list)
    points: list = field(default_factory=list)
    taus: list = field(default_factory=lambda: [s * s for s in DEFAULT_SQRT_TAUS])
    profile: dict = field(default_factory=lambda: {"kind": "const_one"})
    solver: dict = field(default_factory=dict)
    output: str | None = None
    oracle: bool = False

    def normalized(self) -> dict:
        return {
            "scene": self.scene, "grid": {"n": self.n}, "time": {"n_steps": self.n_steps, "grading": self.grading},
            "probes": {"directions": self.directions, "points": self.points}, "taus": self.taus,
            "profile": self.profile, "solver": self.solver, "oracle": self.oracle,
        }

    @property
    def hash(self) -> str:
        blob = json.dumps(self.normalized(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def probe_ids(self) -> list[tuple[str, dict]]:
        """``(id, descriptor without tau)`` for every probe, in config order."""
        out = [(f"dir{k:02d}", {"kind": "directional", "omega": list(w)}) for k, w in enumerate(self.directions)]
        out += [(f"pt{k:02d}", {"kind": "point", "p": list(p)}) for k, p in enumerate(self.points)]
        return out

    def jobs(self) -> list[tuple[str, dict, float]]:
        return [(pid, desc, tau) for pid, desc in self.probe_ids() for tau in self.taus]

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=float(self.solver.get("tol", 1e-10)), max_iter=int(self.solver.get("max_iter", 20_000)),
                             scheme=self.solver.get("scheme", "backward_euler"))

    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.n_steps, float(self.scene.get("final_time", 1.0)), self.grading)


def load_config(source) -> RunConfig:
    """Validate a JSON config (path or dict) and fill defaults."""
    if isinstance(source, (str, Path)):
        try:
            raw = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    else:
        raw = dict(source)
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config: {exc.message} at {list(exc.absolute_path)}") from exc
    if "taus" in raw and "sqrt_taus" in raw:
        raise ConfigError("give either taus or sqrt_taus, not both")
    taus = raw.get("taus") or [s * s for s in raw.get("sqrt_taus", DEFAULT_SQRT_TAUS)]
    taus = [float(t) for t in taus]
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ConfigError("tau list must be strictly ascending")
    pr = raw.get("probes", {})
    if "directions" in pr and "n_directions" in pr:
        raise ConfigError("give either directions or n_directions, not both")
    if "n_directions" in pr:
        dirs = [[float(c) for c in unit(2 * math.pi * k / pr["n_directions"])] for k in range(pr["n_directions"])]
    else:
        dirs = [[float(c) for c in w] for w in pr.get("directions", [[1.0, 0.0]] if "points" not in pr else [])]
    cfg = RunConfig(
        scene=raw["scene"],
        n=int(raw.get("grid", {}).get("n", 128)),
        n_steps=int(raw.get("time", {}).get("n_steps", 800)),
        grading=float(raw.get("time", {}).get("grading", 2.0)),
        directions=dirs,
        points=[[float(c) for c in p] for p in pr.get("points", [])],
        taus=taus,
        profile=raw.get("profile", {"kind": "const_one"}),
        solver=raw.get("solver", {}),
        output=raw.get("output"),
        oracle=bool(raw.get("oracle", False)),
    )
    try:
        scene = scene_from_dict(cfg.scene)
        mask = rasterize(scene, cfg.n)
        profile_from_dict(cfg.profile)
        for _, desc, tau in cfg.jobs():
            probe = probe_from_dict({**desc, "tau": tau})
            if isinstance(probe, PointProbe):
                realize(probe, mask.h, mask.rect)
    except (GeometryError, ProbeError, KeyError, TypeError) as exc:
        raise ConfigError(f"config: {exc}") from exc
    if not cfg.directions and not cfg.points:
        raise ConfigError("no probes configured")
    h = mask.h
    if math.sqrt(max(taus)) * h > 0.2:
        log.warning("grid too coarse for tau=%g: h*sqrt(tau)=%.3f > 0.2", max(taus), math.sqrt(max(taus)) * h)
    return cfg


# ---------------------------------------------------------------------------
# manifest


class Manifest:
    """``manifest.json``: config hash, artifact list, stage timings, version, completed traces."""

    def __init__(self, out: Path, config_hash: str):
        self.out = out
        self.path = out / "manifest.json"
        self.data = {"version": __version__, "config_hash": config_hash, "artifacts": [], "timings": {},
                     "traces": {}, "failures": []}

    @classmethod
    def open(cls, out: Path, config_hash: str, resume: bool) -> "Manifest":
        m = cls(out, config_hash)
        if resume and m.path.exists():
            try:
                old = json.loads(m.path.read_text())
            except json.JSONDecodeError:
                old = {}
            if old.get("config_hash") == config_hash:
                m.data.update({k: old.get(k, v) for k, v in m.data.items() if k != "version"})
                m.data["failures"] = []
        return m

    def add(self, rel: str):
        if rel not in self.data["artifacts"]:
            self.data["artifacts"].append(rel)
            self.data["artifacts"].sort()

    def save(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, rows: list[dict], columns: list[str]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def trace_name(pid: str, tau: float) -> str:
    return f"traces/{pid}_tau{tau:.6g}.csv"


# ---------------------------------------------------------------------------
# stages

_WORKER: dict = {}


def _worker_setup(cfg_dict: dict):
    cfg = load_config(cfg_dict)
    scene = scene_from_dict(cfg.scene)
    mask = rasterize(scene, cfg.n)
    from .grid import build_neumann_laplacian

    _WORKER.update(cfg=cfg, scene=scene, mask=mask, A=build_neumann_laplacian(mask))


def _run_trace(job) -> tuple[str, float, str | None, float]:
    pid, desc, tau, path = job
    w = _WORKER
    cfg = w["cfg"]
    t0 = time.perf_counter()
    probe = probe_from_dict({**desc, "tau": tau})
    try:
        tr = simulate(w["scene"], w["mask"], probe, profile_from_dict(cfg.profile), cfg.time_grid(),
                      cfg.solver_options(), operator=w["A"])
    except (ConvergenceError, GridError, ValueError) as exc:
        return pid, tau, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0
    tmp = Path(str(path) + ".tmp")
    write_trace_csv(tr, tmp)
    os.replace(tmp, path)
    return pid, tau, None, time.perf_counter() - t0


def _map(fn, jobs, cfg: RunConfig, n_workers: int):
    raw = {**cfg.normalized(), "probes": {"directions": cfg.directions, "points": cfg.points}}
    if n_workers <= 1 or len(jobs) <= 1:
        _worker_setup(raw)
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers, initializer=_worker_setup, initargs=(raw,)) as ex:
        return list(ex.map(fn, jobs))


def cmd_forward(cfg: RunConfig, out: Path, jobs: int = 1, resume: bool = False) -> int:
    out.mkdir(parents=True, exist_ok=True)
    (out / "traces").mkdir(exist_ok=True)
    man = Manifest.open(out, cfg.hash, resume)
    todo = []
    for pid, desc, tau in cfg.jobs():
        rel = trace_name(pid, tau)
        if resume and man.data["traces"].get(rel) == "done" and (out / rel).exists():
            log.info("skip %s (already complete)", rel)
            continue
        todo.append((pid, desc, tau, out / rel))
    t0 = time.perf_counter()
    status = EXIT_OK
    for pid, tau, err, dt in _map(_run_trace, todo, cfg, jobs):
        rel = trace_name(pid, tau)
        if err is None:
            man.data["traces"][rel] = "done"
            man.add(rel)
            log.info("%s done in %.1f s", rel, dt)
        else:
            man.data["failures"].append({"trace": rel, "error": err})
            log.error("%s failed: %s", rel, err)
            status = EXIT_SOLVER
    man.data["timings"]["forward"] = time.perf_counter() - t0
    man.save()
    return status


def measurement_view(cfg: RunConfig) -> dict:
    """What the indicator stage may know: probes, taus and profile; no cavity."""
    return {"probes": cfg.probe_ids(), "taus": list(cfg.taus)}


def cmd_indicator(cfg: RunConfig, out: Path) -> int:
    view = measurement_view(cfg)
    (out / "sweeps").mkdir(parents=True, exist_ok=True)
    man = Manifest.open(out, cfg.hash, True)
    t0 = time.perf_counter()
    missing = []
    for pid, desc in view["probes"]:
        samples = []
        for tau in view["taus"]:
            path = out / trace_name(pid, tau)
            if not path.exists():
                missing.append(str(path.relative_to(out)))
                continue
            tr = read_trace_csv(path)
            probe = probe_from_dict(tr.probe)
            samples.append(compute_indicator(tr, probe))
        sweep = build_sweep(desc, samples)
        cols = ["tau", "sqrt_tau", "sign_J", "log_abs_J", "h_est_pointwise"]
        _write_csv(out / f"sweeps/{pid}.csv", sweep_rows(sweep), cols)
        side = {"probe_id": pid, "probe": desc, "taus": [s.tau for s in sweep.samples],
                "regression": sweep.fit.to_dict() if sweep.fit else None, "diagnostics": sweep.diagnostics}
        (out / f"sweeps/{pid}.json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
        man.add(f"sweeps/{pid}.csv")
        man.add(f"sweeps/{pid}.json")
        log.info("%s: %s", pid, sweep.diagnostics.get("status"))
    if missing:
        log.warning("missing traces (skipped): %s", ", ".join(missing))
    man.data["missing_traces"] = missing
    man.data["timings"]["indicator"] = time.perf_counter() - t0
    man.save()
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, out: Path) -> int:
    from .oracle import ntd_gap_energy, verify_basic_identity

    scene = scene_from_dict(cfg.scene)
    mask = rasterize(scene, cfg.n)
    phi = profile_from_dict(cfg.profile)
    (out / "oracle").mkdir(parents=True, exist_ok=True)
    man = Manifest.open(out, cfg.hash, True)
    t0 = time.perf_counter()
    rows = []
    status = EXIT_OK
    for pid, desc, tau in cfg.jobs():
        probe = probe_from_dict({**desc, "tau": tau})
        try:
            rep = ntd_gap_energy(mask, probe, shape=scene.cavity)
        except ConvergenceError as exc:
            log.error("oracle %s tau=%g failed: %s", pid, tau, exc)
            status = EXIT_SOLVER
            continue
        row = {"probe_id": pid, **rep.row()}
        tpath = out / trace_name(pid, tau)
        if tpath.exists():
            ident = verify_basic_identity(read_trace_csv(tpath), probe, phi, mask, gap=rep.gap_boundary)
            row.update(J=ident.J, bridge_residual=ident.residual, bridge_relative=ident.relative)
        rows.append(row)
    cols = ["probe_id", "tau", "gap_boundary", "gap_energy", "part_gradR", "part_R", "part_gradv", "part_v",
            "cavity_weight", "J", "bridge_residual", "bridge_relative"]
    _write_csv(out / "oracle/gaps.csv", rows, cols)
    man.add("oracle/gaps.csv")
    man.data["timings"]["oracle"] = time.perf_counter() - t0
    man.save()
    return status


def cmd_reconstruct(cfg: RunConfig, out: Path) -> int:
    """Hull and ball enclosure from the sweep sidecars; the scene is used only for report overlays."""
    man = Manifest.open(out, cfg.hash, True)
    t0 = time.perf_counter()
    rect = tuple(float(v) for v in cfg.scene["omega_rect"])
    entries, points, dists = [], [], []
    for pid, desc in cfg.probe_ids():
        path = out / f"sweeps/{pid}.json"
        if not path.exists():
            log.warning("no sweep for %s", pid)
            continue
        side = json.loads(path.read_text())
        reg = side.get("regression")
        if reg is None:
            continue
        if desc["kind"] == "directional":
            entries.append(SupportEntry(tuple(desc["omega"]), reg["h"], {"probe_id": pid, "mu": reg["mu"]}))
        else:
            points.append(desc["p"])
            dists.append(max(0.0, -reg["h"]))
    summary: dict = {"n_directions_detected": len(entries), "n_points_detected": len(points)}
    status = EXIT_OK
    hull = balls = None
    if entries:
        table = SupportTable(entries, rect=rect)
        summary["flagged_directions"] = [list(e.omega) for e in table.flagged()]
        try:
            hull = halfplane_intersection(table, rect)
        except ReconstructionError as exc:
            log.error("reconstruction failed: %s", exc)
            summary["error"] = str(exc)
            summary["infeasible_constraints"] = exc.constraints
            status = EXIT_EMPTY
        if hull is not None:
            _write_csv(out / "hull.csv", [{"x": float(x), "y": float(y)} for x, y in hull.vertices], ["x", "y"])
            man.add("hull.csv")
            summary["hull_area"] = hull.area
            summary["residuals"] = [float(r) for r in hull.residuals]
    if points:
        balls = ball_complement_enclosure(points, dists, rect)
        _write_csv(out / "balls.csv", [{"px": c["p"][0], "py": c["p"][1], "d": c["d"]} for c in balls.constraints()],
                   ["px", "py", "d"])
        man.add("balls.csv")
        summary["ball_area_remaining"] = balls.area
        summary["ball_full_cover"] = balls.full_cover
        if balls.full_cover:
            log.error("excluded balls cover the whole body: distance estimates inconsistent")
    summary["status"] = "detected" if (entries or points) else "no detection"
    # report-only: compare against the configured cavity
    scene = scene_from_dict(cfg.scene)
    truth = scene.cavity
    if truth is not None and hull is not None:
        summary["hausdorff_to_true_hull"] = hausdorff_convex(hull, truth)
    (out / "reconstruction.svg").write_text(overlay_svg(rect, truth, hull, balls))
    man.add("reconstruction.svg")
    for pid, desc in cfg.probe_ids():
        path = out / f"sweeps/{pid}.csv"
        if not path.exists():
            continue
        data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
        side = json.loads((out / f"sweeps/{pid}.json").read_text())
        fit = side["regression"]["h"] if side.get("regression") else None
        ref = None
        if truth is not None:
            ref = (support_function(truth, desc["omega"], normalize=True) if desc["kind"] == "directional"
                   else -distance_to_point(truth, desc["p"]))
        (out / f"sweeps/{pid}.svg").write_text(
            sweep_svg(np.atleast_1d(data["sqrt_tau"]), np.atleast_1d(data["h_est_pointwise"]), ref, fit, label=pid))
        man.add(f"sweeps/{pid}.svg")
    (out / "reconstruction.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    man.add("reconstruction.json")
    man.data["timings"]["reconstruct"] = time.perf_counter() - t0
    man.save()
    log.info("reconstruction: %s", summary["status"])
    return status


def cmd_all(cfg: RunConfig, out: Path, jobs: int = 1, resume: bool = False) -> int:
    status = cmd_forward(cfg, out, jobs, resume)
    cmd_indicator(cfg, out)
    if cfg.oracle:
        status = max(status, cmd_oracle(cfg, out))
    rs = cmd_reconstruct(cfg, out)
    return rs if rs == EXIT_EMPTY else status


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heat-enclosure", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("forward", "indicator", "oracle", "reconstruct", "all"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (default: config 'output' or ./run)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for the forward stage")
        p.add_argument("--resume", action="store_true", help="skip traces completed under the same config hash")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = Path(args.out or cfg.output or "run")
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory {out} is not writable")
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "forward":
        return cmd_forward(cfg, out, args.jobs, args.resume)
    if args.command == "indicator":
        return cmd_indicator(cfg, out)
    if args.command == "oracle":
        return cmd_oracle(cfg, out)
    if args.command == "reconstruct":
        return cmd_reconstruct(cfg, out)
    return cmd_all(cfg, out, args.jobs, args.resume)


if __name__ == "__main__":
    sys.exit(main())
