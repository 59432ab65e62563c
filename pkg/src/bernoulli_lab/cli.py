"""Scenario runner: ``bernoulli-lab <kind> --config cfg.json --out DIR``.

Every run writes its artifacts plus ``manifest.json`` (config, sha256 of the
canonical config, artifact hashes, metrics and threshold checks).  Outputs
carry no timestamps, so a config reproduces its files byte for byte.  Floats
are written as the shortest decimal that round-trips (``repr``).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .acsolver import BoundaryData, SolverParams, StepPolicy, discrete_lipschitz, minimize, verify_fbc
from .errors import BernoulliLabError, DomainError, ResourceError
from .geometry import analytic_boundary, hausdorff, separation, trace_free_boundary, write_strands_csv
from .grid import GridField
from .neckscope import NeckParams, neck_pipeline
from .rescale import classify, rescale
from .solutions import (
    DEFAULT_NODE_CAP,
    AnalyticSolution,
    Hairpin,
    evaluate,
    grad,
    hairpin_geometry,
    sample_to_grid,
    window_shape,
)
from .traizet import (
    canonical_align,
    catenoid_residual,
    curvature_compare_3d,
    fit_rho,
    immerse,
    interior_vertices,
    mean_curvature,
    neck_geodesic_length,
    weierstrass_data,
)
from .weiss import max_defect, weiss_scan, write_scan_csv

log = logging.getLogger("bernoulli_lab")

KINDS = ("families", "weiss", "classify", "neck", "traizet", "solve")
MANIFEST = "manifest.json"


class ConfigError(BernoulliLabError, ValueError):
    """The scenario config is malformed."""


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------


def fmt_float(x) -> str:
    """Shortest round-trip decimal; ``nan``/``inf`` spelled as Python does."""
    return repr(float(x))


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats -> None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def config_hash(config: dict) -> str:
    canon = json.dumps(_clean(config), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@dataclass
class Scenario:
    kind: str
    input: dict
    window: tuple | None = None
    h: float | None = None
    thresholds: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out: str | None = None
    node_cap: int = DEFAULT_NODE_CAP

    @classmethod
    def from_dict(cls, d: dict, kind: str | None = None) -> "Scenario":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        k = d.get("kind", kind)
        if kind is not None and k != kind:
            raise ConfigError(f"config kind {k!r} does not match subcommand {kind!r}")
        if k not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {k!r}")
        if "input" not in d or not isinstance(d["input"], dict):
            raise ConfigError("config needs an 'input' object")
        window = d.get("window")
        if window is not None:
            if len(window) != 4:
                raise ConfigError("window must be [xmin, xmax, ymin, ymax]")
            window = tuple(float(v) for v in window)
        h = d.get("h")
        h = None if h is None else float(h)
        sc = cls(
            k,
            d["input"],
            window,
            h,
            dict(d.get("thresholds", {})),
            dict(d.get("params", {})),
            d.get("out"),
            int(d.get("node_cap", DEFAULT_NODE_CAP)),
        )
        sc.validate()
        return sc

    def validate(self) -> None:
        for name, t in self.thresholds.items():
            bounds = t.values() if isinstance(t, dict) else [t]
            for b in bounds:
                if not (isinstance(b, (int, float)) and not isinstance(b, bool) and b > 0 and math.isfinite(b)):
                    raise ConfigError(f"threshold {name!r} must be a positive number")
        if (self.window is None) != (self.h is None):
            raise ConfigError("window and h go together")
        if self.window is not None:
            try:
                nx, ny = window_shape(self.window, self.h)
            except DomainError as exc:
                raise ConfigError(str(exc)) from None
            if nx * ny > self.node_cap:
                raise ResourceError(f"{nx}x{ny} nodes exceeds the cap of {self.node_cap}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "input": self.input,
            "window": list(self.window) if self.window is not None else None,
            "h": self.h,
            "thresholds": self.thresholds,
            "params": self.params,
            "node_cap": self.node_cap,
        }

    def analytic(self) -> AnalyticSolution:
        if "family" not in self.input:
            raise ConfigError(f"{self.kind} needs an analytic input ({{'family': ..., 'motion': ...}})")
        return AnalyticSolution.from_dict(self.input)

    def solution(self):
        """Analytic solution, or a grid field loaded from ``input.field``."""
        if "field" in self.input:
            return GridField.load(self.input["field"])
        return self.analytic()

    def grid_field(self) -> GridField:
        src = self.solution()
        if isinstance(src, GridField):
            return src
        if self.window is None:
            raise ConfigError(f"{self.kind} on an analytic input needs window and h")
        return sample_to_grid(src, self.window, self.h, node_cap=self.node_cap)


def _checks(metrics: dict, thresholds: dict) -> dict:
    """``{name: {value, min/max, pass}}``; a bare number is an upper bound."""
    out = {}
    for name, t in sorted(thresholds.items()):
        bound = t if isinstance(t, dict) else {"max": t}
        v = metrics.get(name)
        ok = isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)
        if ok and "max" in bound:
            ok = v <= bound["max"]
        if ok and "min" in bound:
            ok = v >= bound["min"]
        out[name] = dict(bound, value=v, passed=bool(ok))
    return out


# ---------------------------------------------------------------------------
# runners: each returns (metrics, artifact file names)
# ---------------------------------------------------------------------------


def _save_field(fld: GridField, out: Path, stem: str = "field") -> list:
    fld.save(out / f"{stem}.grid")
    write_json(
        out / f"{stem}.json",
        {"origin": fld.origin, "h": fld.h, "nx": fld.nx, "ny": fld.ny, "window": list(fld.window), "provenance": fld.provenance},
    )
    return [f"{stem}.grid", f"{stem}.json"]


def run_families(sc: Scenario, out: Path):
    sol = sc.analytic()
    fld = sc.grid_field()
    files = _save_field(fld, out)
    u = fld.values
    pos = (u[1:-1, 1:-1] > 0) & (u[:-2, 1:-1] > 0) & (u[2:, 1:-1] > 0) & (u[1:-1, :-2] > 0) & (u[1:-1, 2:] > 0)
    lap = (u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:] - 4 * u[1:-1, 1:-1]) / fld.h**2
    metrics = {"laplacian_max": float(np.max(np.abs(lap[pos]))) if np.any(pos) else 0.0}
    strands = trace_free_boundary(fld)
    write_strands_csv(strands, out / "free_boundary.csv")
    files.append("free_boundary.csv")
    exact = analytic_boundary(sol, fld.window)
    if exact.size:
        g = grad(sol, exact)
        metrics["boundary_grad_defect"] = float(np.max(np.abs(np.abs(g) - 1.0)))
        pts = np.concatenate([s.points for s in strands]) if strands else np.zeros(0, complex)
        if pts.size:
            metrics["contour_hausdorff"] = hausdorff(pts, exact)
    if isinstance(sol.family, Hairpin):
        geo = hairpin_geometry(sol.family.a)
        z0 = sol.motion.shift
        metrics["saddle_value_error"] = abs(float(evaluate(sol, z0)) - geo.saddle_value)
        try:
            metrics["separation_error"] = abs(separation(fld, strands)[0] - geo.separation)
        except BernoulliLabError as exc:
            metrics["separation_error"] = math.nan
            log.warning("separation: %s", exc)
    return metrics, files


def run_weiss(sc: Scenario, out: Path):
    u = sc.solution()
    p = sc.params
    center = complex(*p.get("center", [0.0, 0.0]))
    radii = p.get("radii", [2.0**k for k in range(-1, 7)])
    samples = weiss_scan(u, center, radii)
    write_scan_csv(samples, out / "weiss.csv")
    phis = [s.phi for s in samples]
    metrics = {
        "max_defect": max_defect(samples),
        "phi_first": phis[0],
        "phi_last": phis[-1],
        "phi_spread": max(phis) - min(phis),
    }
    return metrics, ["weiss.csv"]


def run_classify(sc: Scenario, out: Path):
    u = sc.solution()
    p = sc.params
    center = complex(*p.get("center", [0.0, 0.0]))
    lam = float(p.get("scale", 1.0))
    R = float(p.get("probe_radius", 1.0))
    v = rescale(u, center, lam)
    res = classify(v, R)
    d = res.to_dict()
    d["center"] = center
    d["scale"] = lam
    write_json(out / "classification.json", d)
    metrics = {"family": res.tag, "residual": res.residual}
    metrics.update({f"param_{k}": float(x) for k, x in res.family.family.params().items()})
    return metrics, ["classification.json"]


def run_neck(sc: Scenario, out: Path):
    fld = sc.grid_field()
    p = dict(sc.params)
    if "annulus" in p:
        p["annulus"] = tuple(p["annulus"])
    scan = neck_pipeline(fld, NeckParams(**p))
    write_json(out / "neck_report.json", scan.to_dict())
    metrics = {"n_necks": len(scan), "away_curvature_sup": scan.away_curvature_sup}
    if len(scan):
        r = scan[0]
        metrics.update(
            {
                "a": r.a,
                "proximity_delta": r.proximity_delta,
                "psi_sup_second": r.psi_sup_second,
                "curvature_defect": r.curvature_defect,
                "four_graph_lip": r.four_graph["lip"],
            }
        )
    return metrics, ["neck_report.json"]


def run_traizet(sc: Scenario, out: Path):
    if sc.window is None:
        raise ConfigError("traizet needs window and h")
    data = weierstrass_data(sc.analytic())
    mesh = immerse(data, sc.window, sc.h, basepoint=sc.params.get("basepoint") and complex(*sc.params["basepoint"]))
    u_nodes = np.asarray(data.height(mesh.params), dtype=float)
    metrics = {"x3_defect": float(np.max(np.abs(mesh.vertices[:, 2] - u_nodes))), "edge_residual": mesh.edge_residual}
    files = []
    if data.saddle is not None:
        mesh = canonical_align(mesh, data)
        rho = fit_rho(mesh)
        metrics["rho"] = rho
        metrics["catenoid_residual"] = catenoid_residual(mesh, rho)
        try:
            L = neck_geodesic_length(mesh)
            metrics["neck_length_rel_error"] = abs(2 * math.pi * rho - L) / L
        except BernoulliLabError as exc:
            log.warning("neck length: %s", exc)
        inner = interior_vertices(mesh, 2)
        H = mean_curvature(mesh)
        metrics["mean_curvature_max"] = float(np.max(H[inner])) if np.any(inner) else math.nan
        prof = curvature_compare_3d(data, rho, mesh.params[~mesh.boundary], int(sc.params.get("n_bins", 12)))
        prof.write_csv(out / "curvature_defect.csv")
        files.append("curvature_defect.csv")
        metrics["curvature_defect_max"] = float(np.nanmax(prof.k_defect))
    mesh.write_obj(out / "mesh.obj")
    mesh.write_sidecar(out / "mesh.json")
    return metrics, ["mesh.obj", "mesh.json"] + files


def run_solve(sc: Scenario, out: Path):
    if sc.window is None:
        raise ConfigError("solve needs window and h")
    if "boundary_csv" in sc.input:
        bd = BoundaryData.read_csv(sc.input["boundary_csv"])
        ref = None
    else:
        ref = sc.analytic()
        bd = BoundaryData.from_function(ref, sc.window, sc.h)
    p = dict(sc.params)
    if "step_policy" in p:
        p["step_policy"] = StepPolicy(**p["step_policy"])
    if "escape_shifts" in p:
        p["escape_shifts"] = tuple(p["escape_shifts"])
    res = minimize(sc.window, sc.h, bd, SolverParams(**p))
    files = _save_field(res.field, out)
    with open(out / "energy.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "energy"])
        for k, e in enumerate(res.energy_trace):
            w.writerow([k, fmt_float(e)])
    files.append("energy.csv")
    st = verify_fbc(res.field)
    write_json(out / "fbc.json", {"mean": st.mean, "max": st.max, "n_points": st.n_points, "floor": st.floor, "per_strand": st.per_strand})
    files.append("fbc.json")
    metrics = {
        "converged": res.converged,
        "iterations": res.iterations,
        "residual": res.residual,
        "energy": res.energy_trace[-1],
        "fbc_max": st.max,
        "fbc_mean": st.mean,
        "lipschitz": discrete_lipschitz(res.field),
    }
    if ref is not None:
        metrics["sup_distance"] = float(np.max(np.abs(res.field.values - evaluate(ref, res.field.coords()))))
        metrics["sup_distance_over_h"] = metrics["sup_distance"] / sc.h
    return metrics, files


RUNNERS = {
    "families": run_families,
    "weiss": run_weiss,
    "classify": run_classify,
    "neck": run_neck,
    "traizet": run_traizet,
    "solve": run_solve,
}


def run(sc: Scenario, out) -> dict:
    """Run a scenario into ``out``; returns the manifest."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    log.info("running %s into %s", sc.kind, out)
    metrics, files = RUNNERS[sc.kind](sc, out)
    checks = _checks(metrics, sc.thresholds)
    manifest = {
        "kind": sc.kind,
        "status": "ok",
        "config": sc.to_dict(),
        "config_hash": config_hash(sc.to_dict()),
        "artifacts": {f: _sha256(out / f) for f in sorted(files)},
        "metrics": metrics,
        "checks": checks,
        "passed": all(c["passed"] for c in checks.values()),
    }
    write_json(out / MANIFEST, manifest)
    return manifest


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------


def report_summary(directory) -> dict:
    """Aggregate every run manifest under ``directory``.

    Each run's checks become criteria named ``<run>/<metric>``; a criterion
    fails on its own without touching the others.  Immediate subdirectories
    without a manifest are listed as missing and degrade the status.
    """
    root = Path(directory)
    if not root.is_dir():
        raise DomainError(f"{directory} is not a directory")
    runs = {}
    criteria = {}
    missing = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        mpath = sub / MANIFEST
        if not mpath.is_file():
            missing.append(sub.name)
            continue
        try:
            m = json.loads(mpath.read_text())
        except json.JSONDecodeError:
            missing.append(sub.name)
            continue
        runs[sub.name] = {"kind": m.get("kind"), "config_hash": m.get("config_hash"), "passed": m.get("passed", False)}
        for name, c in m.get("checks", {}).items():
            criteria[f"{sub.name}/{name}"] = c
    if (root / MANIFEST).is_file():
        m = json.loads((root / MANIFEST).read_text())
        runs["."] = {"kind": m.get("kind"), "config_hash": m.get("config_hash"), "passed": m.get("passed", False)}
        for name, c in m.get("checks", {}).items():
            criteria[name] = c
    success = bool(runs) and all(c.get("passed", False) for c in criteria.values()) and all(r["passed"] for r in runs.values())
    return {
        "status": "degraded" if missing else "ok",
        "success": success and not missing,
        "runs": runs,
        "criteria": criteria,
        "missing": missing,
    }


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _error_payload(exc) -> dict:
    d = {"status": "error", "error": {"type": type(exc).__name__, "message": str(exc)}}
    for attr in ("count", "residual", "diagnostics"):
        if getattr(exc, attr, None) is not None:
            d["error"][attr] = getattr(exc, attr)
    return d


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bernoulli-lab", description="One-phase free boundary experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run a {kind} scenario")
        sp.add_argument("--config", required=True, help="scenario JSON file")
        sp.add_argument("--out", help="output directory (default: config 'out')")
        sp.add_argument("--verbose", action="store_true")
    sp = sub.add_parser("summary", help="aggregate run manifests in a directory")
    sp.add_argument("directory")
    sp.add_argument("--out", help="write the aggregate here instead of stdout")
    sp.add_argument("--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out = getattr(args, "out", None)
    try:
        if args.command == "summary":
            agg = report_summary(args.directory)
            text = dumps(agg)
            if out:
                Path(out).write_text(text)
            else:
                sys.stdout.write(text)
            return 0 if agg["success"] else 1
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        sc = Scenario.from_dict(cfg, args.command)
        out = out or sc.out
        if not out:
            raise ConfigError("no output directory (--out or config 'out')")
        manifest = run(sc, out)
        sys.stdout.write(dumps({"status": "ok", "out": str(out), "passed": manifest["passed"], "metrics": manifest["metrics"]}))
        return 0
    except (BernoulliLabError, TypeError, KeyError) as exc:
        payload = _error_payload(exc)
        if out:
            Path(out).mkdir(parents=True, exist_ok=True)
            write_json(Path(out) / "error.json", payload)
        sys.stdout.write(dumps(payload))
        return 2


if __name__ == "__main__":
    sys.exit(main())
