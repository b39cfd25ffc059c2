"""Scenario-driven command line front end.

Every subcommand except ``list`` and ``validate`` is a task tag; the
scenario file supplies the set, alpha, resolution and task parameters.
Flags override the scenario, and RIESZLAB_* environment variables stand in
for flags that are not given (RIESZLAB_TOL, RIESZLAB_MAX_ITER,
RIESZLAB_RESOLUTION, RIESZLAB_OUTPUT, RIESZLAB_THREADS, RIESZLAB_TRACE,
RIESZLAB_NORMALIZE_REPORT).

Exit status: 0 converged, 2 computed but inconclusive, 1 error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, _backend
from . import gauss as ga
from . import kernel as kn
from . import potential_ops as po
from .geometry import DiscreteMeasure, descriptor_from_dict, discretize, point_cloud, probe_points
from .solvers import MASS_FLOOR

TASKS = ("capacity", "equilibrium", "balayage", "harmonic", "hvalue", "wiener", "gauss",
         "existence", "support_scan", "continuity_scan", "formula_check")
SCHEMA_VERSION = "1"
ENV_PREFIX = "RIESZLAB_"
SCAN_COLUMNS = {
    "support_scan": ["q", "value", "constant", "support_radius", "kkt_residual", "converged"],
    "continuity_scan": ["step", "value", "constant", "support_radius", "kkt_residual", "converged"],
}
EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2


class ScenarioError(ValueError):
    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


def _schema(name):
    return json.loads(resources.files("rieszlab").joinpath("schema", name).read_text())


def scenario_schema() -> dict:
    return _schema("scenario.schema.json")


def report_schema() -> dict:
    return _schema("report.schema.json")


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    task: str
    set_dict: dict
    alpha: float
    resolution: int
    boundary: bool = False
    params: dict = field(default_factory=dict)
    tol: float = 1e-8
    max_iter: int = 200_000
    output: str | None = None

    @property
    def set(self):
        return descriptor_from_dict(self.set_dict)


def bundled_dir():
    return resources.files("rieszlab").joinpath("scenarios")


def list_scenarios() -> list:
    out = []
    for f in sorted(bundled_dir().iterdir(), key=lambda p: p.name):
        if f.name.endswith(".json"):
            d = json.loads(f.read_text())
            out.append({"name": d.get("name"), "file": f.name, "task": d.get("task"),
                        "description": d.get("description", "")})
    return out


def resolve_path(ref: str) -> Path:
    p = Path(ref)
    if p.exists():
        return p
    cand = bundled_dir().joinpath(ref if ref.endswith(".json") else ref + ".json")
    if cand.is_file():
        return Path(str(cand))
    raise ScenarioError(f"scenario file not found: {ref}")


def _schema_error(err: jsonschema.ValidationError) -> ScenarioError:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        name = missing[0] if missing else None
        where = f"{path}.{name}" if path and name else name
        return ScenarioError(f"missing required field {where!r}", where)
    return ScenarioError(f"{path or 'scenario'}: {err.message}", path or None)


def _vec(params, key, n):
    v = np.asarray(params[key], float).reshape(-1)
    if v.size != n:
        raise ScenarioError(f"{key} must have {n} coordinates", f"params.{key}")
    return v


def _ladder(params):
    lad = [float(r) for r in params.get("ladder", po.DEFAULT_LADDER)]
    if not lad or any(b <= a for a, b in zip(lad, lad[1:])) or lad[0] <= 0:
        raise ScenarioError("ladder radii must be positive and strictly increasing", "params.ladder")
    return lad


_QTOKEN = re.compile(r"^\s*H\s*(?:([+-])\s*([0-9.eE+-]+))?\s*$")


def _q_grid(params):
    out = []
    for q in params["q_grid"]:
        if isinstance(q, str):
            m = _QTOKEN.match(q)
            if not m:
                raise ScenarioError(f"cannot parse q_grid entry {q!r}", "params.q_grid")
            off = float(m.group(2) or 0.0) * (-1 if m.group(1) == "-" else 1)
            out.append(("H", off))
        else:
            out.append(("abs", float(q)))
    return out


def _z_path(params, n):
    zp = params["z_path"]
    if isinstance(zp, dict):
        try:
            a = np.asarray(zp["from"], float)
            b = np.asarray(zp["to"], float)
            steps = int(zp["steps"])
        except KeyError as exc:
            raise ScenarioError(f"z_path is missing {exc.args[0]!r}", "params.z_path") from None
        if steps < 1:
            raise ScenarioError("z_path needs at least one step", "params.z_path")
        t = np.linspace(0.0, 1.0, steps + 1)[:, None]
        P = a + t * (b - a)
    else:
        P = np.asarray(zp, float)
    if P.ndim != 2 or P.shape[1] != n:
        raise ScenarioError(f"z_path points must have {n} coordinates", "params.z_path")
    return P


def validate_scenario(data: dict) -> Scenario:
    """Schema and precondition checks; raises ScenarioError before any computation."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    v = jsonschema.Draft202012Validator(scenario_schema())
    errs = sorted(v.iter_errors(data), key=lambda e: (len(e.absolute_path), e.message))
    if errs:
        raise _schema_error(errs[0])
    try:
        desc = descriptor_from_dict(data["set"])
    except ValueError as exc:
        raise ScenarioError(str(exc), "set") from None
    n = desc.ambient_dim
    alpha = float(data["alpha"])
    try:
        kn.check_alpha(alpha, n)
    except ValueError as exc:
        raise ScenarioError(str(exc), "alpha") from None
    boundary = bool(data.get("boundary", False))
    if boundary and alpha <= 1:
        raise ScenarioError("boundary mode needs alpha > 1", "boundary")
    solver = data.get("solver", {})
    sc = Scenario(data["name"], data["task"], data["set"], alpha, int(data["resolution"]), boundary,
                  dict(data.get("params", {})), float(solver.get("tol", 1e-8)),
                  int(solver.get("max_iter", 200_000)), data.get("output"))
    p, t = sc.params, sc.task
    for key in ("z", "y"):
        if key in p:
            _vec(p, key, n)
    if "q" in p:
        qs = p["q"] if isinstance(p["q"], list) else [p["q"]]
        if not qs or any(not isinstance(q, (int, float)) or not q > 0 for q in qs):
            raise ScenarioError("q must be positive", "params.q")
    if t in ("hvalue", "existence", "support_scan"):
        _ladder(p)
    if t == "wiener":
        r = float(p["ratio"])
        if r == 1:
            raise ScenarioError("ratio must differ from 1", "params.ratio")
        if p["mode"] not in po.WIENER_MODES:
            raise ScenarioError(f"mode must be one of {po.WIENER_MODES}", "params.mode")
        if p["mode"] == "thin_at_infinity_test" and not r > 1:
            raise ScenarioError("thin_at_infinity_test needs ratio > 1", "params.ratio")
        if p["mode"] != "thin_at_infinity_test" and not 0 < r < 1:
            raise ScenarioError(f"{p['mode']} needs ratio in (0, 1)", "params.ratio")
        _j_range(p)
    if t == "support_scan":
        g = _q_grid(p)
        if all(k == "abs" for k, _ in g) and any(b[1] < a[1] for a, b in zip(g, g[1:])):
            raise ScenarioError("q_grid must be sorted ascending", "params.q_grid")
    if t == "continuity_scan":
        _z_path(p, n)
        mode = p.get("mode", "q=H_z")
        if mode not in ("q=H_z", "fixed"):
            raise ScenarioError("mode must be 'q=H_z' or 'fixed'", "params.mode")
        if mode == "fixed" and not 0 < float(p.get("q", 0)) <= 1:
            raise ScenarioError("fixed mode needs 0 < q <= 1", "params.q")
    if t == "balayage":
        _source_check(p["source"], n)
    if t in ("capacity", "equilibrium", "balayage", "harmonic", "gauss", "continuity_scan",
             "formula_check") and not desc.bounded:
        raise ScenarioError(f"task {t} needs a bounded set; wrap it in a truncate descriptor", "set")
    return sc


def _j_range(p):
    jr = p["j_range"]
    if isinstance(jr, dict):
        js = list(range(int(jr["start"]), int(jr["stop"]) + 1))
    else:
        js = [int(j) for j in jr]
    if not js:
        raise ScenarioError("j_range is empty", "params.j_range")
    return js


def _source_check(src, n):
    if not isinstance(src, dict) or not ({"point"} <= src.keys() or {"nodes", "masses"} <= src.keys()):
        raise ScenarioError("source needs 'point' (with optional 'mass') or 'nodes' and 'masses'",
                            "params.source")
    if "point" in src and len(src["point"]) != n:
        raise ScenarioError(f"source point must have {n} coordinates", "params.source.point")


def load_scenario(ref: str) -> Scenario:
    path = resolve_path(ref)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}") from None
    return validate_scenario(data)


# ---------------------------------------------------------------------------
# task runners: each returns (status, result dict, diagonal rule, scans, traces)
# ---------------------------------------------------------------------------

@dataclass
class Outcome:
    status: str
    result: dict
    diagonal_rule: dict | None = None
    rows: list | None = None
    trace: list | None = None


def _status(ok: bool) -> str:
    return "converged" if ok else "error"


def _cloud_ctx(sc):
    cloud = discretize(sc.set, sc.resolution, sc.boundary)
    return cloud, kn.assemble_kernel(cloud, sc.alpha)


def _run_capacity(sc, trace):
    cloud, ctx = _cloud_ctx(sc)
    eq = po.equilibrium_measure(cloud, sc.alpha, sc.tol, sc.max_iter, ctx, trace)
    res = {"nodes": cloud.size, "capacity": eq.capacity, "energy": eq.energy, "objective": eq.objective,
           "kkt_residual": eq.kkt_residual, "converged": eq.converged}
    return Outcome(_status(eq.converged), res, ctx.diagonal_rule, trace=eq.trace)


def _run_equilibrium(sc, trace):
    cloud, ctx = _cloud_ctx(sc)
    eq = po.equilibrium_measure(cloud, sc.alpha, sc.tol, sc.max_iter, ctx, trace)
    U = eq.potential_on_nodes
    supp = eq.gamma.support()
    nprobe = int(sc.params.get("probes", 100))
    R = sc.set.bounding_radius()
    P = probe_points(np.zeros(cloud.dimension), R, nprobe, avoid=[cloud.nodes], margin=R / sc.resolution,
                     exclude=sc.set)
    Up = kn.measure_potential(eq.gamma, P, sc.alpha)
    res = {"nodes": cloud.size, "capacity": eq.capacity, "energy": eq.energy, "objective": eq.objective,
           "kkt_residual": eq.kkt_residual, "converged": eq.converged,
           "potential_min": float(U.min()), "potential_support_max_dev": float(np.max(np.abs(U[supp] - 1))),
           "probe_potential_min": float(Up.min()), "probe_potential_max": float(Up.max()),
           "support_indices": supp.tolist(), "masses": eq.gamma.masses.tolist()}
    return Outcome(_status(eq.converged), res, ctx.diagonal_rule, trace=eq.trace)


def _source(p, n):
    src = p["source"]
    if "point" in src:
        return np.asarray(src["point"], float), float(src.get("mass", 1.0))
    cloud = point_cloud(np.asarray(src["nodes"], float), float(src.get("cell_radius", 1e-3)))
    return DiscreteMeasure(cloud, src["masses"]), 1.0


def _run_balayage(sc, trace, harmonic=False):
    cloud, ctx = _cloud_ctx(sc)
    if harmonic:
        source, mass = np.asarray(sc.params["z"], float), 1.0
    else:
        source, mass = _source(sc.params, cloud.dimension)
    b = po.balayage(source, cloud, sc.alpha, mass, sc.tol, sc.max_iter, ctx, trace)
    res = b.to_dict()
    res["nodes"] = cloud.size
    return Outcome(_status(b.converged), res, ctx.diagonal_rule, trace=b.trace)


def _run_hvalue(sc, trace):
    p = sc.params
    h = po.h_value(p["z"], sc.set, sc.alpha, _ladder(p), sc.resolution, sc.boundary,
                   float(p.get("cross_tol", 0.02)), sc.tol, sc.max_iter)
    status = "inconclusive" if (h.inconclusive or not h.agree) else "converged"
    return Outcome(status, h.to_dict())


def _run_wiener(sc, trace):
    p = sc.params
    rep = po.wiener_classify(sc.set, p["y"], float(p["ratio"]), _j_range(p), p["mode"], sc.alpha,
                             sc.resolution, sc.boundary, float(p.get("delta", 0.05)), sc.tol, sc.max_iter)
    return Outcome("inconclusive" if rep.verdict == "inconclusive" else "converged", rep.to_dict())


def _run_gauss(sc, trace):
    cloud, ctx = _cloud_ctx(sc)
    qs = sc.params["q"] if isinstance(sc.params["q"], list) else [sc.params["q"]]
    solves, ok, tr = [], True, None
    for q in qs:
        rep = ga.solve_weighted(cloud, ga.FieldSpec(sc.params["z"], float(q), sc.alpha), sc.tol,
                                sc.max_iter, ctx, trace)
        if tr is None and trace:
            tr = rep.trace
        solves.append(rep.to_dict())
        ok &= rep.converged
    return Outcome(_status(ok), {"nodes": cloud.size, "solves": solves}, ctx.diagonal_rule, trace=tr)


def _run_existence(sc, trace):
    p = sc.params
    v = ga.existence_probe(sc.set, ga.FieldSpec(p["z"], float(p["q"]), sc.alpha), _ladder(p),
                           sc.resolution, sc.boundary, sc.tol, sc.max_iter)
    ok = all(r["converged"] for r in v.records)
    status = "error" if not ok else ("inconclusive" if v.verdict == "inconclusive" else "converged")
    return Outcome(status, v.to_dict())


def _run_support_scan(sc, trace):
    p = sc.params
    lad = _ladder(p)
    grid = _q_grid(p)
    h = None
    if any(k == "H" for k, _ in grid):
        h = po.h_value(p["z"], sc.set, sc.alpha, lad, sc.resolution, sc.boundary, tol=sc.tol,
                       max_iter=sc.max_iter)
    qs = [v if k == "abs" else h.value + v for k, v in grid]
    if any(b < a for a, b in zip(qs, qs[1:])):
        raise ScenarioError("q_grid must be sorted ascending", "params.q_grid")
    rows = ga.support_scan(sc.set, p["z"], qs, lad, sc.alpha, sc.resolution, sc.boundary, sc.tol,
                           sc.max_iter)
    res = {"h_z": None if h is None else h.to_dict(), "rows": rows}
    csv_rows = [{"q": r["q"], "value": r["value"][-1], "constant": r["constant"][-1],
                 "support_radius": r["final_support_radius"], "kkt_residual": r["kkt_residual"][-1],
                 "converged": all(r["converged"])} for r in rows]
    ok = all(all(r["converged"]) for r in rows)
    return Outcome(_status(ok), res, rows=csv_rows)


def _run_continuity(sc, trace):
    p = sc.params
    cloud = discretize(sc.set, sc.resolution, sc.boundary)
    P = _z_path(p, cloud.dimension)
    mode = p.get("mode", "q=H_z")
    rows, last = ga.continuity_scan(cloud, P, mode, p.get("q"), sc.alpha, sc.set, sc.tol, sc.max_iter)
    res = {"nodes": cloud.size, "mode": mode, "rows": rows}
    if "boundary_point" in p:
        res["cap_angle"] = float(p.get("cap_angle", 0.3))
        res["cap_mass_last"] = ga.cap_mass(last.lam, p["boundary_point"], res["cap_angle"])
    ok = all(r["converged"] for r in rows)
    return Outcome(_status(ok), res, rows=[{k: r[k] for k in SCAN_COLUMNS["continuity_scan"]} for r in rows])


def _run_formula(sc, trace):
    p = sc.params
    cloud, ctx = _cloud_ctx(sc)
    fld = ga.FieldSpec(p["z"], float(p["q"]), sc.alpha)
    hm = po.harmonic_measure(fld.z, cloud, sc.alpha, tol=sc.tol, max_iter=sc.max_iter, ctx=ctx)
    eq = po.equilibrium_measure(cloud, sc.alpha, sc.tol, sc.max_iter, ctx)
    h_ref = p.get("h_z")
    fr = ga.check_solution_formula(cloud, fld, h_ref, hm, eq, tol=sc.tol, ctx=ctx)
    res = fr.to_dict()
    res["nodes"] = cloud.size
    res["discrete_h_z"] = 1.0 / hm.swept.total
    res["capacity"] = eq.capacity
    res["constant_check"] = ga.weighted_constant(fr.report, res["discrete_h_z"], eq.capacity)
    if h_ref is not None and "capacity" in p:
        # closed form with reference (continuous) H_z and c(A)
        res["constant_check_reference"] = ga.weighted_constant(fr.report, float(h_ref), float(p["capacity"]))
    ok = fr.report.converged and hm.converged and eq.converged
    return Outcome(_status(ok), res, ctx.diagonal_rule)


RUNNERS = {
    "capacity": _run_capacity, "equilibrium": _run_equilibrium, "balayage": _run_balayage,
    "harmonic": lambda sc, tr: _run_balayage(sc, tr, harmonic=True), "hvalue": _run_hvalue,
    "wiener": _run_wiener, "gauss": _run_gauss, "existence": _run_existence,
    "support_scan": _run_support_scan, "continuity_scan": _run_continuity, "formula_check": _run_formula,
}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def build_report(sc: Scenario | None, outcome: Outcome | None, normalize: bool, error=None) -> dict:
    rep = {"schema_version": SCHEMA_VERSION, "rieszlab_version": __version__,
           "task": sc.task if sc else None, "scenario": sc.name if sc else None}
    if not normalize:
        rep["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    if error is not None:
        rep["status"] = "error"
        rep["error"] = error
        return _clean(rep)
    rep["status"] = outcome.status
    rep["constants"] = {"alpha": sc.alpha, "n": sc.set.ambient_dim, "tol": sc.tol, "max_iter": sc.max_iter,
                        "mass_floor": MASS_FLOOR, "resolution": sc.resolution, "boundary": sc.boundary,
                        "backend": _backend.BACKEND, "diagonal_rule": outcome.diagonal_rule}
    rep["set"] = sc.set_dict
    rep["params"] = sc.params
    rep["result"] = outcome.result
    return _clean(rep)


def write_json(path: Path, rep: dict) -> None:
    path.write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")


def write_scan_csv(path: Path, task: str, rows: list) -> None:
    cols = SCAN_COLUMNS[task]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(r[c])) if isinstance(r[c], float) else r[c] for c in cols])


def write_trace_csv(path: Path, trace: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "objective", "kkt_residual"])
        for it, f, r in trace:
            w.writerow([it, repr(float(f)), repr(float(r))])


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _env(name, cast, default=None):
    v = os.environ.get(ENV_PREFIX + name)
    if v is None or v == "":
        return default
    if cast is bool:
        return v.strip().lower() in ("1", "true", "yes", "on")
    return cast(v)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rieszlab", description="Riesz potential theory scenarios")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
    common.add_argument("--output", help="directory for report files")
    common.add_argument("--tol", type=float)
    common.add_argument("--max-iter", type=int)
    common.add_argument("--resolution", type=int)
    common.add_argument("--trace", action="store_true", default=None, help="write the solver trace as CSV")
    common.add_argument("--threads", type=int, help="limit BLAS/OpenMP threads")
    common.add_argument("--normalize-report", action="store_true", default=None,
                        help="omit timestamps so identical runs give identical reports")
    sub.add_parser("run", parents=[common], help="run the scenario's own task")
    for t in TASKS:
        sub.add_parser(t, parents=[common], help=f"run a scenario whose task is {t}")
    sub.add_parser("list", help="list bundled scenarios")
    va = sub.add_parser("validate", help="validate scenario files without running them")
    va.add_argument("paths", nargs="*", help="scenario files (default: all bundled)")
    return ap


def _cmd_validate(paths) -> int:
    refs = paths or [s["file"] for s in list_scenarios()]
    bad = 0
    for ref in refs:
        try:
            sc = load_scenario(ref)
            print(json.dumps({"scenario": ref, "valid": True, "task": sc.task}))
        except ScenarioError as exc:
            bad += 1
            print(json.dumps({"scenario": ref, "valid": False, "error": str(exc), "field": exc.field}))
    return EXIT_ERROR if bad else EXIT_OK


def run_scenario(sc: Scenario, outdir: Path, trace: bool = False, normalize: bool = False,
                 threads: int | None = None):
    """Run one scenario, write its report files and return (exit code, report, files)."""
    outdir.mkdir(parents=True, exist_ok=True)
    files = {}
    try:
        with threadpool_limits(limits=threads):
            outcome = RUNNERS[sc.task](sc, trace)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        err = {"type": type(exc).__name__, "message": str(exc), "field": getattr(exc, "field", None)}
        rep = build_report(sc, None, normalize, err)
        path = outdir / f"{sc.name}.json"
        write_json(path, rep)
        return EXIT_ERROR, rep, {"report": str(path)}
    if outcome.rows is not None and sc.task in SCAN_COLUMNS:
        p = outdir / f"{sc.name}.csv"
        write_scan_csv(p, sc.task, outcome.rows)
        files["scan_csv"] = p.name
    if trace and outcome.trace:
        p = outdir / f"{sc.name}_trace.csv"
        write_trace_csv(p, outcome.trace)
        files["trace_csv"] = p.name
    rep = build_report(sc, outcome, normalize)
    if files:
        rep["files"] = files
    path = outdir / f"{sc.name}.json"
    write_json(path, rep)
    files["report"] = str(path)
    code = {"converged": EXIT_OK, "inconclusive": EXIT_INCONCLUSIVE}.get(outcome.status, EXIT_ERROR)
    return code, rep, files


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        for s in list_scenarios():
            print(json.dumps(s))
        return EXIT_OK
    if args.command == "validate":
        return _cmd_validate(args.paths)

    outdir = Path(args.output or _env("OUTPUT", str) or ".")
    normalize = bool(args.normalize_report if args.normalize_report is not None
                     else _env("NORMALIZE_REPORT", bool, False))
    try:
        sc = load_scenario(args.scenario)
        if args.command != "run" and args.command != sc.task:
            raise ScenarioError(f"scenario task is {sc.task!r}, not {args.command!r}", "task")
        tol = args.tol if args.tol is not None else _env("TOL", float)
        max_iter = args.max_iter if args.max_iter is not None else _env("MAX_ITER", int)
        res = args.resolution if args.resolution is not None else _env("RESOLUTION", int)
        if tol is not None:
            if not tol > 0:
                raise ScenarioError("tol must be positive", "tol")
            sc.tol = tol
        if max_iter is not None:
            if max_iter < 1:
                raise ScenarioError("max_iter must be positive", "max_iter")
            sc.max_iter = max_iter
        if res is not None:
            if res < 1:
                raise ScenarioError("resolution must be positive", "resolution")
            sc.resolution = res
        if args.output is None and _env("OUTPUT", str) is None and sc.output:
            outdir = Path(sc.output)
    except ScenarioError as exc:
        rep = build_report(None, None, normalize, {"type": "ScenarioError", "message": str(exc),
                                                  "field": exc.field})
        outdir.mkdir(parents=True, exist_ok=True)
        name = Path(args.scenario).stem or "scenario"
        write_json(outdir / f"{name}.error.json", rep)
        print(json.dumps({"status": "error", "error": str(exc), "field": exc.field}), file=sys.stderr)
        return EXIT_ERROR
    trace = bool(args.trace if args.trace is not None else _env("TRACE", bool, False))
    threads = args.threads if args.threads is not None else _env("THREADS", int)
    code, rep, files = run_scenario(sc, outdir, trace, normalize, threads)
    print(json.dumps({"scenario": sc.name, "status": rep["status"], "report": files["report"]}))
    return code


if __name__ == "__main__":
    sys.exit(main())
