"""Command-line interface: ``python -m oscitopo <command> [options]``.

Exit status is 0 on success, 1 on numerical failure (or a failing claim
report) and 2 on invalid input. Reports go to ``--out`` (written atomically)
or to standard output.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import claims as claims_mod
from .errors import (
    BraidInputError,
    DomainError,
    OscitopoError,
    ParseError,
    PreconditionError,
)
from .export import section_csv, sweep_csv, to_json, trajectory_csv, trajectory_meta, write_atomic
from .expr import format_expression, parse_field
from .fields import (
    SystemParams,
    eval_field,
    eval_jacobian,
    fixed_points,
    section_normal_component,
)
from .ode import IntegratorConfig, classify_fate, integrate
from .orbits import exit_time_sweep, find_periodic_orbit, recurrence_scan, trace_stable_manifold
from .section import SectionSpec, detect_crossings, sample_return_map, section_point
from .topo.braid import extract_braid
from .topo.degree import analytic_index, direction_avoidance, numerical_degree
from .topo.spectrum import classify_spectrum

SYSTEM_CHOICES = ("nose-hoover", "moore-spiegel", "hopf", "custom")
DEFAULTS = {"system": "nose-hoover", "format": "json"}


class UsageError(Exception):
    """Invalid command-line or configuration input."""


@dataclass
class RunConfig:
    """Fully resolved settings of one command invocation."""

    command: str
    system: dict
    integrator: dict
    options: dict = field(default_factory=dict)
    out: str | None = None
    format: str = "json"

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "system": self.system,
            "integrator": self.integrator,
            "options": self.options,
            "out": self.out,
            "format": self.format,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(d["command"], d["system"], d["integrator"], dict(d.get("options", {})),
                   d.get("out"), d.get("format", "json"))

    def params(self) -> SystemParams:
        return SystemParams.from_dict(self.system)

    def cfg(self) -> IntegratorConfig:
        return IntegratorConfig.from_dict(self.integrator)


# --------------------------------------------------------------------------- parsing helpers


def _vector(text: str, n: int, name: str) -> np.ndarray:
    try:
        vals = [float(v) for v in str(text).replace(" ", "").split(",")]
    except ValueError as exc:
        raise UsageError(f"--{name} expects {n} comma-separated numbers") from exc
    if len(vals) != n or not all(np.isfinite(vals)):
        raise UsageError(f"--{name} expects {n} finite comma-separated numbers")
    return np.array(vals)


def _number_list(text: str, name: str) -> list:
    try:
        return [float(v) for v in str(text).replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise UsageError(f"--{name} expects comma-separated numbers") from exc


def _point_list(text: str, name: str) -> list:
    pts = []
    for chunk in str(text).split(";"):
        if chunk.strip():
            pts.append(tuple(_vector(chunk, 2, name)))
    return pts


# --------------------------------------------------------------------------- argument parser


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = p.add_argument_group("system and output")
    g.add_argument("--system", choices=SYSTEM_CHOICES + ("both",))
    g.add_argument("--Q", type=float, help="Nose-Hoover parameter (default 1)")
    g.add_argument("--T", type=float, help="Moore-Spiegel T (default 27)")
    g.add_argument("--R", type=float, help="Moore-Spiegel R (default 100)")
    g.add_argument("--mu", type=float, help="validation field mu (default 1)")
    g.add_argument("--omega", type=float, help="validation field omega (default 1)")
    g.add_argument("--field-file", dest="field_file", help="custom field definition file")
    g.add_argument("--param", dest="param", action="append", help="custom field parameter NAME=VALUE")
    g.add_argument("--config", help="JSON file with option values; flags override it")
    g.add_argument("--out", help="output file (default: standard output)")
    g.add_argument("--format", choices=("json", "csv"))
    g.add_argument("--seed", type=int, help="seed for sampling operations")
    g.add_argument("--tol-rel", dest="tol_rel", type=float)
    g.add_argument("--tol-abs", dest="tol_abs", type=float)
    g.add_argument("--max-step", dest="max_step", type=float)
    g.add_argument("--t-max", dest="t_max", type=float)
    g.add_argument("--escape-radius", dest="escape_radius", type=float)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="oscitopo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, argument_default=argparse.SUPPRESS)

    p = add("simulate", "integrate a trajectory")
    p.add_argument("--init", help="initial state x,y,z")
    p.add_argument("--t", dest="t_end", type=float, help="final time (default 200)")
    p.add_argument("--reverse", action="store_true", help="integrate backward in time")
    p.add_argument("--classify", action="store_true", help="also classify the orbit's fate")

    p = add("field-eval", "evaluate the field and its Jacobian")
    p.add_argument("--state", help="state x,y,z")

    p = add("section-map", "section crossings of a trajectory, or return-map samples")
    p.add_argument("--init", help="initial state x,y,z for a crossing scan")
    p.add_argument("--t", dest="t_end", type=float, help="final time of the scan (default 200)")
    p.add_argument("--points", help="section points 'x,z;x,z;...' to map once")

    for name, text in (("find-orbit", "refine a periodic orbit"),
                       ("classify-orbit", "refine a periodic orbit and compute its braid")):
        p = add(name, text)
        p.add_argument("--guess", help="section point x,z")
        p.add_argument("--n-return", dest="n_return", type=int, help="return count (default 1)")
        p.add_argument("--init", help="seed a recurrence scan from this state instead of --guess")
        p.add_argument("--t", dest="t_end", type=float, help="scan length (default 300)")
        p.add_argument("--radius", type=float, help="recurrence radius (default 1)")
        p.add_argument("--max-n", dest="max_n", type=int, help="largest return count scanned (default 4)")

    p = add("index", "fixed-point index by the Jacobian sign rule")
    p.add_argument("--point", help="fixed point x,y,z (default origin)")

    p = add("degree", "Brouwer degree of the normalized field on a sphere")
    p.add_argument("--center", help="sphere center x,y,z (default origin)")
    p.add_argument("--radius", type=float, help="sphere radius")
    p.add_argument("--subdivision", type=int, help="icosphere subdivision level (default 5)")

    p = add("avoidance", "minimum angle between the field and a direction on a sphere")
    p.add_argument("--center", help="sphere center x,y,z (default origin)")
    p.add_argument("--radius", type=float, help="sphere radius")
    p.add_argument("--direction", help="direction x,y,z (default 0,0,1)")
    p.add_argument("--samples", type=int, help="sample count (default 100000)")

    p = add("spectrum", "eigenvalue classification of a fixed point")
    p.add_argument("--point", help="fixed point x,y,z (default origin)")
    p.add_argument("--fixed-points", dest="list_fixed", action="store_true",
                   help="list all fixed points in [-20, 20]^3 instead")

    p = add("manifold", "trace the stable manifold of the origin")
    p.add_argument("--epsilon", type=float, help="seed offset (default 1e-6)")
    p.add_argument("--reached-norm", dest="reached_norm", type=float, help="target norm (default 100)")
    p.add_argument("--polyline", action="store_true", help="include the traced points")

    p = add("sweep-exit", "first exit times from the quadrants fed by the x-axis")
    p.add_argument("--arc", choices=("l1", "l2"))
    p.add_argument("--s", dest="s_values", help="comma-separated s values")

    p = add("verify-claims", "run the claims-verification suite")
    p.add_argument("--only", help="comma-separated claim ids")
    p.add_argument("--list", dest="list_claims", action="store_true", help="list claim ids and exit")
    p.add_argument("--mutate", choices=("flip-index-sign",), help=argparse.SUPPRESS)

    p = add("parse-field", "validate a custom field file")
    return parser


# --------------------------------------------------------------------------- resolution


def _resolve(ns: argparse.Namespace) -> tuple:
    values = dict(DEFAULTS)
    if getattr(ns, "command", None) == "verify-claims":
        values["system"] = "both"
    given = vars(ns).copy()
    if "config" in given:
        try:
            file_values = json.loads(Path(given.pop("config")).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        if not isinstance(file_values, dict):
            raise UsageError("config file must hold a JSON object")
        if isinstance(file_values.get("config"), dict):
            file_values = file_values["config"]
        values.update(_flatten_run_config(file_values))
    values.update(given)
    return values


_VECTOR_OPTIONS = ("init", "state", "point", "center", "direction", "guess")


def _flatten_run_config(d: dict) -> dict:
    """Flag-style values from a flat mapping or an embedded ``RunConfig`` dict."""
    flat = {k.replace("-", "_"): v for k, v in d.items()
            if k not in ("system", "integrator", "options", "command")}
    system = d.get("system")
    if isinstance(system, dict):
        flat["system"] = system["kind"]
        for k, v in system.get("params", {}).items():
            if system["kind"] == "custom":
                flat.setdefault("param", []).append(f"{k}={v!r}")
            else:
                flat[k] = v
        if "field_source" in system:
            flat["field_source"] = system["field_source"]
    elif system is not None:
        flat["system"] = system
    for attr, key in (("rel_tol", "tol_rel"), ("abs_tol", "tol_abs"), ("max_step", "max_step"),
                      ("t_max", "t_max"), ("escape_radius", "escape_radius")):
        if attr in d.get("integrator", {}):
            flat[key] = d["integrator"][attr]
    for k, v in d.get("options", {}).items():
        if v is None:
            continue
        if k in _VECTOR_OPTIONS and isinstance(v, list):
            v = ",".join(repr(float(c)) for c in v)
        elif k == "t":
            k = "t_end"
        elif k == "s" and isinstance(v, list):
            k, v = "s_values", ",".join(repr(float(c)) for c in v)
        elif k == "points":
            v = ";".join(",".join(repr(float(c)) for c in p) for p in v)
        elif k == "only" and isinstance(v, list):
            v = ",".join(v)
        flat[k] = v
    return flat


def _system_from(values: dict, allow_both=False) -> SystemParams | None:
    name = values.get("system", "nose-hoover")
    if name == "both":
        if not allow_both:
            raise UsageError("--system both is only valid for verify-claims")
        return None
    if name == "nose-hoover":
        return SystemParams.nose_hoover(values.get("Q", 1.0))
    if name == "moore-spiegel":
        return SystemParams.moore_spiegel(values.get("T", 27.0), values.get("R", 100.0))
    if name == "hopf":
        return SystemParams.hopf(values.get("mu", 1.0), values.get("omega", 1.0))
    if name == "custom":
        if "field_file" in values:
            source = _read_field_file(values["field_file"])
        elif "field_source" in values:
            source = values["field_source"]
        else:
            raise UsageError("--system custom needs --field-file")
        params = {}
        for item in values.get("param") or []:
            key, sep, val = str(item).partition("=")
            if not sep:
                raise UsageError("--param expects NAME=VALUE")
            try:
                params[key.strip()] = float(val)
            except ValueError as exc:
                raise UsageError(f"--param {key}: not a number") from exc
        return SystemParams.custom_field(source, **params)
    raise UsageError(f"unknown system {name!r}")


def _read_field_file(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read field file: {exc}") from exc


def _integrator_from(values: dict) -> IntegratorConfig:
    d = {}
    for key, attr in (("tol_rel", "rel_tol"), ("tol_abs", "abs_tol"), ("max_step", "max_step"),
                      ("t_max", "t_max"), ("escape_radius", "escape_radius")):
        if key in values:
            d[attr] = values[key]
    return IntegratorConfig(**d)


# --------------------------------------------------------------------------- commands


def _emit(rc: RunConfig, payload, csv_text: str | None = None, extra_files: dict | None = None):
    """Write the main artifact (CSV when requested and available, else JSON)."""
    text = csv_text if (rc.format == "csv" and csv_text is not None) else to_json(payload)
    if rc.out:
        out = Path(rc.out)
        write_atomic(out, text)
        for suffix, content in (extra_files or {}).items():
            write_atomic(out.with_suffix(suffix), content)
    else:
        sys.stdout.write(text)


def _opt(values, key, default):
    return values.get(key, default)


def cmd_simulate(values, rc):
    params, cfg = rc.params(), rc.cfg()
    if "init" not in values:
        raise UsageError("simulate needs --init x,y,z")
    s0 = _vector(values["init"], 3, "init")
    t_end = float(_opt(values, "t_end", 200.0))
    reverse = bool(_opt(values, "reverse", False))
    rc.options.update(init=s0.tolist(), t=t_end, reverse=reverse)
    traj = integrate(params, s0, (0.0, t_end), cfg, reverse=reverse)
    extra = {"config": rc.to_dict()}
    if _opt(values, "classify", False):
        extra["classification"] = classify_fate(params, s0, cfg).to_dict()
    meta = trajectory_meta(traj, extra)
    payload = {"meta": meta, "t": traj.t, "states": traj.states}
    _emit(rc, payload, trajectory_csv(traj), {".meta.json": to_json(meta)} if rc.format == "csv" else None)


def cmd_field_eval(values, rc):
    params = rc.params()
    s = _vector(values.get("state", "0,0,0"), 3, "state")
    rc.options.update(state=s.tolist())
    out = {"config": rc.to_dict(), "state": s, "field": eval_field(params, s),
           "jacobian": eval_jacobian(params, s)}
    if abs(s[1]) <= 1e-12:
        out["section_normal_component"] = section_normal_component(params, s)
    _emit(rc, out)


def cmd_section_map(values, rc):
    params, cfg = rc.params(), rc.cfg()
    spec = SectionSpec.for_system(params)
    if "points" in values:
        pts = _point_list(values["points"], "points")
        rc.options.update(points=[list(p) for p in pts])
        _emit(rc, {"config": rc.to_dict(), "section": spec.to_dict(),
                   "records": sample_return_map(params, pts, spec, cfg)})
        return
    if "init" not in values:
        raise UsageError("section-map needs --points or --init")
    s0 = _vector(values["init"], 3, "init")
    t_end = float(_opt(values, "t_end", 200.0))
    rc.options.update(init=s0.tolist(), t=t_end)
    traj = integrate(params, s0, (0.0, t_end), cfg)
    cr = detect_crossings(traj, spec)
    _emit(rc, {"config": rc.to_dict(), "section": spec.to_dict(), "crossings": cr}, section_csv(cr))


def _orbit_from(values, rc):
    params, cfg = rc.params(), rc.cfg()
    spec = SectionSpec.for_system(params)
    n = int(_opt(values, "n_return", 1))
    if "guess" in values:
        g = _vector(values["guess"], 2, "guess")
        rc.options.update(guess=g.tolist(), n_return=n)
        return find_periodic_orbit(params, section_point(params, g[0], g[1], 0.0, spec), spec, n, cfg)
    if "init" not in values:
        raise UsageError("give --guess x,z or --init x,y,z")
    s0 = _vector(values["init"], 3, "init")
    t_end = float(_opt(values, "t_end", 300.0))
    radius = float(_opt(values, "radius", 1.0))
    max_n = int(_opt(values, "max_n", 4))
    rc.options.update(init=s0.tolist(), t=t_end, radius=radius, max_n=max_n)
    traj = integrate(params, s0, (0.0, t_end), cfg)
    cands = recurrence_scan(params, traj, spec, radius, max_n)
    last = None
    for cand in cands[:10]:
        try:
            return find_periodic_orbit(params, cand.point, spec, cand.n_return, cfg)
        except OscitopoError as exc:
            last = exc
    if last is not None:
        raise last
    raise PreconditionError("recurrence scan found no candidates; increase --radius or --t")


def cmd_find_orbit(values, rc):
    orbit = _orbit_from(values, rc)
    payload = orbit.to_dict()
    payload["config"] = rc.to_dict()
    _emit(rc, payload)


def cmd_classify_orbit(values, rc):
    orbit = _orbit_from(values, rc)
    braid = extract_braid(orbit, cfg=rc.cfg())
    _emit(rc, {"config": rc.to_dict(), "orbit": orbit.to_dict(), "braid": braid.to_dict()})


def cmd_index(values, rc, index_rule=analytic_index):
    params = rc.params()
    p = _vector(values.get("point", "0,0,0"), 3, "point")
    rc.options.update(point=p.tolist())
    _emit(rc, {"config": rc.to_dict(), "point": p, "index": index_rule(params, p)})


def cmd_degree(values, rc):
    params = rc.params()
    c = _vector(values.get("center", "0,0,0"), 3, "center")
    if "radius" not in values:
        raise UsageError("degree needs --radius")
    sub = int(_opt(values, "subdivision", 5))
    rc.options.update(center=c.tolist(), radius=float(values["radius"]), subdivision=sub)
    res = numerical_degree(params, c, float(values["radius"]), sub)
    payload = res.to_dict()
    payload["config"] = rc.to_dict()
    _emit(rc, payload)


def cmd_avoidance(values, rc):
    params = rc.params()
    c = _vector(values.get("center", "0,0,0"), 3, "center")
    d = _vector(values.get("direction", "0,0,1"), 3, "direction")
    if "radius" not in values:
        raise UsageError("avoidance needs --radius")
    samples = int(_opt(values, "samples", 100_000))
    seed = values.get("seed")
    rc.options.update(center=c.tolist(), direction=d.tolist(), radius=float(values["radius"]),
                      samples=samples, seed=seed)
    ang = direction_avoidance(params, float(values["radius"]), d, samples, c, seed)
    _emit(rc, {"config": rc.to_dict(), "min_angle": ang})


def cmd_spectrum(values, rc):
    params = rc.params()
    if _opt(values, "list_fixed", False):
        rc.options.update(list_fixed=True)
        fps = fixed_points(params)
        _emit(rc, {"config": rc.to_dict(),
                   "fixed_points": [{"point": p, "spectrum": sc.to_dict()} for p, sc in fps]})
        return
    p = _vector(values.get("point", "0,0,0"), 3, "point")
    rc.options.update(point=p.tolist())
    _emit(rc, {"config": rc.to_dict(), "point": p, "spectrum": classify_spectrum(params, p).to_dict()})


def cmd_manifold(values, rc):
    params, cfg = rc.params(), rc.cfg()
    eps = float(_opt(values, "epsilon", 1e-6))
    target = float(_opt(values, "reached_norm", 100.0))
    rc.options.update(epsilon=eps, reached_norm=target)
    branches = trace_stable_manifold(params, eps, cfg, target)
    out = []
    for b in branches:
        d = b.to_dict()
        if _opt(values, "polyline", False):
            d["polyline"] = b.polyline
            d["arclength"] = b.arclength
        out.append(d)
    _emit(rc, {"config": rc.to_dict(), "branches": out})


def cmd_sweep_exit(values, rc):
    params, cfg = rc.params(), rc.cfg()
    arc = values.get("arc", "l1")
    if "s_values" not in values:
        raise UsageError("sweep-exit needs --s")
    s_values = _number_list(values["s_values"], "s")
    rc.options.update(arc=arc, s=s_values)
    curve = exit_time_sweep(params, arc, s_values, cfg)
    payload = curve.to_dict()
    payload["config"] = rc.to_dict()
    _emit(rc, payload, sweep_csv(curve))


def cmd_verify_claims(values, rc):
    if _opt(values, "list_claims", False):
        sys.stdout.write("\n".join(f"{c.claim_id}\t{c.group}\t{c.anchor}" for c in claims_mod.CLAIMS) + "\n")
        return 0
    name = values.get("system", "both")
    systems = ("nose-hoover", "moore-spiegel") if name == "both" else (name,)
    if not set(systems) <= {"nose-hoover", "moore-spiegel"}:
        raise UsageError("verify-claims runs on nose-hoover, moore-spiegel or both")
    kw = {}
    if name == "nose-hoover" and "Q" in values:
        kw["nh_Q"] = (float(values["Q"]),)
    if name == "moore-spiegel" and ("T" in values or "R" in values):
        kw["ms_TR"] = ((float(values.get("T", 27.0)), float(values.get("R", 100.0))),)
    suite = claims_mod.SuiteConfig(integrator=rc.cfg(), systems=systems, **kw)
    only = None
    if values.get("only"):
        only = {s.strip() for s in str(values["only"]).split(",") if s.strip()}
        unknown = only - set(claims_mod.claim_ids())
        if unknown:
            raise UsageError(f"unknown claim ids: {', '.join(sorted(unknown))}")
    rule = analytic_index
    mutate = values.get("mutate")
    if mutate == "flip-index-sign":
        rule = claims_mod.flipped_index_rule
    rc.options.update(only=sorted(only) if only else None, mutate=mutate, systems=list(systems))
    report = claims_mod.run_verification_suite(suite, only=only, index_rule=rule)
    payload = report.to_dict()
    payload["suite"] = payload.pop("config")
    payload["config"] = rc.to_dict()
    _emit(rc, payload)
    for e in report.entries:
        sys.stderr.write(f"{e.status.value:8s} {e.claim_id}\n")
    return 0 if report.ok else 1


def cmd_parse_field(values, rc):
    if "field_file" not in values:
        raise UsageError("parse-field needs --field-file")
    definition = parse_field(_read_field_file(values["field_file"]))
    _emit(rc, {
        "components": {n: format_expression(c) for n, c in zip(("xdot", "ydot", "zdot"), definition.components)},
        "parameters": list(definition.parameters),
        "defaults": dict(definition.defaults),
        "valid": True,
    })


COMMANDS = {
    "simulate": cmd_simulate,
    "field-eval": cmd_field_eval,
    "section-map": cmd_section_map,
    "find-orbit": cmd_find_orbit,
    "classify-orbit": cmd_classify_orbit,
    "index": cmd_index,
    "degree": cmd_degree,
    "avoidance": cmd_avoidance,
    "spectrum": cmd_spectrum,
    "manifold": cmd_manifold,
    "sweep-exit": cmd_sweep_exit,
    "verify-claims": cmd_verify_claims,
    "parse-field": cmd_parse_field,
}


def _error_report(kind: str, exc: Exception, status: int) -> int:
    report = {"error": type(exc).__name__, "kind": kind, "message": str(exc)}
    best = getattr(exc, "best_residual", None)
    if best is not None:
        report["best_residual"] = best
    sys.stderr.write(to_json(report))
    return status


def run_command(argv=None) -> int:
    """Run one command; returns the process exit status."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    command = ns.command
    try:
        values = _resolve(ns)
        values.pop("command", None)
        if command == "verify-claims":
            values.setdefault("system", "both")
            params_dict = None
        elif command == "parse-field":
            params_dict = None
        else:
            params_dict = _system_from(values).to_dict()
        rc = RunConfig(command, params_dict, _integrator_from(values).to_dict(), {},
                       values.get("out"), values.get("format", "json"))
        status = COMMANDS[command](values, rc)
        return int(status or 0)
    except (UsageError, ParseError, DomainError, PreconditionError, BraidInputError) as exc:
        return _error_report("input", exc, 2)
    except OscitopoError as exc:
        return _error_report("numerical", exc, 1)


def main(argv=None) -> None:
    sys.exit(run_command(argv))
