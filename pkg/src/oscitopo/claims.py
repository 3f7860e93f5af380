"""End-to-end verification of the computable properties of both oscillators.

Each claim runs one property check at a fixed tolerance and records what was
measured. A failing or crashing claim never stops the suite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import OscitopoError, SearchFailure
from .fields import (
    SystemParams,
    fixed_points,
    radial_asymptotic_coefficient,
    radial_component,
)
from .ode import IntegratorConfig, integrate
from .orbits import (
    crossing_counts,
    exit_time_sweep,
    find_periodic_orbit,
    recurrence_scan,
    trace_stable_manifold,
)
from .section import CrossingKind, SectionSpec, detect_crossings, section_point
from .topo.braid import Verdict, braid_from_crossings, extract_braid, trefoil_fixture
from .topo.degree import analytic_index, direction_avoidance, numerical_degree
from .topo.spectrum import SpectrumType, classify_spectrum


class Status(str, enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"
    SKIPPED = "Skipped"


@dataclass(frozen=True)
class SuiteConfig:
    nh_Q: tuple = (0.1, 1.0, 10.0)
    ms_TR: tuple = ((27.0, 100.0), (39.25, 100.0))
    subdivision: int = 5
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    systems: tuple = ("nose-hoover", "moore-spiegel")
    avoidance_samples: int = 100_000

    def to_dict(self) -> dict:
        return {
            "nh_Q": list(self.nh_Q),
            "ms_TR": [list(p) for p in self.ms_TR],
            "subdivision": self.subdivision,
            "integrator": self.integrator.to_dict(),
            "systems": list(self.systems),
            "avoidance_samples": self.avoidance_samples,
        }


@dataclass(frozen=True)
class ClaimResult:
    claim_id: str
    criterion: int
    group: str
    anchor: str
    status: Status
    measured: dict
    tolerances: dict
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "criterion": self.criterion,
            "group": self.group,
            "anchor": self.anchor,
            "status": self.status.value,
            "measured": self.measured,
            "tolerances": self.tolerances,
            "note": self.note,
        }


@dataclass(frozen=True)
class ClaimReport:
    config: dict
    entries: tuple

    @property
    def ok(self) -> bool:
        return all(e.status is not Status.FAIL for e in self.entries)

    def by_id(self, claim_id: str) -> ClaimResult:
        return next(e for e in self.entries if e.claim_id == claim_id)

    def to_dict(self) -> dict:
        counts = {s.value: sum(e.status is s for e in self.entries) for s in Status}
        return {
            "config": self.config,
            "claims": [e.to_dict() for e in self.entries],
            "counts": counts,
            "overall": "Pass" if self.ok else "Fail",
        }


@dataclass(frozen=True)
class Claim:
    claim_id: str
    criterion: int
    group: str
    systems: tuple  # subset of ("nose-hoover", "moore-spiegel"); empty = always run
    anchor: str
    check: Callable


class _Context:
    """Per-run cache so expensive objects (orbits) are shared between claims."""

    def __init__(self, cfg: SuiteConfig, index_rule):
        self.cfg = cfg
        self.index_rule = index_rule
        self.cache: dict = {}

    def memo(self, key, fn):
        if key not in self.cache:
            self.cache[key] = fn()
        return self.cache[key]


def _nh(Q):
    return SystemParams.nose_hoover(Q)


def _ms(T, R):
    return SystemParams.moore_spiegel(T, R)


def _label(params: SystemParams) -> str:
    return params.label()


BOX = ((-20.0, 20.0),) * 3


# --------------------------------------------------------------------------- checks


def _census_nh(ctx):
    counts = {_label(_nh(Q)): len(fixed_points(_nh(Q), BOX)) for Q in ctx.cfg.nh_Q}
    return all(v == 0 for v in counts.values()), {"fixed_point_counts": counts}, {"expected_count": 0}


def _census_ms(ctx):
    found = {}
    ok = True
    for T, R in ctx.cfg.ms_TR:
        pts = [p for p, _ in fixed_points(_ms(T, R), BOX)]
        found[_label(_ms(T, R))] = [list(p) for p in pts]
        ok &= len(pts) == 1 and float(np.linalg.norm(pts[0])) < 1e-12
    return ok, {"fixed_points": found}, {"expected": "origin only", "origin_tol": 1e-12}


def _invariant_line(ctx):
    traj = integrate(_nh(1.0), np.array([0.0, 0.0, 5.0]), (0.0, 10.0), ctx.cfg.integrator)
    t = np.union1d(traj.t, np.linspace(0.0, 10.0, 2001))
    s = traj(t)
    xy = float(np.abs(s[:, :2]).max())
    dz = float(np.abs(s[:, 2] - (5.0 - t)).max())
    return xy < 1e-9 and dz < 1e-8, {"max_abs_xy": xy, "max_z_error": dz}, {"xy": 1e-9, "z": 1e-8}


def _radial_error(params, r):
    theta = np.linspace(0.0, math.pi, 64)
    psi = np.linspace(0.0, 2 * math.pi, 128, endpoint=False)
    TH, PS = np.meshgrid(theta, psi, indexing="ij")
    coef, order = radial_asymptotic_coefficient(params, (TH, PS))
    value = radial_component(params, r, (TH, PS)) / r**order
    scale = float(np.abs(coef).max())
    mask = np.abs(coef) > 0.1 * scale
    return float(np.abs(value - coef)[mask].max() / scale), order


def _radial_nh(ctx):
    errs = {}
    for Q in (0.1, 1.0):
        err, order = _radial_error(_nh(Q), 1e4)
        errs[_label(_nh(Q))] = {"masked_relative_error": err, "order": order}
    ok = all(v["masked_relative_error"] < 0.01 for v in errs.values())
    return ok, errs, {"relative_error": 0.01, "r": 1e4}


def _radial_ms(ctx):
    err, order = _radial_error(_ms(27.0, 100.0), 1e3)
    return err < 0.01, {"masked_relative_error": err, "order": order}, {"relative_error": 0.01, "r": 1e3}


def _index_origin(ctx):
    got = {_label(_ms(T, R)): ctx.index_rule(_ms(T, R), np.zeros(3)) for T, R in ctx.cfg.ms_TR}
    return all(v == -1 for v in got.values()), {"index": got}, {"expected": -1}


def _index_sign_sweep(ctx):
    got = {}
    ok = True
    for T in (1.0, -1.0, 27.0, -27.0, 100.0, -100.0):
        idx = ctx.index_rule(_ms(T, 100.0), np.zeros(3))
        got[_label(_ms(T, 100.0))] = idx
        ok &= idx == -int(np.sign(T))
    return ok, {"index": got}, {"expected": "-sign(T)"}


def _degree(ctx, params, radius):
    key = ("degree", params, radius, ctx.index_rule)
    return ctx.memo(key, lambda: numerical_degree(params, np.zeros(3), radius, ctx.cfg.subdivision,
                                                  index_rule=ctx.index_rule))


def _degree_check(ctx, systems, radius, expected):
    measured = {}
    ok = True
    for params in systems:
        res = _degree(ctx, params, radius)
        measured[_label(params)] = {"raw_degree": res.raw_degree, "degree": res.numerical_degree}
        ok &= res.numerical_degree == expected and abs(res.raw_degree - expected) < 0.1
    return ok, measured, {"expected_degree": expected, "raw_guard": 0.1, "radius": radius}


def _degree_small_ms(ctx):
    return _degree_check(ctx, [_ms(T, R) for T, R in ctx.cfg.ms_TR], 1e-2, -1)


def _degree_large_ms(ctx):
    return _degree_check(ctx, [_ms(T, R) for T, R in ctx.cfg.ms_TR], 50.0, -1)


def _degree_large_nh(ctx):
    return _degree_check(ctx, [_nh(Q) for Q in ctx.cfg.nh_Q], 50.0, 0)


def _avoidance_nh(ctx):
    measured = {}
    ok = True
    for Q in ctx.cfg.nh_Q:
        ang = direction_avoidance(_nh(Q), 50.0, (0.0, 0.0, 1.0), ctx.cfg.avoidance_samples)
        deg = _degree(ctx, _nh(Q), 50.0).numerical_degree
        measured[_label(_nh(Q))] = {"min_angle": ang, "degree": deg}
        ok &= ang > 0 and deg == 0
    return ok, measured, {"min_angle": "> 0", "samples": ctx.cfg.avoidance_samples}


def _poincare_hopf(ctx, systems):
    measured = {}
    ok = True
    for params in systems:
        res = _degree(ctx, params, 50.0)
        measured[_label(params)] = {
            "degree": res.numerical_degree,
            "index_sum": res.analytic_index,
            "enclosed": len(res.enclosed),
        }
        ok &= res.agreement is True
    return ok, measured, {"agreement": "degree equals index sum"}


def _poincare_hopf_ms(ctx):
    return _poincare_hopf(ctx, [_ms(T, R) for T, R in ctx.cfg.ms_TR])


def _poincare_hopf_nh(ctx):
    return _poincare_hopf(ctx, [_nh(Q) for Q in ctx.cfg.nh_Q])


def _routh_hurwitz(ctx):
    grid = np.linspace(1.0, 100.0, 10)
    exact = True
    unstable = True
    not_sink = True
    min_max_re = math.inf
    for T in grid:
        for R in grid:
            sc = classify_spectrum(_ms(T, R), np.zeros(3))
            exact &= sc.rh_triple == (1.0, -float(R), float(T))
            min_max_re = min(min_max_re, sc.max_real_part)
            unstable &= sc.max_real_part > 0
            not_sink &= sc.cls is not SpectrumType.SINK
    angle = classify_spectrum(_ms(27.0, 100.0), np.zeros(3)).unstable_plane_section_angle
    ok = exact and unstable and not_sink and angle is not None and angle > 1e-3
    measured = {
        "rh_triple_exact": exact,
        "min_over_grid_of_max_real_part": min_max_re,
        "never_sink": not_sink,
        "unstable_plane_section_angle": angle,
    }
    return ok, measured, {"angle": 1e-3, "grid": "10x10 over [1, 100]^2"}


def _section_structure(ctx):
    params = _nh(1.0)
    traj = integrate(params, np.array([1.0, 0.0, 0.0]), (0.0, 200.0), ctx.cfg.integrator)
    cr = detect_crossings(traj, SectionSpec.for_system(params))
    ups = [c for c in cr if c.kind is CrossingKind.UP]
    kinds = [c.kind for c in cr if c.kind is not CrossingKind.TANGENT]
    alternating = all(a is not b for a, b in zip(kinds, kinds[1:]))
    max_up_x = max((c.x for c in ups), default=math.nan)
    min_speed = min((c.speed for c in cr), default=math.nan)
    ok = len(ups) >= 10 and max_up_x < 0 and alternating and min_speed > 1e-6
    measured = {"up_crossings": len(ups), "max_up_x": max_up_x, "alternating": alternating,
                "min_speed": min_speed}
    return ok, measured, {"min_up_crossings": 10, "min_speed": 1e-6}


def _hopf_orbit(ctx):
    def build():
        params = SystemParams.hopf(1.0, 1.0)
        spec = SectionSpec.for_system(params)
        return find_periodic_orbit(params, section_point(params, 1.2, 0.3, 0.0, spec), spec, 1,
                                   ctx.cfg.integrator)

    return ctx.memo("hopf-orbit", build)


def _orbit_oracle(ctx):
    orbit = _hopf_orbit(ctx)
    w, V = np.linalg.eig(orbit.monodromy)
    radial = complex(w[int(np.argmax(np.abs(V[0, :])))])
    braid = extract_braid(orbit, cfg=ctx.cfg.integrator)
    dper = abs(orbit.period - 2 * math.pi)
    dmul = abs(radial - math.exp(-4 * math.pi))
    ok = dper < 1e-8 and dmul < 1e-6 and orbit.residual < 1e-9 and braid.verdict is Verdict.CERTIFIED_UNKNOT
    measured = {"period_error": dper, "radial_multiplier": radial, "multiplier_error": dmul,
                "residual": orbit.residual, "verdict": braid.verdict.value}
    return ok, measured, {"period": 1e-8, "multiplier": 1e-6, "residual": 1e-9}


def _search_orbits(params, s0, t_span, radius, max_n, n_try, cfg):
    """Distinct converged orbits from recurrence seeds, plus the best failure residual."""
    spec = SectionSpec.for_system(params)
    traj = integrate(params, np.asarray(s0, dtype=float), t_span, cfg)
    cands = recurrence_scan(params, traj, spec, radius, max_n)
    orbits, best_fail = [], math.inf
    for cand in cands[:n_try]:
        try:
            orbit = find_periodic_orbit(params, cand.point, spec, cand.n_return, cfg)
        except SearchFailure as exc:
            best_fail = min(best_fail, exc.best_residual)
            continue
        except OscitopoError:
            continue
        if not any(_same_orbit(orbit, o) for o in orbits):
            orbits.append(orbit)
    return orbits, len(cands), best_fail


def _same_orbit(a, b) -> bool:
    if a.n_strands != b.n_strands or abs(a.period - b.period) > 1e-6 * max(1.0, a.period):
        return False
    return any(math.hypot(p.x - a.start.x, p.z - a.start.z) < 1e-6 for p in b.section_points)


def _ms_orbits(ctx):
    return ctx.memo("ms-orbits", lambda: _search_orbits(
        _ms(27.0, 100.0), (0.1, 0.0, 0.0), (0.0, 300.0), 2.0, 3, 6, ctx.cfg.integrator))


def _nh_orbits(ctx):
    return ctx.memo("nh-orbits", lambda: _search_orbits(
        _nh(1.0), (0.0, 5.0, 0.0), (0.0, 1000.0), 0.05, 4, 3, ctx.cfg.integrator))


def _multiplier_law(ctx):
    orbits, n_cands, best_fail = _ms_orbits(ctx)
    if not orbits:
        return None, {"candidates": n_cands, "best_residual": best_fail}, {"relative": 1e-5}
    errs = []
    for o in orbits:
        e = math.exp(-o.period)
        m1, m2 = o.multipliers
        errs.append(abs(m1 * m2 - e) / e)
    measured = {
        "orbits": [{"period": o.period, "n_strands": o.n_strands, "residual": o.residual,
                    "multipliers": list(o.multipliers), "relative_error": err}
                   for o, err in zip(orbits, errs)],
        "candidates": n_cands,
    }
    return all(err < 1e-5 for err in errs), measured, {"relative": 1e-5}


def _braid_structure(ctx):
    ms_orbits, _, _ = _ms_orbits(ctx)
    nh_orbits, _, _ = _nh_orbits(ctx)
    records = []
    ok = True
    for orbit in list(ms_orbits) + list(nh_orbits) + [_hopf_orbit(ctx)]:
        up, down = crossing_counts(orbit, ctx.cfg.integrator)
        braid = extract_braid(orbit, cfg=ctx.cfg.integrator)
        good = up == down == orbit.n_strands
        if orbit.n_strands == 1:
            good &= braid.verdict is Verdict.CERTIFIED_UNKNOT
        ok &= good
        records.append({"system": orbit.params.label(), "n_strands": orbit.n_strands, "up": up,
                        "down": down, "verdict": braid.verdict.value,
                        "alexander": str(braid.alexander)})
    tre = braid_from_crossings(*trefoil_fixture())
    tre_ok = tre.alexander.coeffs == (1, -1, 1) and tre.verdict is Verdict.NOT_UNKNOT
    ok &= tre_ok
    measured = {"orbits": records, "trefoil_alexander": str(tre.alexander),
                "trefoil_verdict": tre.verdict.value,
                "systems_with_orbits": sorted({r["system"] for r in records})}
    return ok, measured, {"trefoil": "t^2 - t + 1"}


def _manifold(ctx):
    d1, d2 = trace_stable_manifold(_ms(27.0, 100.0), 1e-6, ctx.cfg.integrator)
    reflect = math.inf
    if len(d1.times) == len(d2.times) and np.array_equal(d1.times, d2.times):
        reflect = float(np.abs(d1.polyline + d2.polyline).max())
    else:
        t = np.linspace(0.0, min(d1.times[-1], d2.times[-1]), 2001)
        reflect = float(np.abs(d1.traj.state_at(t) + d2.traj.state_at(t)).max())
    ok = d1.reached and d2.reached and d1.contained and d2.contained and reflect < 1e-6
    measured = {"delta1_reached_norm": d1.reached_norm, "delta2_reached_norm": d2.reached_norm,
                "delta1_violations": len(d1.violations), "delta2_violations": len(d2.violations),
                "reflection_error": reflect}
    return ok, measured, {"target_norm": 100.0, "containment": 1e-9, "reflection": 1e-6}


def _exit_sweep(ctx):
    curve = exit_time_sweep(_ms(27.0, 100.0), "l1", (0.1, 0.5, 1.0, 2.0, 5.0), ctx.cfg.integrator)
    ok = True
    recs = []
    for r in curve.records:
        on_surface = None
        if r.exit_state is not None:
            on_surface = abs(r.exit_state[0] if r.exit_surface.value == "H1" else r.exit_state[1])
        good = (r.t_exit is not None and r.exit_surface.value in ("H1", "U") and not r.violations
                and on_surface < 1e-8)
        ok &= good
        recs.append({"s": r.s, "t_exit": r.t_exit, "exit_surface": r.exit_surface.value,
                     "violations": len(r.violations), "surface_distance": on_surface})
    return ok, {"records": recs}, {"containment": 1e-9, "on_surface": 1e-8}


NH, MS = ("nose-hoover",), ("moore-spiegel",)
BOTH = NH + MS

CLAIMS = (
    Claim("census-nh", 1, "census", NH, "Nose-Hoover field has no zeros in the box [-20, 20]^3", _census_nh),
    Claim("census-ms", 1, "census", MS, "Moore-Spiegel field vanishes only at the origin in [-20, 20]^3",
          _census_ms),
    Claim("invariant-line", 2, "flow", NH, "z-axis is a Nose-Hoover flow line with z' = -1/Q", _invariant_line),
    Claim("radial-asymptotics-nh", 3, "asymptotics", NH,
          "Nose-Hoover radial component approaches its leading homogeneous term", _radial_nh),
    Claim("radial-asymptotics-ms", 3, "asymptotics", MS,
          "Moore-Spiegel radial component approaches its leading homogeneous term", _radial_ms),
    Claim("index-origin", 4, "index", MS, "Moore-Spiegel origin has index -1 for T > 0 (Jacobian sign rule)",
          _index_origin),
    Claim("index-sign-sweep", 4, "index", MS, "Moore-Spiegel origin index equals -sign(T)", _index_sign_sweep),
    Claim("degree-small-ms", 4, "degree", MS, "degree on a small sphere about the Moore-Spiegel origin is -1",
          _degree_small_ms),
    Claim("degree-large-ms", 4, "degree", MS, "Moore-Spiegel degree on the radius-50 sphere is -1",
          _degree_large_ms),
    Claim("degree-large-nh", 4, "degree", NH, "Nose-Hoover degree on the radius-50 sphere is 0",
          _degree_large_nh),
    Claim("avoidance-nh", 4, "degree", NH, "Nose-Hoover field never points along +z on the radius-50 sphere",
          _avoidance_nh),
    Claim("poincare-hopf-ms", 5, "index", MS, "large-sphere degree equals the sum of enclosed indices",
          _poincare_hopf_ms),
    Claim("poincare-hopf-nh", 5, "degree", NH, "large-sphere degree equals the (empty) index sum",
          _poincare_hopf_nh),
    Claim("routh-hurwitz", 6, "spectrum", MS,
          "characteristic triple is (1, -R, T); origin is never a sink; unstable plane is transverse to y = 0",
          _routh_hurwitz),
    Claim("section-structure", 7, "section", NH,
          "Nose-Hoover Up crossings lie in x < 0, alternate with Down crossings and are transverse",
          _section_structure),
    Claim("orbit-oracle", 8, "orbits", (), "limit cycle of the validation field is recovered exactly",
          _orbit_oracle),
    Claim("multiplier-law", 9, "orbits", MS, "Moore-Spiegel multiplier product equals exp(-period)",
          _multiplier_law),
    Claim("braid-structure", 10, "braids", BOTH,
          "Up and Down strand counts agree; period-1 orbits are unknots; trefoil fixture is detected",
          _braid_structure),
    Claim("stable-manifold", 11, "manifold", MS,
          "stable manifold branches of the origin stay in their quadrants out to norm 100", _manifold),
    Claim("exit-sweep", 11, "manifold", MS, "orbits from the positive x-axis exit their quadrant in finite time",
          _exit_sweep),
)


def claim_ids() -> tuple:
    return tuple(c.claim_id for c in CLAIMS)


def run_verification_suite(
    config: SuiteConfig | None = None,
    only=None,
    index_rule=analytic_index,
) -> ClaimReport:
    """Run every selected claim and collect a :class:`ClaimReport`.

    ``only`` restricts the run to the given claim ids. ``index_rule`` replaces
    the fixed-point index rule (used for the negative-control mutation).
    Claims for systems not in ``config.systems`` are skipped entirely.
    """
    cfg = config or SuiteConfig()
    if only is not None:
        unknown = set(only) - set(claim_ids())
        if unknown:
            raise ValueError(f"unknown claim ids: {', '.join(sorted(unknown))}")
    ctx = _Context(cfg, index_rule)
    entries = []
    for claim in CLAIMS:
        if only is not None and claim.claim_id not in only:
            continue
        if claim.systems and not set(claim.systems) & set(cfg.systems):
            continue
        try:
            ok, measured, tol = claim.check(ctx)
            status = Status.SKIPPED if ok is None else (Status.PASS if ok else Status.FAIL)
            note = "no orbit converged from the recurrence seeds" if ok is None else ""
        except OSError as exc:
            status, measured, tol, note = Status.SKIPPED, {}, {}, f"environment: {exc}"
        except Exception as exc:  # a crashing check is a failed claim, not an aborted suite
            status, measured, tol, note = Status.FAIL, {}, {}, f"{type(exc).__name__}: {exc}"
        entries.append(ClaimResult(claim.claim_id, claim.criterion, claim.group, claim.anchor, status,
                                   measured, tol, note))
    return ClaimReport(cfg.to_dict(), tuple(entries))


def flipped_index_rule(params, fp) -> int:
    """Negative-control mutation: the index rule with its sign reversed."""
    return -analytic_index(params, fp)
