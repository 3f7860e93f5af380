"""Periodic orbits, the one-dimensional stable manifold of the origin and exit-time sweeps."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DomainError,
    PreconditionError,
    ReturnFailure,
    SearchFailure,
    TangentEncounterError,
    UnsupportedOperationError,
)
from .fields import SystemKind, SystemParams, eval_jacobian, vector_field
from .ode import (
    Direction,
    IntegratorConfig,
    Trajectory,
    _INTERIOR_X,
    _locate,
    integrate,
    solve,
)
from .section import (
    CrossingKind,
    SectionPoint,
    SectionSpec,
    _check_start,
    _variational_return,
    detect_crossings,
    section_point,
)

RESIDUAL_TOL = 1e-9
CONTAINMENT_TOL = 1e-9


# --------------------------------------------------------------------------- periodic orbits


@dataclass(frozen=True)
class PeriodicOrbit:
    """A closed orbit through the admissible Up crossings ``section_points``.

    ``section_points[0]`` is the refined Newton point at time 0 and the rest
    are its successive returns. ``multipliers`` are the eigenvalues of
    ``monodromy``, the product of the per-return 2x2 Jacobians.
    """

    params: SystemParams
    spec: SectionSpec
    section_points: tuple
    period: float
    residual: float
    multipliers: tuple
    monodromy: np.ndarray = field(compare=False)
    iterations: int = 0

    @property
    def n_strands(self) -> int:
        return len(self.section_points)

    @property
    def start(self) -> SectionPoint:
        return self.section_points[0]

    def path(self, cfg: IntegratorConfig | None = None) -> Trajectory:
        """One period of the orbit integrated from the first section point."""
        cfg = cfg or IntegratorConfig()
        return integrate(self.params, self.start.array(), (0.0, self.period), cfg)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "section": self.spec.to_dict(),
            "section_points": [p.to_dict() for p in self.section_points],
            "period": self.period,
            "residual": self.residual,
            "multipliers": [[m.real, m.imag] for m in self.multipliers],
            "n_strands": self.n_strands,
        }


def _orbit_map(params, p, spec, n, cfg):
    """Chain ``n`` variational returns from ``p``: points and monodromy."""
    points = []
    M = np.eye(2)
    q = p
    for _ in range(n):
        q, J = _variational_return(params, q, spec, cfg)
        points.append(q)
        M = J @ M
    return points, M


def _residual(p, q) -> float:
    return float(np.hypot(q.x - p.x, q.z - p.z))


def find_periodic_orbit(
    params: SystemParams,
    guess: SectionPoint,
    spec: SectionSpec,
    n_return: int = 1,
    cfg: IntegratorConfig | None = None,
    max_iter: int = 50,
    max_halvings: int = 8,
    target: float = 1e-11,
) -> PeriodicOrbit:
    """Damped Newton iteration on ``g^n(p) - p`` over section coordinates (x, z).

    The iteration stops once the residual falls below ``target`` or stops
    improving; the orbit is accepted when its residual is below 1e-9. The
    result is reduced to its prime period.
    """
    cfg = cfg or IntegratorConfig()
    n = int(n_return)
    if n < 1:
        raise DomainError("n_return must be at least 1")
    p = _check_start(params, guess, spec)
    p = section_point(params, p.x, p.z, 0.0, spec)
    try:
        points, M = _orbit_map(params, p, spec, n, cfg)
    except ReturnFailure as exc:
        raise SearchFailure(f"guess has no {n}-th return ({exc.fate.tag.value})", np.inf, p) from exc
    res = _residual(p, points[-1])
    best = (res, p, points, M)
    it = 0
    while it < max_iter and res >= target:
        it += 1
        G = np.array([points[-1].x - p.x, points[-1].z - p.z])
        try:
            step = np.linalg.solve(M - np.eye(2), -G)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            trial = None
            try:
                tp = section_point(params, p.x + lam * step[0], p.z + lam * step[1], 0.0, spec)
                t_points, t_M = _orbit_map(params, tp, spec, n, cfg)
                trial = (_residual(tp, t_points[-1]), tp, t_points, t_M)
            except (ReturnFailure, TangentEncounterError, PreconditionError):
                trial = None
            if trial is not None and trial[0] < res:
                res, p, points, M = trial
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            break
        if res < best[0]:
            best = (res, p, points, M)
    res, p, points, M = best
    if not res < RESIDUAL_TOL:
        raise SearchFailure(f"Newton did not converge in {it} iterations", res, p)

    prime = _prime_period(p, points)
    if prime < n:
        return find_periodic_orbit(params, p, spec, prime, cfg, max_iter, max_halvings, target)
    mult = np.linalg.eigvals(M)
    mult = tuple(complex(m) for m in sorted(mult, key=lambda m: (-abs(m), m.imag)))
    sec = (p,) + tuple(points[:-1])
    return PeriodicOrbit(params, spec, sec, float(points[-1].t - p.t), res, mult, M, it)


def _prime_period(p, points, tol=1e-6) -> int:
    n = len(points)
    for k in range(1, n):
        if n % k == 0 and _residual(p, points[k - 1]) < tol:
            return k
    return n


def crossing_counts(orbit: PeriodicOrbit, cfg: IntegratorConfig | None = None) -> tuple:
    """Numbers of Up and Down crossings of y = 0 over one period."""
    kinds = [c.kind for c in orbit_crossings(orbit, cfg)]
    return kinds.count(CrossingKind.UP), kinds.count(CrossingKind.DOWN)


def orbit_crossings(orbit: PeriodicOrbit, cfg: IntegratorConfig | None = None, path=None) -> list:
    """Crossings over one period: the start point, then every crossing before
    the orbit closes (the closing crossing is the start point again)."""
    path = path or orbit.path(cfg)
    close_tol = 1e-7 * max(1.0, orbit.period)
    inner = [c for c in detect_crossings(path, orbit.spec) if c.t < orbit.period - close_tol]
    return [orbit.start] + inner


class RecurrenceCandidate(NamedTuple):
    point: SectionPoint
    n_return: int
    distance: float


def recurrence_scan(
    params: SystemParams,
    traj: Trajectory,
    spec: SectionSpec,
    radius: float,
    max_n: int = 6,
) -> list:
    """Near-returns ``|p_{i+n} - p_i| < radius`` among the admissible Up crossings.

    Returns :class:`RecurrenceCandidate` entries sorted by distance.
    """
    if not radius > 0:
        raise DomainError("radius must be positive")
    ups = [
        c for c in detect_crossings(traj, spec, params)
        if c.kind is CrossingKind.UP and spec.admissible(c.x, c.z)
    ]
    if not ups:
        return []
    xz = np.array([c.coords for c in ups])
    out = []
    for n in range(1, int(max_n) + 1):
        if len(ups) < n + 1:
            break
        d = np.hypot(*(xz[n:] - xz[:-n]).T)
        for i in np.nonzero(d < radius)[0]:
            out.append(RecurrenceCandidate(ups[i], n, float(d[i])))
    out.sort(key=lambda c: (c.distance, c.n_return, c.point.t))
    return out


# --------------------------------------------------------------------------- stable manifold


class Branch(str, enum.Enum):
    DELTA1 = "Delta1"
    DELTA2 = "Delta2"


@dataclass(frozen=True)
class ManifoldBranch:
    """A backward-time trace of one branch of the origin's stable manifold.

    ``arclength`` is measured along the curve from the origin (the seed
    segment counts as straight). ``violations`` lists ``(t, state)`` samples
    that leave the branch's closed quadrant by more than 1e-9.
    """

    which: Branch
    seed_offset: float
    polyline: np.ndarray
    times: np.ndarray
    arclength: np.ndarray
    reached_norm: float
    target_norm: float
    violations: tuple
    traj: Trajectory = field(compare=False, repr=False)

    @property
    def reached(self) -> bool:
        return self.reached_norm >= self.target_norm

    @property
    def contained(self) -> bool:
        return not self.violations

    def at_arclength(self, sigma) -> np.ndarray:
        """States at arclength(s) ``sigma`` from the origin, via the dense trace."""
        sig = np.atleast_1d(np.asarray(sigma, dtype=float))
        arc = self.traj.y[:, 3]
        if np.any(sig < arc[0]) or np.any(sig > arc[-1]):
            raise DomainError("arclength outside the traced range")
        out = np.empty((len(sig), 3))
        for k, sv in enumerate(sig):
            i = int(np.clip(np.searchsorted(arc, sv, side="right") - 1, 0, self.traj.n_steps - 1))
            if sv == arc[i]:
                out[k] = self.traj.y[i, :3]
                continue
            x = brentq(lambda u: self.traj.local(i, u)[3] - sv, 0.0, 1.0, xtol=1e-15)
            out[k] = self.traj.local(i, x)[:3]
        return out[0] if np.ndim(sigma) == 0 else out

    def to_dict(self) -> dict:
        return {
            "which": self.which.value,
            "seed_offset": self.seed_offset,
            "reached_norm": self.reached_norm,
            "target_norm": self.target_norm,
            "n_points": int(len(self.polyline)),
            "violations": [{"t": t, "state": list(s)} for t, s in self.violations],
        }


def stable_direction(params: SystemParams) -> tuple:
    """Negative real eigenvalue at the origin and its unit eigenvector with x > 0."""
    J = eval_jacobian(params, np.zeros(3))
    w, V = np.linalg.eig(J)
    real_neg = [i for i in range(3) if abs(w[i].imag) <= 1e-12 * max(1.0, abs(w[i])) and w[i].real < 0]
    if len(real_neg) != 1:
        raise DomainError(f"expected exactly one negative real eigenvalue, got {w}")
    i = real_neg[0]
    v = np.real(V[:, i])
    v = v / np.linalg.norm(v)
    if v[0] < 0:
        v = -v
    return float(w[i].real), v


def _quadrant_violations(traj, sign, tol=CONTAINMENT_TOL, t_stop=None) -> tuple:
    """Samples (plus interior points) leaving ``{sign*x >= 0, sign*y <= 0}``."""
    n = traj.n_steps
    if n == 0:
        pts_t, pts = traj.t, traj.y[:, :3]
    else:
        xs = np.array((0.0,) + _INTERIOR_X)
        steps = np.repeat(np.arange(n), len(xs))
        loc = np.tile(xs, n)
        pts = traj.local(steps, loc)[:, :3]
        pts_t = traj.t[steps] + loc * (traj.t[steps + 1] - traj.t[steps])
        pts = np.vstack([pts, traj.y[-1:, :3]])
        pts_t = np.append(pts_t, traj.t[-1])
    if t_stop is not None:
        keep = pts_t <= t_stop
        pts, pts_t = pts[keep], pts_t[keep]
    bad = (sign * pts[:, 0] < -tol) | (sign * pts[:, 1] > tol)
    return tuple((float(t), tuple(map(float, s))) for t, s in zip(pts_t[bad], pts[bad]))


def _require_ms(params, need_positive_T=True, need_positive_R=True):
    if params.kind is not SystemKind.MOORE_SPIEGEL:
        raise UnsupportedOperationError("only defined for the Moore-Spiegel oscillator")
    if need_positive_T and not params.T > 0:
        raise PreconditionError("requires T > 0")
    if need_positive_R and not params.R > 0:
        raise PreconditionError("requires R > 0")


def trace_stable_manifold(
    params: SystemParams,
    epsilon: float = 1e-6,
    cfg: IntegratorConfig | None = None,
    reached_norm: float = 100.0,
) -> tuple:
    """Both branches of the origin's one-dimensional stable manifold.

    Seeds at ``+-epsilon`` along the stable eigenvector and integrates the
    negated field, with arclength as an extra state component, until the norm
    reaches ``reached_norm`` or ``cfg.t_max`` elapses. Delta1 is the branch
    entering ``{x > 0, y < 0}``.
    """
    _require_ms(params)
    if not (1e-8 <= epsilon <= 1e-4):
        raise DomainError("epsilon must lie in [1e-8, 1e-4]")
    if not reached_norm > 0:
        raise DomainError("reached_norm must be positive")
    cfg = cfg or IntegratorConfig()
    run_cfg = cfg.replace(escape_radius=float(reached_norm))
    _, v = stable_direction(params)
    vf = vector_field(params)

    def fun(w):
        F = vf(w[:3])
        return np.append(-F, np.sqrt(F @ F))

    branches = []
    for which, sign in ((Branch.DELTA1, 1.0), (Branch.DELTA2, -1.0)):
        w0 = np.append(sign * epsilon * v, epsilon)
        (t, y, f, dense), _ = solve(fun, w0, (0.0, cfg.t_max), run_cfg)
        traj = Trajectory(t, y, f, dense, params, run_cfg, reverse=True)
        norms = np.linalg.norm(y[:, :3], axis=1)
        branches.append(
            ManifoldBranch(
                which=which,
                seed_offset=float(epsilon),
                polyline=y[:, :3].copy(),
                times=t.copy(),
                arclength=y[:, 3].copy(),
                reached_norm=float(norms.max()),
                target_norm=float(reached_norm),
                violations=_quadrant_violations(traj, sign),
                traj=traj,
            )
        )
    return tuple(branches)


# --------------------------------------------------------------------------- exit sweeps


class Arc(str, enum.Enum):
    L1 = "l1"  # positive x-axis, flows into {x > 0, y < 0}
    L2 = "l2"  # negative x-axis, flows into {x < 0, y > 0}


class ExitSurface(str, enum.Enum):
    H1 = "H1"
    U = "U"
    H2 = "H2"
    u = "u"
    NONE = "None"


@dataclass(frozen=True)
class SweepRecord:
    s: float
    t_exit: float | None
    exit_state: tuple | None
    exit_surface: ExitSurface
    violations: tuple = ()

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "t_exit": self.t_exit,
            "exit_surface": self.exit_surface.value,
            "exit_state": None if self.exit_state is None else list(self.exit_state),
            "violations": [{"t": t, "state": list(st)} for t, st in self.violations],
        }


@dataclass(frozen=True)
class SweepCurve:
    params: SystemParams
    arc: Arc
    records: tuple

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "arc": self.arc.value,
            "records": [r.to_dict() for r in self.records],
        }


def _x_event(s):
    return s[..., 0]


def _y_event(s):
    return s[..., 1]


_ARC_SURFACES = {
    # (event, direction, surface) pairs bounding the quadrant fed by each arc
    Arc.L1: ((_x_event, Direction.FALLING, ExitSurface.H1), (_y_event, Direction.RISING, ExitSurface.U)),
    Arc.L2: ((_x_event, Direction.RISING, ExitSurface.H2), (_y_event, Direction.FALLING, ExitSurface.u)),
}


def exit_time(params: SystemParams, arc, s: float, cfg: IntegratorConfig | None = None) -> SweepRecord:
    """First exit of the orbit of ``(s, 0, 0)`` from the quadrant its arc feeds."""
    cfg = cfg or IntegratorConfig()
    arc = Arc(arc)
    s = float(s)
    if not np.isfinite(s) or (arc is Arc.L1 and not s > 0) or (arc is Arc.L2 and not s < 0):
        raise PreconditionError(f"s={s!r} is not on arc {arc.value}")
    surfaces = _ARC_SURFACES[arc]
    traj = integrate(params, np.array([s, 0.0, 0.0]), (0.0, cfg.t_max), cfg,
                     terminal=[(ev, d) for ev, d, _ in surfaces])
    first = None
    for ev, d, name in surfaces:
        hits = _locate(traj, ev, d)
        if hits and (first is None or hits[0][0] < first[0]):
            first = (hits[0][0], hits[0][1], name)
    sign = 1.0 if arc is Arc.L1 else -1.0
    if first is None:
        return SweepRecord(s, None, None, ExitSurface.NONE, _quadrant_violations(traj, sign))
    t_exit, state, name = first
    return SweepRecord(
        s, float(t_exit), tuple(map(float, state)), name,
        _quadrant_violations(traj, sign, t_stop=t_exit),
    )


def exit_time_sweep(params: SystemParams, arc, s_values, cfg: IntegratorConfig | None = None) -> SweepCurve:
    """Exit records for each ``s`` in ``s_values``, in input order."""
    _require_ms(params, need_positive_R=False)
    arc = Arc(arc)
    return SweepCurve(params, arc, tuple(exit_time(params, arc, s, cfg) for s in s_values))
