"""Crossings of the plane y = 0 and the first-return map on it."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, PreconditionError, ReturnFailure, TangentEncounterError
from .fields import (
    SystemKind,
    SystemParams,
    jacobian_function,
    section_normal_component,
    vector_field,
)
from .ode import Direction, Fate, FateTag, IntegratorConfig, Trajectory, _locate, solve

TANGENCY_THRESHOLD = 1e-8
FD_STEP = 1e-6


class Region(str, enum.Enum):
    X1 = "X1"  # x < 0
    U = "U"  # z > 0
    FULL_PLANE = "FullPlane"


class CrossingKind(str, enum.Enum):
    UP = "Up"
    DOWN = "Down"
    TANGENT = "Tangent"


class JacobianMethod(str, enum.Enum):
    FINITE_DIFFERENCE = "FiniteDifference"
    VARIATIONAL = "Variational"


@dataclass(frozen=True)
class SectionSpec:
    """The section y = 0 restricted to an admissible region.

    Crossings are classified by the sign of the field's y-component, so an Up
    crossing enters the half-space where x is increasing.
    """

    region: Region = Region.FULL_PLANE
    tangency_threshold: float = TANGENCY_THRESHOLD

    def __post_init__(self):
        object.__setattr__(self, "region", Region(self.region))
        if not self.tangency_threshold > 0:
            raise DomainError("tangency threshold must be positive")

    @classmethod
    def for_system(cls, params: SystemParams) -> "SectionSpec":
        if params.kind is SystemKind.NOSE_HOOVER:
            return cls(Region.X1)
        if params.kind is SystemKind.MOORE_SPIEGEL:
            return cls(Region.U)
        return cls(Region.FULL_PLANE)

    def admissible(self, x: float, z: float) -> bool:
        if self.region is Region.X1:
            return x < 0
        if self.region is Region.U:
            return z > 0
        return True

    def to_dict(self) -> dict:
        return {"plane": "y=0", "region": self.region.value, "tangency_threshold": self.tangency_threshold}


@dataclass(frozen=True)
class SectionPoint:
    """A point of the plane y = 0 reached at time ``t``."""

    t: float
    state: tuple
    speed: float
    kind: CrossingKind
    threshold: float = TANGENCY_THRESHOLD

    @property
    def coords(self) -> tuple:
        return (self.state[0], self.state[2])

    @property
    def x(self) -> float:
        return self.state[0]

    @property
    def z(self) -> float:
        return self.state[2]

    def array(self) -> np.ndarray:
        return np.array(self.state, dtype=float)

    def to_dict(self) -> dict:
        return {"t": self.t, "x": self.x, "z": self.z, "speed": self.speed, "kind": self.kind.value}


def section_point(params: SystemParams, x: float, z: float, t: float = 0.0,
                  spec: SectionSpec | None = None) -> SectionPoint:
    """Classify the plane point ``(x, 0, z)``."""
    threshold = (spec or SectionSpec()).tangency_threshold
    x, z, t = float(x), float(z), float(t)
    if not all(np.isfinite((x, z, t))):
        raise DomainError("section coordinates must be finite")
    n = section_normal_component(params, np.array([x, 0.0, z]))
    if abs(n) < threshold:
        kind = CrossingKind.TANGENT
    else:
        kind = CrossingKind.UP if n > 0 else CrossingKind.DOWN
    return SectionPoint(t, (x, 0.0, z), abs(n), kind, threshold)


def _y_event(s):
    return s[..., 1]


def detect_crossings(traj: Trajectory, spec: SectionSpec, params: SystemParams | None = None) -> list:
    """All crossings of y = 0 along ``traj``, classified Up, Down or Tangent.

    ``params`` defaults to the trajectory's system; it determines the
    classification through the field's y-component on the plane.
    """
    params = params or traj.params
    if params is None:
        raise PreconditionError("no system given for classifying crossings")
    if traj.reverse:
        raise PreconditionError("crossings are classified on forward trajectories only")
    return [
        section_point(params, s[0], s[2], t, spec)
        for t, s, _, _ in _locate(traj, _y_event, Direction.ANY)
    ]


class _UpCounter:
    """Terminal-event filter: fires on the ``n``-th admissible rising crossing."""

    def __init__(self, spec: SectionSpec, n: int):
        self.spec = spec
        self.n = n
        self.count = 0

    def __call__(self, s) -> bool:
        if self.spec.admissible(s[0], s[2]):
            self.count += 1
        return self.count >= self.n


def _check_start(params: SystemParams, p: SectionPoint, spec: SectionSpec) -> SectionPoint:
    q = section_point(params, p.state[0], p.state[2], p.t, spec)
    if q.kind is not CrossingKind.UP:
        raise PreconditionError(f"return map needs a transverse Up crossing, got {q.kind.value}")
    if not spec.admissible(q.x, q.z):
        raise PreconditionError("start point is outside the admissible region")
    return q


@dataclass
class _Scan:
    points: list  # SectionPoints of the admissible Up returns, in order
    full_states: list  # full (possibly augmented) states at those returns
    traj: Trajectory
    fate: Fate | None


def _scan_returns(params, p, spec, cfg, n, variational=False) -> _Scan:
    vf = vector_field(params)
    if variational:
        jf = jacobian_function(params)

        def fun(w):
            s = w[:3]
            return np.concatenate([vf(s), (jf(s) @ w[3:].reshape(3, 3)).ravel()])

        w0 = np.concatenate([p.array(), np.eye(3).ravel()])
    else:
        fun = vf
        w0 = p.array()
    counter = _UpCounter(spec, n)
    (t, y, f, dense), stop = solve(
        fun, w0, (p.t, p.t + cfg.t_max), cfg, terminal=[(_y_event, Direction.RISING, counter)]
    )
    traj = Trajectory(t, y, f, dense, params, cfg)
    fate = None
    if stop is not None and stop[0] == "escape":
        fate = Fate(FateTag.ESCAPED, float(stop[1]), tuple(map(float, stop[2][:3])))
    points, states = [], []
    for tc, s, _, _ in _locate(traj, _y_event, Direction.ANY):
        q = section_point(params, s[0], s[2], tc, spec)
        if q.kind is CrossingKind.TANGENT:
            raise TangentEncounterError(q)
        if q.kind is CrossingKind.UP and spec.admissible(q.x, q.z):
            points.append(q)
            states.append(s)
            if len(points) == n:
                break
    if len(points) < n and fate is None:
        fate = Fate(FateTag.BOUNDED, traj.t_end, tuple(map(float, traj.y[-1, :3])),
                    {"reason": "t_max reached before return", "horizon": cfg.t_max})
    return _Scan(points, states, traj, fate)


def first_return(params: SystemParams, p: SectionPoint, spec: SectionSpec,
                 cfg: IntegratorConfig | None = None) -> SectionPoint | Fate:
    """Next admissible Up crossing after ``p``, or the Fate that prevented it."""
    return nth_return(params, p, spec, 1, cfg)


def nth_return(params: SystemParams, p: SectionPoint, spec: SectionSpec, n: int,
               cfg: IntegratorConfig | None = None) -> SectionPoint | Fate:
    """The ``n``-th admissible Up crossing after ``p`` along a single integration."""
    cfg = cfg or IntegratorConfig()
    if int(n) < 1:
        raise DomainError("n must be at least 1")
    p = _check_start(params, p, spec)
    scan = _scan_returns(params, p, spec, cfg, int(n))
    if len(scan.points) < n:
        return scan.fate
    return scan.points[n - 1]


def return_with_trajectory(params, p, spec, cfg=None):
    """First return together with the trajectory from ``p`` to it."""
    cfg = cfg or IntegratorConfig()
    p = _check_start(params, p, spec)
    scan = _scan_returns(params, p, spec, cfg, 1)
    if not scan.points:
        return scan.fate, scan.traj
    return scan.points[0], scan.traj


def _variational_return(params, p, spec, cfg):
    p = _check_start(params, p, spec)
    scan = _scan_returns(params, p, spec, cfg, 1, variational=True)
    if not scan.points:
        raise ReturnFailure(scan.fate)
    q = scan.points[0]
    w = scan.full_states[0]
    phi = w[3:].reshape(3, 3)
    fq = vector_field(params)(q.array())
    proj = np.eye(3) - np.outer(fq, np.array([0.0, 1.0, 0.0])) / fq[1]
    full = proj @ phi
    return q, full[np.ix_([0, 2], [0, 2])]


def _fd_return(params, p, spec, cfg, step=FD_STEP):
    p = _check_start(params, p, spec)
    q = first_return(params, p, spec, cfg)
    if isinstance(q, Fate):
        raise ReturnFailure(q)
    cols = []
    for k in (0, 2):
        images = []
        for sign in (1.0, -1.0):
            st = list(p.state)
            st[k] += sign * step
            pp = section_point(params, st[0], st[2], p.t, spec)
            r = first_return(params, pp, spec, cfg)
            if isinstance(r, Fate):
                raise ReturnFailure(r)
            images.append(np.array(r.coords))
        cols.append((images[0] - images[1]) / (2 * step))
    return q, np.column_stack(cols)


def return_map_jacobian(params: SystemParams, p: SectionPoint, spec: SectionSpec,
                        method=JacobianMethod.VARIATIONAL, cfg: IntegratorConfig | None = None):
    """2x2 derivative of the return map in section coordinates (x, z).

    FiniteDifference uses central differences with step 1e-6. Variational
    integrates the first-variation equations and projects along the flow
    onto the plane: ``(I - f(q) e_y^T / f_y(q)) Phi``.
    Raises ``ReturnFailure`` when a needed return does not occur.
    """
    cfg = cfg or IntegratorConfig()
    method = JacobianMethod(method)
    if method is JacobianMethod.FINITE_DIFFERENCE:
        return _fd_return(params, p, spec, cfg)[1]
    return _variational_return(params, p, spec, cfg)[1]


def sample_return_map(params: SystemParams, points, spec: SectionSpec,
                      cfg: IntegratorConfig | None = None) -> list:
    """``{"from": (x, z), "to": (x', z') or None, ...}`` records for plotting."""
    cfg = cfg or IntegratorConfig()
    out = []
    for x, z in points:
        p = section_point(params, x, z, 0.0, spec)
        rec = {"from": [p.x, p.z], "kind": p.kind.value}
        try:
            q = first_return(params, p, spec, cfg)
        except (PreconditionError, TangentEncounterError) as exc:
            rec.update(to=None, reason=str(exc))
        else:
            if isinstance(q, Fate):
                rec.update(to=None, reason=q.tag.value)
            else:
                rec.update(to=[q.x, q.z], return_time=q.t - p.t, speed=q.speed)
        out.append(rec)
    return out
