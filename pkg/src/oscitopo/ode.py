"""Adaptive integration with dense output, event location and fate classification.

The stepper is the Dormand-Prince 8(5,3) pair with its 7th-order dense
output. The Butcher tableau is taken from :class:`scipy.integrate.DOP853`;
the driver is local so that every step keeps its own interpolant in
step-local coordinates. That lets event refinement reach ``|g| < 1e-12``
regardless of the absolute time, and makes the trajectory an immutable value
that can be re-sliced without re-integration.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import brentq

from .errors import DomainError, EventRefinementError, IntegrationError
from .fields import (
    SystemKind,
    SystemParams,
    fixed_points,
    invariant_lines,
    known_fixed_points,
    vector_field,
)

_A = np.asarray(DOP853.A, dtype=float)
_B = np.asarray(DOP853.B, dtype=float)
_C = np.asarray(DOP853.C, dtype=float)
_E3 = np.asarray(DOP853.E3, dtype=float)
_E5 = np.asarray(DOP853.E5, dtype=float)
_D = np.asarray(DOP853.D, dtype=float)
_A_EXTRA = np.asarray(DOP853.A_EXTRA, dtype=float)
_C_EXTRA = np.asarray(DOP853.C_EXTRA, dtype=float)
_N_STAGES = int(DOP853.n_stages)
_ORDER = 8
_INTERP_POWER = 7
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_ERR_EXP = -1.0 / _ORDER

EVENT_TOL = 1e-12
EVENT_MAXITER = 200
_INTERIOR_X = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and limits for :func:`integrate` and everything built on it."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = 0.25
    t_max: float = 200.0
    escape_radius: float = 1e3
    max_steps: int = 2_000_000

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "t_max", "escape_radius"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) or (name == "max_step" and value == math.inf)):
                raise DomainError(f"{name} must be finite")
            if not value > 0:
                raise DomainError(f"{name} must be positive")
            object.__setattr__(self, name, value)
        if self.rel_tol < 1e-14:
            raise DomainError("rel_tol must be at least 1e-14")
        if int(self.max_steps) < 1:
            raise DomainError("max_steps must be positive")
        object.__setattr__(self, "max_steps", int(self.max_steps))

    def replace(self, **changes) -> "IntegratorConfig":
        d = asdict(self)
        d.update(changes)
        return IntegratorConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "IntegratorConfig":
        return cls(**d)


class FateTag(str, enum.Enum):
    BOUNDED = "Bounded"
    ESCAPED = "Escaped"
    CONVERGED = "ConvergedToFixedPoint"
    ON_INVARIANT_LINE = "OnInvariantLine"


@dataclass(frozen=True)
class Fate:
    tag: FateTag
    t: float
    state: tuple
    detail: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {"tag": self.tag.value, "t": self.t, "state": list(self.state), "detail": dict(self.detail)}


class Direction(str, enum.Enum):
    RISING = "Rising"
    FALLING = "Falling"
    ANY = "Any"


class EventHit(NamedTuple):
    t: float
    state: np.ndarray


# --------------------------------------------------------------------------- trajectory


class Trajectory:
    """Immutable solution with one 7th-order interpolant per accepted step.

    ``t`` holds the sample times (strictly increasing), ``y`` the samples and
    ``f`` the derivatives there. For ``reverse=True`` the samples solve the
    negated field, so ``y`` at time ``t`` is the original flow at time ``-t``
    (relative to ``t[0]``).
    """

    def __init__(self, t, y, f, dense, params=None, cfg=None, reverse=False, fate=None):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.f = np.asarray(f, dtype=float)
        self.dense = np.asarray(dense, dtype=float)
        self.params = params
        self.cfg = cfg
        self.reverse = bool(reverse)
        self.fate = fate
        for arr in (self.t, self.y, self.f, self.dense):
            arr.setflags(write=False)

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1

    @property
    def dim(self) -> int:
        return self.y.shape[1]

    @property
    def states(self) -> np.ndarray:
        """Phase-space part of the samples, shape (N, 3)."""
        return self.y[:, :3]

    def local(self, step, x) -> np.ndarray:
        """Interpolant of step(s) ``step`` at local coordinate(s) ``x`` in [0, 1]."""
        step = np.asarray(step)
        x = np.asarray(x, dtype=float)
        F = self.dense[step]
        y0 = self.y[step]
        xx = x[..., None]
        out = np.zeros(np.broadcast_shapes(F.shape[:-2], x.shape) + (self.dim,))
        for i in range(_INTERP_POWER - 1, -1, -1):
            out = out + F[..., i, :]
            out = out * (xx if (_INTERP_POWER - 1 - i) % 2 == 0 else 1.0 - xx)
        return out + y0

    def _locate_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t[0]) or np.any(t > self.t[-1]):
            raise DomainError("time outside the trajectory span")
        step = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, max(self.n_steps - 1, 0))
        h = self.t[step + 1] - self.t[step]
        return step, (t - self.t[step]) / h

    def __call__(self, t) -> np.ndarray:
        """Dense state at time(s) ``t``; stored samples are returned bit-exactly."""
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        if self.n_steps == 0:
            if np.any(tt != self.t[0]):
                raise DomainError("time outside the trajectory span")
            out = np.repeat(self.y[:1], len(tt), axis=0)
        else:
            step, x = self._locate_time(tt)
            out = self.local(step, x)
            idx = np.searchsorted(self.t, tt)
            exact = (idx < len(self.t)) & (self.t[np.minimum(idx, len(self.t) - 1)] == tt)
            out[exact] = self.y[idx[exact]]
        return out[0] if scalar else out

    def state_at(self, t) -> np.ndarray:
        return self(t)[..., :3]

    def final_state(self) -> np.ndarray:
        return self.y[-1, :3].copy()

    def truncated(self, n_steps: int) -> "Trajectory":
        """The first ``n_steps`` steps as a new trajectory."""
        k = int(n_steps)
        return Trajectory(
            self.t[: k + 1], self.y[: k + 1], self.f[: k + 1], self.dense[:k],
            self.params, self.cfg, self.reverse, None,
        )


# --------------------------------------------------------------------------- driver


def _initial_step(fun, y0, f0, rtol, atol, max_step, span):
    scale = atol + np.abs(y0) * rtol
    d0 = np.linalg.norm(y0 / scale) / math.sqrt(len(y0))
    d1 = np.linalg.norm(f0 / scale) / math.sqrt(len(y0))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = fun(y0 + h0 * f0)
    d2 = np.linalg.norm((f1 - f0) / scale) / math.sqrt(len(y0)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / _ORDER)
    return min(100 * h0, h1, span, max_step)


class _Terminal:
    """Stop condition: a sign change of ``event`` in ``direction`` whose root
    satisfies ``accept`` (if given)."""

    def __init__(self, event, direction=Direction.ANY, accept=None):
        self.event = event
        self.direction = Direction(direction)
        self.accept = accept


def solve(
    fun: Callable[[np.ndarray], np.ndarray],
    y0,
    t_span: tuple,
    cfg: IntegratorConfig,
    terminal: Sequence = (),
    escape_norm: Callable[[np.ndarray], float] | None = None,
) -> tuple:
    """Integrate the autonomous system ``y' = fun(y)`` over ``t_span``.

    Returns ``(t, y, f, dense, stop)`` where ``stop`` is None (span completed),
    ``("escape", t, y)`` or ``("terminal", index)``. ``terminal`` items are
    ``(event, direction)`` or ``(event, direction, accept)`` tuples; the
    integration ends after the step in which one of them fires.
    """
    t0, t1 = (float(v) for v in t_span)
    if not (math.isfinite(t0) and math.isfinite(t1)) or t1 < t0:
        raise DomainError("t_span must be finite and increasing")
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise DomainError("initial state has non-finite components")
    d = len(y)
    rtol = max(cfg.rel_tol, 100 * np.finfo(float).eps)
    atol = cfg.abs_tol
    terms = [_Terminal(*item) for item in terminal]
    if escape_norm is None:
        escape_norm = lambda s: float(np.linalg.norm(s[:3]))  # noqa: E731

    ts, ys, fs, dense = [t0], [y.copy()], [], []
    f = np.asarray(fun(y), dtype=float)
    fs.append(f)
    K = np.empty((_N_STAGES + 1 + len(_C_EXTRA), d))
    t = t0
    stop = None
    if t1 == t0:
        return _finish(ts, ys, fs, dense, d), None
    h_abs = _initial_step(fun, y, f, rtol, atol, cfg.max_step, t1 - t0)
    term_prev = [_event_value(tm.event, y) for tm in terms]

    while t < t1:
        if len(ts) > cfg.max_steps:
            raise IntegrationError(
                f"step budget of {cfg.max_steps} exhausted at t={t!r}",
                partial=Trajectory(*_finish(ts, ys, fs, dense, d)),
            )
        min_step = 10 * abs(np.nextafter(t, np.inf) - t)
        h_abs = min(h_abs, cfg.max_step)
        rejected = False
        while True:
            if h_abs < min_step:
                raise IntegrationError(
                    f"step size underflow at t={t!r}",
                    partial=Trajectory(*_finish(ts, ys, fs, dense, d)),
                )
            h = h_abs
            t_new = t + h
            if t_new >= t1:
                t_new = t1
                h = t_new - t
            K[0] = f
            for s in range(1, _N_STAGES):
                K[s] = fun(y + h * (_A[s, :s] @ K[:s]))
            y_new = y + h * (_B @ K[:_N_STAGES])
            f_new = np.asarray(fun(y_new), dtype=float)
            K[_N_STAGES] = f_new
            if not np.all(np.isfinite(y_new)):
                err = np.inf
            else:
                scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
                e5 = (_E5 @ K[: _N_STAGES + 1]) / scale
                e3 = (_E3 @ K[: _N_STAGES + 1]) / scale
                n5, n3 = float(e5 @ e5), float(e3 @ e3)
                err = 0.0 if n5 == 0 and n3 == 0 else h * n5 / math.sqrt((n5 + 0.01 * n3) * d)
            if err < 1:
                factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err**_ERR_EXP)
                if rejected:
                    factor = min(1.0, factor)
                h_next = h_abs * factor
                break
            factor = _MIN_FACTOR if not math.isfinite(err) else max(_MIN_FACTOR, _SAFETY * err**_ERR_EXP)
            h_abs *= factor
            rejected = True

        for j, (a, c) in enumerate(zip(_A_EXTRA, _C_EXTRA), start=_N_STAGES + 1):
            K[j] = fun(y + h * (a[:j] @ K[:j]))
        Fd = np.empty((_INTERP_POWER, d))
        dy = y_new - y
        Fd[0] = dy
        Fd[1] = h * f - dy
        Fd[2] = 2 * dy - h * (f_new + f)
        Fd[3:] = h * (_D @ K)

        ts.append(t_new)
        ys.append(y_new)
        fs.append(f_new)
        dense.append(Fd)
        t, y, f, h_abs = t_new, y_new, f_new, h_next

        if escape_norm(y) >= cfg.escape_radius:
            stop = ("escape", t, y.copy())
            break
        fired = None
        for k, tm in enumerate(terms):
            cur = _event_value(tm.event, y)
            if _step_fires(tm, ys[-2], Fd, cur, term_prev[k]):
                fired = k
            term_prev[k] = cur
        if fired is not None:
            stop = ("terminal", fired)
            break

    return _finish(ts, ys, fs, dense, d), stop


def _finish(ts, ys, fs, dense, d):
    dense_arr = np.asarray(dense) if dense else np.zeros((0, _INTERP_POWER, d))
    return np.asarray(ts), np.asarray(ys), np.asarray(fs), dense_arr


def _interp(y_old, Fd, x):
    out = np.zeros_like(y_old)
    for i in range(_INTERP_POWER - 1, -1, -1):
        out = out + Fd[i]
        out = out * (x if (_INTERP_POWER - 1 - i) % 2 == 0 else 1.0 - x)
    return out + y_old


def _event_value(event, s) -> float:
    return float(event(s))


def _crosses(ga, gb, direction: Direction) -> bool:
    rising = ga < 0 <= gb
    falling = ga > 0 >= gb
    if direction is Direction.RISING:
        return rising
    if direction is Direction.FALLING:
        return falling
    return rising or falling


def _step_fires(tm: _Terminal, y_old, Fd, g_end, g_start) -> bool:
    xs = (0.0,) + _INTERIOR_X + (1.0,)
    g = [g_start] + [_event_value(tm.event, _interp(y_old, Fd, x)) for x in _INTERIOR_X] + [g_end]
    for i in range(len(xs) - 1):
        if _crosses(g[i], g[i + 1], tm.direction):
            if tm.accept is None:
                return True
            try:
                xr = brentq(lambda x: _event_value(tm.event, _interp(y_old, Fd, x)), xs[i], xs[i + 1],
                            xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=EVENT_MAXITER)
            except (ValueError, RuntimeError):
                xr = xs[i + 1]
            if tm.accept(_interp(y_old, Fd, xr)):
                return True
    return False


# --------------------------------------------------------------------------- public API


def integrate(
    params: SystemParams,
    s0,
    t_span: tuple,
    cfg: IntegratorConfig | None = None,
    reverse: bool = False,
    terminal: Sequence = (),
) -> Trajectory:
    """Integrate the system from ``s0`` over the increasing span ``t_span``.

    ``reverse=True`` integrates the negated field (backward flow). When the
    escape radius is reached the trajectory ends there and carries an
    Escaped fate; otherwise ``fate`` is None.
    """
    cfg = cfg or IntegratorConfig()
    vf = vector_field(params)
    if reverse:
        fun = lambda s: -vf(s)  # noqa: E731
    else:
        fun = vf
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (3,):
        raise DomainError("initial state must have three components")
    (t, y, f, dense), stop = solve(fun, s0, t_span, cfg, terminal=terminal)
    fate = None
    if stop is not None and stop[0] == "escape":
        fate = Fate(FateTag.ESCAPED, float(stop[1]), tuple(map(float, stop[2][:3])))
    traj = Trajectory(t, y, f, dense, params, cfg, reverse, fate)
    traj.stop = stop
    return traj


def _event_on_rows(event, states: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(event(states), dtype=float)
        if out.shape == states.shape[:-1]:
            return out
    except Exception:  # event does not broadcast; fall back to rows
        pass
    flat = states.reshape(-1, states.shape[-1])
    return np.array([float(event(s)) for s in flat]).reshape(states.shape[:-1])


def _locate(traj: Trajectory, event, direction) -> list:
    """Roots as ``(t, state, step, x)`` tuples, in time order."""
    direction = Direction(direction)
    n = traj.n_steps
    if n == 0:
        return []
    xs = np.array((0.0,) + _INTERIOR_X)
    steps = np.repeat(np.arange(n), len(xs))
    locx = np.tile(xs, n)
    interior = locx > 0
    states = np.empty((len(steps), traj.dim))
    states[~interior] = traj.y[steps[~interior]]
    states[interior] = traj.local(steps[interior], locx[interior])
    steps = np.append(steps, n - 1)
    locx = np.append(locx, 1.0)
    states = np.vstack([states, traj.y[-1:]])
    g = _event_on_rows(event, states)

    ga, gb = g[:-1], g[1:]
    rising = (ga < 0) & (gb >= 0)
    falling = (ga > 0) & (gb <= 0)
    mask = {Direction.RISING: rising, Direction.FALLING: falling, Direction.ANY: rising | falling}[direction]
    hits = []
    start_tol = 1e-12 * max(1.0, abs(traj.t0))
    for k in np.nonzero(mask)[0]:
        step = int(steps[k])
        xa = float(locx[k])
        xb = float(locx[k + 1]) if steps[k + 1] == step else 1.0

        def gx(x, step=step):
            return float(event(traj.local(step, x)))

        if gb[k] == 0.0:
            xr = xb
        else:
            try:
                xr = brentq(gx, xa, xb, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=EVENT_MAXITER)
            except RuntimeError as exc:
                raise EventRefinementError(f"event refinement failed in step {step}: {exc}") from exc
        if xr == 1.0:
            s = traj.y[step + 1].copy()
            tr = float(traj.t[step + 1])
        else:
            s = traj.local(step, xr)
            tr = float(traj.t[step] + xr * (traj.t[step + 1] - traj.t[step]))
        if abs(float(event(s))) >= EVENT_TOL:
            raise EventRefinementError(
                f"event residual {abs(float(event(s))):.3e} above {EVENT_TOL} at t={tr!r}"
            )
        if tr - traj.t0 <= start_tol:
            continue
        hits.append((tr, s, step, xr))
    return hits


def locate_event(traj: Trajectory, event: Callable, direction=Direction.ANY) -> list:
    """Every sign change of ``event`` along ``traj`` in ``direction``.

    ``event`` maps a state (or an array of states with trailing dimension
    ``traj.dim``) to a scalar. Sign changes are bracketed on the samples and
    three interior points of every step, then refined with Brent's method on
    the step interpolant until ``|event| < 1e-12``. Events at the start time
    are excluded. Returns a list of ``EventHit(t, state)``.
    """
    return [EventHit(t, s) for t, s, _, _ in _locate(traj, event, direction)]


def classify_fate(params: SystemParams, s0, cfg: IntegratorConfig | None = None,
                  window: float = 10.0, fp_tol: float = 1e-8) -> Fate:
    """Long-run behaviour of the orbit of ``s0`` up to ``cfg.t_max``.

    OnInvariantLine if ``s0`` lies on a known invariant line; Escaped when the
    escape radius is reached; ConvergedToFixedPoint when the orbit stays within
    ``fp_tol`` of a known fixed point for ``window`` time units; Bounded
    otherwise. Fixed points of custom fields are located numerically. Bounded is a finite-horizon verdict.
    """
    cfg = cfg or IntegratorConfig()
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (3,) or not np.all(np.isfinite(s0)):
        raise DomainError("initial state must be three finite numbers")
    for line in invariant_lines(params):
        if line.distance(s0) <= 1e-12:
            return Fate(FateTag.ON_INVARIANT_LINE, 0.0, tuple(map(float, s0)),
                        {"line_point": list(line.point), "line_direction": list(line.direction)})
    traj = integrate(params, s0, (0.0, cfg.t_max), cfg)
    if traj.fate is not None:
        return traj.fate
    fps = known_fixed_points(params)
    if not fps and params.kind is SystemKind.CUSTOM:
        fps = [p for p, _ in fixed_points(params)]
    for fp in fps:
        dist = np.linalg.norm(traj.states - fp, axis=1)
        outside = np.nonzero(dist >= fp_tol)[0]
        first_in = 0 if len(outside) == 0 else outside[-1] + 1
        if first_in < len(traj.t) and traj.t_end - traj.t[first_in] >= window:
            return Fate(FateTag.CONVERGED, float(traj.t[first_in]), tuple(map(float, traj.y[first_in])),
                        {"fixed_point": list(map(float, fp)), "window": window, "tolerance": fp_tol})
    return Fate(FateTag.BOUNDED, traj.t_end, tuple(map(float, traj.final_state())),
                {"horizon": cfg.t_max})
