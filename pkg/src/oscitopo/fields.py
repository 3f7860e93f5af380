"""The oscillators, their Jacobians, section normals and radial behaviour.

Every system, built-in or custom, is defined by three polynomial component
expressions (see :mod:`oscitopo.expr`). Evaluation, the analytic Jacobian and
the radial polynomial used for asymptotics are all generated from that single
definition.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from . import expr
from .errors import DomainError, PreconditionError, UnsupportedOperationError

ON_PLANE_TOL = 1e-12


class SystemKind(str, enum.Enum):
    NOSE_HOOVER = "nose-hoover"
    MOORE_SPIEGEL = "moore-spiegel"
    VALIDATION_HOPF = "hopf"
    CUSTOM = "custom"


_BUILTIN_SOURCES = {
    SystemKind.NOSE_HOOVER: (
        "xdot = y\n"
        "ydot = -x - z*y\n"
        "zdot = (y^2 - 1)/Q\n"
    ),
    SystemKind.MOORE_SPIEGEL: (
        "xdot = y\n"
        "ydot = z\n"
        "zdot = -z - (T - R + R*x^2)*y - T*x\n"
    ),
    SystemKind.VALIDATION_HOPF: (
        "xdot = -omega*y + x*(mu - x^2 - y^2)\n"
        "ydot = omega*x + y*(mu - x^2 - y^2)\n"
        "zdot = -z\n"
    ),
}


@dataclass(frozen=True)
class SystemParams:
    """Which vector field, and its parameter values.

    Use the constructors :meth:`nose_hoover`, :meth:`moore_spiegel`,
    :meth:`hopf` and :meth:`custom` rather than filling fields by hand.
    """

    kind: SystemKind
    Q: float = 1.0
    T: float = 27.0
    R: float = 100.0
    mu: float = 1.0
    omega: float = 1.0
    custom: expr.FieldDefinition | None = field(default=None, compare=True)
    custom_params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", SystemKind(self.kind))
        for name in ("Q", "T", "R", "mu", "omega"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"parameter {name} is not finite")
            object.__setattr__(self, name, value)
        if self.kind is SystemKind.NOSE_HOOVER and not self.Q > 0:
            raise DomainError("Nose-Hoover requires Q > 0")
        if self.kind is SystemKind.VALIDATION_HOPF and not (self.mu > 0 and self.omega > 0):
            raise DomainError("validation Hopf field requires mu > 0 and omega > 0")
        if self.kind is SystemKind.CUSTOM:
            if self.custom is None:
                raise DomainError("custom system needs a field definition")
            merged = dict(self.custom.defaults)
            merged.update(dict(self.custom_params))
            missing = [p for p in self.custom.parameters if p not in merged]
            if missing:
                raise DomainError(f"custom field parameters without values: {', '.join(missing)}")
            object.__setattr__(self, "custom_params", tuple(sorted(merged.items())))

    @classmethod
    def nose_hoover(cls, Q: float = 1.0) -> "SystemParams":
        return cls(SystemKind.NOSE_HOOVER, Q=Q)

    @classmethod
    def moore_spiegel(cls, T: float = 27.0, R: float = 100.0) -> "SystemParams":
        return cls(SystemKind.MOORE_SPIEGEL, T=T, R=R)

    @classmethod
    def hopf(cls, mu: float = 1.0, omega: float = 1.0) -> "SystemParams":
        return cls(SystemKind.VALIDATION_HOPF, mu=mu, omega=omega)

    @classmethod
    def custom_field(cls, source: str, **params: float) -> "SystemParams":
        definition = expr.parse_field(source)
        return cls(
            SystemKind.CUSTOM,
            custom=definition,
            custom_params=tuple(sorted((k, float(v)) for k, v in params.items())),
        )

    @property
    def definition(self) -> expr.FieldDefinition:
        if self.kind is SystemKind.CUSTOM:
            return self.custom
        return _builtin_definition(self.kind)

    @property
    def env(self) -> dict:
        if self.kind is SystemKind.NOSE_HOOVER:
            return {"Q": self.Q}
        if self.kind is SystemKind.MOORE_SPIEGEL:
            return {"T": self.T, "R": self.R}
        if self.kind is SystemKind.VALIDATION_HOPF:
            return {"mu": self.mu, "omega": self.omega}
        return dict(self.custom_params)

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value}
        if self.kind is SystemKind.CUSTOM:
            d["field_source"] = self.custom.source
        d["params"] = self.env
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        kind = SystemKind(d["kind"])
        params = dict(d.get("params", {}))
        if kind is SystemKind.CUSTOM:
            return cls.custom_field(d["field_source"], **params)
        return cls(kind, **params)

    def label(self) -> str:
        if self.kind is SystemKind.NOSE_HOOVER:
            return f"nose-hoover(Q={self.Q!r})"
        if self.kind is SystemKind.MOORE_SPIEGEL:
            return f"moore-spiegel(T={self.T!r}, R={self.R!r})"
        if self.kind is SystemKind.VALIDATION_HOPF:
            return f"hopf(mu={self.mu!r}, omega={self.omega!r})"
        return "custom(" + ", ".join(f"{k}={v!r}" for k, v in self.custom_params) + ")"


@functools.lru_cache(maxsize=None)
def _builtin_definition(kind: SystemKind) -> expr.FieldDefinition:
    return expr.parse_field(_BUILTIN_SOURCES[kind])


@dataclass(frozen=True)
class SphericalDirection:
    theta: float
    psi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi):
            raise DomainError("theta must lie in [0, pi]")
        if not (0.0 <= self.psi < 2 * math.pi):
            raise DomainError("psi must lie in [0, 2 pi)")

    def unit_vector(self) -> np.ndarray:
        return spherical_unit(self.theta, self.psi)


def spherical_unit(theta, psi) -> np.ndarray:
    """Unit vector(s) for polar angle ``theta`` and azimuth ``psi``; shape (..., 3)."""
    theta = np.asarray(theta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    st = np.sin(theta)
    return np.stack(np.broadcast_arrays(st * np.cos(psi), st * np.sin(psi), np.cos(theta)), axis=-1)


# --------------------------------------------------------------------------- compiled forms


@functools.lru_cache(maxsize=256)
def compiled(params: SystemParams) -> SimpleNamespace:
    """Generated evaluators and polynomial data for ``params`` (cached)."""
    definition = params.definition
    env = params.env
    comps = definition.components
    rhs = expr.compile_components(comps, env, "field")
    jac_nodes = [expr.differentiate(c, v) for c in comps for v in expr.STATE_VARS]
    jac = expr.compile_components(jac_nodes, env, "jacobian")
    polys = [expr.to_polynomial(c, env) for c in comps]

    def vf(s):
        x, y, z = s.tolist()
        return np.array(rhs(x, y, z))

    def jf(s):
        x, y, z = s.tolist()
        return np.array(jac(x, y, z)).reshape(3, 3)

    return SimpleNamespace(rhs=rhs, jac=jac, polys=polys, vf=vf, jf=jf, jac_nodes=jac_nodes)


def vector_field(params: SystemParams):
    """Fast single-state evaluator ``f(state) -> ndarray(3)`` for integrators."""
    return compiled(params).vf


def jacobian_function(params: SystemParams):
    """Fast single-state Jacobian ``J(state) -> ndarray(3, 3)``."""
    return compiled(params).jf


def _as_states(s) -> np.ndarray:
    arr = np.asarray(s, dtype=float)
    if arr.shape[-1:] != (3,):
        raise DomainError(f"state must have trailing dimension 3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("state has non-finite components")
    return arr


def _broadcast_out(values, shape) -> np.ndarray:
    return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in values], axis=-1)


def eval_field(params: SystemParams, s) -> np.ndarray:
    """Right-hand side at ``s`` (shape (3,) or (..., 3))."""
    arr = _as_states(s)
    out = compiled(params).rhs(arr[..., 0], arr[..., 1], arr[..., 2])
    return _broadcast_out(out, arr.shape[:-1])


def eval_jacobian(params: SystemParams, s) -> np.ndarray:
    """Analytic Jacobian at ``s``; shape (3, 3) or (..., 3, 3)."""
    arr = _as_states(s)
    out = compiled(params).jac(arr[..., 0], arr[..., 1], arr[..., 2])
    return _broadcast_out(out, arr.shape[:-1]).reshape(arr.shape[:-1] + (3, 3))


def divergence(params: SystemParams, s) -> np.ndarray:
    return np.trace(eval_jacobian(params, s), axis1=-2, axis2=-1)


# --------------------------------------------------------------------------- fixed points


def fixed_points(
    params: SystemParams,
    search_box=((-20.0, 20.0),) * 3,
    seeds_per_axis: int = 11,
    max_iter: int = 60,
    tol: float = 1e-10,
) -> list:
    """Zeros of the field in ``search_box`` by grid seeding plus Newton polish.

    Returns a list of ``(state, SpectrumClass)`` pairs sorted by state.
    Seeds whose iteration leaves the box or stalls are discarded.
    """
    from .topo.spectrum import classify_spectrum

    box = np.asarray(search_box, dtype=float)
    if box.shape != (3, 2) or not np.all(np.isfinite(box)) or np.any(box[:, 0] > box[:, 1]):
        raise DomainError("search_box must be three finite (lo, hi) pairs")
    axes = [np.linspace(lo, hi, seeds_per_axis) for lo, hi in box]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    span = float(np.max(box[:, 1] - box[:, 0]))
    s = grid.copy()
    alive = np.ones(len(s), dtype=bool)
    for _ in range(max_iter):
        F = eval_field(params, s[alive])
        J = eval_jacobian(params, s[alive])
        step = np.einsum("nij,nj->ni", np.linalg.pinv(J), F)
        s[alive] = s[alive] - step
        bad = ~np.all(np.isfinite(s), axis=1) | (np.linalg.norm(s - grid, axis=1) > 10 * span)
        alive &= ~bad
        s[bad] = 0.0
        if not alive.any():
            break
    found = []
    if alive.any():
        cand = s[alive]
        resid = np.linalg.norm(eval_field(params, cand), axis=1)
        margin = 1e-9 * max(1.0, span)
        inside = np.all((cand >= box[:, 0] - margin) & (cand <= box[:, 1] + margin), axis=1)
        for p in cand[(resid < tol) & inside]:
            if not any(np.linalg.norm(p - q) < 1e-6 * max(1.0, np.linalg.norm(q)) for q in found):
                found.append(p)
    found.sort(key=lambda p: tuple(p))
    out = []
    for p in found:
        p = np.where(np.abs(p) < 1e-15, 0.0, p)
        out.append((p, classify_spectrum(params, p)))
    return out


def known_fixed_points(params: SystemParams) -> list:
    """Fixed points available in closed form (empty when none are known)."""
    if params.kind is SystemKind.MOORE_SPIEGEL and params.T != 0:
        return [np.zeros(3)]
    if params.kind is SystemKind.VALIDATION_HOPF:
        return [np.zeros(3)]
    return []


@dataclass(frozen=True)
class InvariantLine:
    point: tuple
    direction: tuple

    def distance(self, s) -> float:
        p = np.asarray(self.point, float)
        d = np.asarray(self.direction, float)
        d = d / np.linalg.norm(d)
        v = np.asarray(s, float) - p
        return float(np.linalg.norm(v - np.dot(v, d) * d))


def invariant_lines(params: SystemParams) -> list:
    """Straight invariant flow-lines known in closed form.

    For Nose-Hoover and the validation field the z-axis is invariant.
    """
    if params.kind in (SystemKind.NOSE_HOOVER, SystemKind.VALIDATION_HOPF):
        return [InvariantLine((0.0, 0.0, 0.0), (0.0, 0.0, 1.0))]
    return []


# --------------------------------------------------------------------------- radial behaviour


def _direction_arrays(direction):
    if isinstance(direction, SphericalDirection):
        return direction.theta, direction.psi
    theta, psi = direction
    return np.asarray(theta, float), np.asarray(psi, float)


def radial_component(params: SystemParams, r: float, direction) -> np.ndarray | float:
    """``F(p) . p/|p|`` at the point of radius ``r`` in ``direction``.

    ``direction`` is a :class:`SphericalDirection` or a ``(theta, psi)`` pair of
    broadcastable arrays.
    """
    if not r > 0:
        raise DomainError("r must be positive")
    theta, psi = _direction_arrays(direction)
    u = spherical_unit(theta, psi)
    value = np.sum(eval_field(params, r * u) * u, axis=-1)
    return float(value) if np.ndim(value) == 0 else value


@functools.lru_cache(maxsize=64)
def _radial_leading(params: SystemParams):
    polys = compiled(params).polys
    radial: dict = {}
    for i, comp in enumerate(polys):
        for m, c in comp.items():
            mm = list(m)
            mm[i] += 1
            key = tuple(mm)
            radial[key] = radial.get(key, 0.0) + c
    by_degree: dict = {}
    for m, c in radial.items():
        if c != 0.0:
            by_degree.setdefault(sum(m), {})[m] = c
    if not by_degree:
        return {}, 0
    top = max(by_degree)
    return by_degree[top], top - 1


def radial_polynomial_leading_part(params: SystemParams):
    """Top-degree homogeneous part of ``p . F(p)`` and the resulting radial order."""
    terms, order = _radial_leading(params)
    return dict(terms), order


def radial_asymptotic_coefficient(params: SystemParams, direction):
    """Leading coefficient and order of the radial component as ``r -> inf``.

    The radial component is a polynomial in ``r``; this returns the coefficient
    function of its highest non-vanishing power, evaluated at ``direction``,
    together with that power. Only defined for the two oscillators.
    """
    if params.kind not in (SystemKind.NOSE_HOOVER, SystemKind.MOORE_SPIEGEL):
        raise UnsupportedOperationError(
            f"radial asymptotics are only provided for the oscillators, not {params.kind.value}"
        )
    terms, order = _radial_leading(params)
    theta, psi = _direction_arrays(direction)
    u = spherical_unit(theta, psi)
    coef = np.zeros(u.shape[:-1])
    for (i, j, k), c in sorted(terms.items()):
        coef = coef + c * u[..., 0] ** i * u[..., 1] ** j * u[..., 2] ** k
    coef = float(coef) if coef.ndim == 0 else coef
    return coef, order


def section_normal_component(params: SystemParams, s) -> float:
    """Component of the field along the normal (0, 1, 0) of the plane y = 0."""
    arr = _as_states(s)
    if arr.shape != (3,):
        raise DomainError("section_normal_component takes a single state")
    if abs(arr[1]) > ON_PLANE_TOL:
        raise PreconditionError(f"state is not on the plane y = 0 (|y| = {abs(arr[1]):.3e})")
    on_plane = np.array([arr[0], 0.0, arr[2]])
    return float(compiled(params).rhs(*on_plane)[1])
