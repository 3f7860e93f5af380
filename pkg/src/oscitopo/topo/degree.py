"""Fixed-point indices, Brouwer degrees on spheres and direction avoidance."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegeneracyError, DomainError, IllPosedError, PreconditionError, ResolutionError
from ..fields import SystemParams, eval_field, eval_jacobian, fixed_points

FIXED_POINT_TOL = 1e-10
DET_TOL = 1e-10
VANISHING_TOL = 1e-8
ROUNDING_GUARD = 0.1
MIN_SUBDIVISION = 4


def analytic_index(params: SystemParams, fp) -> int:
    """Index of a nondegenerate fixed point: the sign of the Jacobian determinant."""
    fp = np.asarray(fp, dtype=float)
    if np.linalg.norm(eval_field(params, fp)) >= FIXED_POINT_TOL:
        raise PreconditionError("not a fixed point of the field")
    det = float(np.linalg.det(eval_jacobian(params, fp)))
    if abs(det) <= DET_TOL:
        raise DegeneracyError(f"Jacobian determinant {det!r} too small for the sign rule")
    return 1 if det > 0 else -1


@functools.lru_cache(maxsize=8)
def icosphere(subdivision: int) -> tuple:
    """Unit icosphere: ``(vertices (V, 3), faces (F, 3))`` with outward orientation."""
    p = (1 + 5**0.5) / 2
    verts = [
        (-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0),
        (0, -1, p), (0, 1, p), (0, -1, -p), (0, 1, -p),
        (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(int(subdivision)):
        cache: dict = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    V = np.array(verts)
    Fc = np.array(faces, dtype=np.int64)
    V.setflags(write=False)
    Fc.setflags(write=False)
    return V, Fc


def signed_solid_angles(a, b, c) -> np.ndarray:
    """Signed solid angle of spherical triangles with unit vertices a, b, c (rows)."""
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = 1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c) + np.einsum("ij,ij->i", c, a)
    return 2.0 * np.arctan2(num, den)


def raw_sphere_degree(params: SystemParams, center, radius: float, subdivision: int) -> float:
    """Total signed area of the image of the sphere under ``F/|F|``, over 4 pi."""
    V, Fc = icosphere(subdivision)
    pts = np.asarray(center, dtype=float) + radius * V
    F = eval_field(params, pts)
    norms = np.linalg.norm(F, axis=1)
    if norms.min() <= VANISHING_TOL:
        k = int(np.argmin(norms))
        raise IllPosedError(f"field nearly vanishes on the sphere at {pts[k].tolist()} (|F| = {norms[k]:.3e})")
    u = F / norms[:, None]
    omega = signed_solid_angles(u[Fc[:, 0]], u[Fc[:, 1]], u[Fc[:, 2]])
    return math.fsum(omega) / (4 * math.pi)


@dataclass(frozen=True)
class IndexResult:
    """Degree of ``F/|F|`` on a sphere, with the sum of enclosed analytic indices.

    ``analytic_index`` is None when some enclosed fixed point is degenerate.
    """

    point: tuple
    radius: float
    subdivision: int
    raw_degree: float
    numerical_degree: int
    analytic_index: int | None
    enclosed: tuple = field(default=())

    @property
    def agreement(self) -> bool | None:
        if self.analytic_index is None:
            return None
        return self.analytic_index == self.numerical_degree

    def to_dict(self) -> dict:
        return {
            "center": list(self.point),
            "radius": self.radius,
            "subdivision": self.subdivision,
            "raw_degree": self.raw_degree,
            "degree": self.numerical_degree,
            "analytic_index": self.analytic_index,
            "agreement": self.agreement,
            "enclosed_fixed_points": [list(p) for p in self.enclosed],
        }


def numerical_degree(
    params: SystemParams,
    center,
    radius: float,
    subdivision: int = 5,
    index_rule=analytic_index,
) -> IndexResult:
    """Brouwer degree of the normalized field on a sphere.

    Sums signed solid angles of the image triangles of an icosahedral
    triangulation and rounds, raising ``ResolutionError`` if the raw value is
    not within 0.1 of an integer. The enclosed fixed points are located and
    their indices (by ``index_rule``) summed for comparison.
    """
    center = np.asarray(center, dtype=float)
    if center.shape != (3,) or not np.all(np.isfinite(center)):
        raise DomainError("center must be three finite numbers")
    if not (np.isfinite(radius) and radius > 0):
        raise DomainError("radius must be positive")
    if int(subdivision) < MIN_SUBDIVISION:
        raise DomainError(f"subdivision must be at least {MIN_SUBDIVISION}")
    raw = raw_sphere_degree(params, center, radius, int(subdivision))
    deg = int(round(raw))
    if abs(raw - deg) >= ROUNDING_GUARD:
        raise ResolutionError(raw, int(subdivision))
    box = tuple((c - radius, c + radius) for c in center)
    inside = [p for p, _ in fixed_points(params, box) if np.linalg.norm(p - center) < radius]
    try:
        total = sum(index_rule(params, p) for p in inside)
    except DegeneracyError:
        total = None
    return IndexResult(
        point=tuple(map(float, center)),
        radius=float(radius),
        subdivision=int(subdivision),
        raw_degree=raw,
        numerical_degree=deg,
        analytic_index=total,
        enclosed=tuple(tuple(map(float, p)) for p in inside),
    )


def sphere_samples(samples: int, seed: int | None = None) -> np.ndarray:
    """Fibonacci lattice of ``samples`` unit vectors plus the six axis points.

    With ``seed`` the lattice is rotated by a reproducible random rotation.
    """
    n = int(samples)
    if n < 1:
        raise DomainError("samples must be positive")
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    r = np.sqrt(1 - z * z)
    phi = k * math.pi * (3 - 5**0.5)
    pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    if seed is not None:
        from scipy.spatial.transform import Rotation

        pts = Rotation.random(random_state=int(seed)).apply(pts)
    axes = np.vstack([np.eye(3), -np.eye(3)])
    return np.vstack([pts, axes])


def direction_avoidance(
    params: SystemParams,
    radius: float,
    direction,
    samples: int = 100_000,
    center=(0.0, 0.0, 0.0),
    seed: int | None = None,
) -> float:
    """Smallest angle between ``F/|F|`` and ``direction`` over sphere samples."""
    d = np.asarray(direction, dtype=float)
    if d.shape != (3,) or not np.linalg.norm(d) > 0:
        raise DomainError("direction must be a nonzero 3-vector")
    d = d / np.linalg.norm(d)
    if not radius > 0:
        raise DomainError("radius must be positive")
    pts = np.asarray(center, dtype=float) + radius * sphere_samples(samples, seed)
    F = eval_field(params, pts)
    norms = np.linalg.norm(F, axis=1)
    if norms.min() <= VANISHING_TOL:
        raise IllPosedError("field nearly vanishes on the sphere")
    cosang = np.clip((F @ d) / norms, -1.0, 1.0)
    return float(np.arccos(cosang.max()))
