"""Eigenvalue classification of fixed points and the Routh-Hurwitz triple."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import PreconditionError
from ..fields import SystemKind, SystemParams, eval_field, eval_jacobian

ZERO_TOL = 1e-10
DEFECTIVE_COND = 1e12


class SpectrumType(str, enum.Enum):
    REAL_SADDLE = "RealSaddle"
    SADDLE_FOCUS = "SaddleFocus"
    CENTER_LIKE = "CenterLike"
    SINK = "Sink"
    SOURCE = "Source"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class SpectrumClass:
    """Linearization summary at a fixed point.

    ``rh_triple`` is ``(a, a*b - c, c)`` for the characteristic polynomial
    ``lambda^3 + a lambda^2 + b lambda + c``. ``unstable_plane_section_angle``
    is the dihedral angle in radians between the two-dimensional unstable
    subspace and the plane y = 0, or None when it is not defined.
    ``standard_regime`` is True for Moore-Spiegel with T > 0 and R > 0, False
    for Moore-Spiegel outside it and None for other systems.
    """

    eigenvalues: tuple
    rh_triple: tuple
    cls: SpectrumType
    unstable_plane_section_angle: float | None = None
    standard_regime: bool | None = None
    eigenvector_condition: float = 1.0

    @property
    def max_real_part(self) -> float:
        return max(ev.real for ev in self.eigenvalues)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[ev.real, ev.imag] for ev in self.eigenvalues],
            "rh_triple": list(self.rh_triple),
            "class": self.cls.value,
            "unstable_plane_section_angle": self.unstable_plane_section_angle,
            "standard_regime": self.standard_regime,
        }


def characteristic_coefficients(J) -> tuple:
    """``(a, b, c)`` with ``det(lambda I - J) = lambda^3 + a lambda^2 + b lambda + c``."""
    J = np.asarray(J, dtype=float)
    a = -np.trace(J)
    b = (
        J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        + J[0, 0] * J[2, 2] - J[0, 2] * J[2, 0]
        + J[1, 1] * J[2, 2] - J[1, 2] * J[2, 1]
    )
    c = -np.linalg.det(J)
    return float(a), float(b), float(c)


def _sorted_eig(J):
    w, V = np.linalg.eig(J)
    order = np.lexsort((w.imag, w.real))
    return w[order], V[:, order]


def spectrum_from_jacobian(J) -> SpectrumClass:
    """Classify the linearization with matrix ``J`` (no system-specific extras)."""
    J = np.asarray(J, dtype=float)
    w, V = _sorted_eig(J)
    a, b, c = characteristic_coefficients(J)
    cond = float(np.linalg.cond(V)) if np.all(np.isfinite(V)) else np.inf
    cls = _pattern(w, J, cond)
    return SpectrumClass(
        eigenvalues=tuple(complex(v) for v in w),
        rh_triple=(a, a * b - c, c),
        cls=cls,
        eigenvector_condition=cond,
    )


def _pattern(w, J, cond) -> SpectrumType:
    scale = max(1.0, float(np.linalg.norm(J)))
    tol = ZERO_TOL * scale
    if cond > DEFECTIVE_COND or np.any(np.abs(w) <= tol):
        return SpectrumType.DEGENERATE
    re = w.real
    complex_pair = np.any(np.abs(w.imag) > tol)
    if np.any((np.abs(re) <= tol) & (np.abs(w.imag) > tol)):
        return SpectrumType.CENTER_LIKE
    if np.all(re < 0):
        return SpectrumType.SINK
    if np.all(re > 0):
        return SpectrumType.SOURCE
    if np.any(np.abs(re) <= tol):
        return SpectrumType.DEGENERATE
    return SpectrumType.SADDLE_FOCUS if complex_pair else SpectrumType.REAL_SADDLE


def unstable_plane_angle(J) -> float | None:
    """Angle between the 2-D unstable subspace of ``J`` and the plane y = 0.

    Returns None unless exactly two eigenvalues have positive real part.
    """
    w, V = _sorted_eig(np.asarray(J, dtype=float))
    idx = [i for i in range(3) if w[i].real > 0]
    if len(idx) != 2:
        return None
    v1, v2 = V[:, idx[0]], V[:, idx[1]]
    if abs(w[idx[0]].imag) > 0:
        # complex pair: the real invariant plane is spanned by Re v and Im v
        v1, v2 = v1.real, v1.imag
    else:
        v1, v2 = v1.real, v2.real
    n = np.cross(v1, v2)
    n /= np.linalg.norm(n)
    return float(np.arccos(np.clip(abs(n[1]), 0.0, 1.0)))


def classify_spectrum(params: SystemParams, fp) -> SpectrumClass:
    """Spectral class of the fixed point ``fp``.

    For Moore-Spiegel at the origin the Routh-Hurwitz triple is the closed form
    ``(1, -R, T)`` of the characteristic polynomial
    ``lambda^3 + lambda^2 + (T - R) lambda + T``; elsewhere it is computed from
    the numerical Jacobian.
    """
    fp = np.asarray(fp, dtype=float)
    if np.linalg.norm(eval_field(params, fp)) >= ZERO_TOL:
        raise PreconditionError("classify_spectrum needs a fixed point of the field")
    J = eval_jacobian(params, fp)
    base = spectrum_from_jacobian(J)
    if params.kind is not SystemKind.MOORE_SPIEGEL:
        return base
    rh = base.rh_triple
    if np.all(fp == 0.0):
        rh = (1.0, -params.R, params.T)
    return SpectrumClass(
        eigenvalues=base.eigenvalues,
        rh_triple=rh,
        cls=base.cls,
        unstable_plane_section_angle=unstable_plane_angle(J),
        standard_regime=bool(params.T > 0 and params.R > 0),
        eigenvector_condition=base.eigenvector_condition,
    )
