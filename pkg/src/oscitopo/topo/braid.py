"""Braid words of closed orbits split at the plane y = 0, and knot verdicts.

Each half-space excursion of the orbit is a strand, parameterized by its
transit fraction tau in [0, 1]. Within a half-space the strands are ordered
by their (projected) x coordinate, and a swap of neighbours at tau* is a
generator whose sign records which strand is deeper in |y|.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from ..errors import AmbiguousCrossingError, PreconditionError
from ..ode import IntegratorConfig
from .alexander import LaurentPoly, alexander_polynomial

DEPTH_TOL = 1e-9
RETRY_ANGLE = 1e-3
SAMPLES_PER_STRAND = 512


class Verdict(str, enum.Enum):
    CERTIFIED_UNKNOT = "CertifiedUnknot"
    CONSISTENT_WITH_UNKNOT = "ConsistentWithUnknot"
    NOT_UNKNOT = "NotUnknot"


@dataclass(frozen=True)
class BraidData:
    n_strands: int
    word_up: tuple
    word_down: tuple
    alexander: LaurentPoly
    verdict: Verdict
    n_strands_up: int
    n_strands_down: int
    projection_angle: float = 0.0

    @property
    def word(self) -> tuple:
        return self.word_up + self.word_down

    def to_dict(self) -> dict:
        return {
            "n_strands": self.n_strands,
            "n_strands_up": self.n_strands_up,
            "n_strands_down": self.n_strands_down,
            "word_up": list(self.word_up),
            "word_down": list(self.word_down),
            "alexander": self.alexander.to_dict(),
            "alexander_text": str(self.alexander),
            "verdict": self.verdict.value,
            "projection_angle": self.projection_angle,
        }


def knot_verdict(braid: BraidData) -> Verdict:
    """Three-valued unknot test; a trivial Alexander polynomial is only necessary."""
    if braid.n_strands == 1:
        return Verdict.CERTIFIED_UNKNOT
    if braid.alexander != LaurentPoly.const(1):
        return Verdict.NOT_UNKNOT
    return Verdict.CONSISTENT_WITH_UNKNOT


def _half_word(curve, segments, angle):
    """Braid word of one half-space; ``segments`` are (t_start, t_end) per strand."""
    n = len(segments)
    if n < 2:
        return (), list(range(n))
    ca, sa = math.cos(angle), math.sin(angle)

    def proj(states):
        depth = np.abs(states[..., 1])
        return states[..., 0] * ca + depth * sa, -states[..., 0] * sa + depth * ca

    def at(k, tau):
        t0, t1 = segments[k]
        return curve(t0 + np.asarray(tau) * (t1 - t0))

    taus = np.linspace(0.0, 1.0, SAMPLES_PER_STRAND + 1)
    pos = np.empty((n, len(taus)))
    for k in range(n):
        pos[k] = proj(at(k, taus))[0]

    events = []
    for a in range(n):
        for b in range(a + 1, n):
            d = pos[a] - pos[b]
            idx = np.nonzero(np.sign(d[:-1]) * np.sign(d[1:]) < 0)[0]
            for i in idx:
                def gap(tau, a=a, b=b):
                    return float(proj(at(a, tau))[0] - proj(at(b, tau))[0])

                ts = brentq(gap, taus[i], taus[i + 1], xtol=1e-14)
                da = float(proj(at(a, ts))[1])
                db = float(proj(at(b, ts))[1])
                if abs(da - db) < DEPTH_TOL:
                    raise AmbiguousCrossingError(f"strands {a} and {b} meet in depth at tau={ts!r}")
                events.append((ts, a, b, da, db))
            if np.any(d[1:-1] == 0.0):
                raise AmbiguousCrossingError(f"strands {a} and {b} touch in projection")
    events.sort()

    order = list(np.argsort(pos[:, 0], kind="stable"))
    word = []
    for ts, a, b, da, db in events:
        ia, ib = order.index(a), order.index(b)
        if abs(ia - ib) != 1:
            raise AmbiguousCrossingError(f"non-adjacent strands swap at tau={ts!r}")
        left = min(ia, ib)
        mover = order[left]  # strand moving to the right
        depth_mover = da if mover == a else db
        depth_other = db if mover == a else da
        word.append((left + 1) * (1 if depth_mover > depth_other else -1))
        order[ia], order[ib] = order[ib], order[ia]
    return tuple(word), order


def _word_permutation(word, n):
    perm = list(range(n))
    for g in word:
        i = abs(g) - 1
        perm[i], perm[i + 1] = perm[i + 1], perm[i]
    return perm


def _is_single_cycle(perm) -> bool:
    n = len(perm)
    seen, k, steps = set(), 0, 0
    while k not in seen:
        seen.add(k)
        k = perm[k]
        steps += 1
    return steps == n


def braid_from_crossings(
    curve: Callable[[np.ndarray], np.ndarray],
    crossing_times: Sequence[float],
    up_flags: Sequence[bool],
    t_end: float,
    angle: float = 0.0,
) -> BraidData:
    """Braid of a closed curve given its ordered crossings of y = 0.

    ``curve`` maps an array of times to states (rows x, y, z). The first
    crossing must be an Up crossing at the curve's start; ``t_end`` is the
    closing time. Up crossings start strands of the upper half-space, Down
    crossings strands of the lower one. A depth tie triggers one retry with
    the projection rotated by 1e-3 rad.
    """
    times = [float(t) for t in crossing_times]
    if not times or not up_flags[0]:
        raise PreconditionError("the closed curve must start at an Up crossing")
    bounds = times + [float(t_end)]
    up_segments, down_segments = [], []
    for k, is_up in enumerate(up_flags):
        (up_segments if is_up else down_segments).append((bounds[k], bounds[k + 1]))
    n_up, n_down = len(up_segments), len(down_segments)
    if n_up != n_down:
        raise PreconditionError(f"unequal strand counts: {n_up} up, {n_down} down")
    n = n_up
    try:
        word_up, _ = _half_word(curve, up_segments, angle)
        word_down, _ = _half_word(curve, down_segments, angle)
    except AmbiguousCrossingError:
        if angle != 0.0:
            raise
        return braid_from_crossings(curve, crossing_times, up_flags, t_end, RETRY_ANGLE)
    word = word_up + word_down
    if n > 1 and not _is_single_cycle(_word_permutation(word, n)):
        raise AmbiguousCrossingError("strand permutation of the word is not a single cycle")
    alex = alexander_polynomial(word, n)
    data = BraidData(n, word_up, word_down, alex, Verdict.CONSISTENT_WITH_UNKNOT, n_up, n_down, angle)
    return BraidData(n, word_up, word_down, alex, knot_verdict(data), n_up, n_down, angle)


def extract_braid(orbit, params=None, cfg: IntegratorConfig | None = None) -> BraidData:
    """Braid data of a converged periodic orbit from one period of its flow."""
    from ..orbits import orbit_crossings
    from ..section import CrossingKind

    if params is not None and params != orbit.params:
        raise PreconditionError("orbit belongs to a different system")
    path = orbit.path(cfg)
    crossings = orbit_crossings(orbit, path=path)
    if any(c.kind is CrossingKind.TANGENT for c in crossings):
        raise PreconditionError("orbit has a tangent crossing")
    return braid_from_crossings(
        lambda t: path.state_at(np.clip(t, 0.0, path.t_end)),
        [c.t for c in crossings],
        [c.kind is CrossingKind.UP for c in crossings],
        path.t_end,
    )


def trefoil_fixture(a: float = 1.0, depth: float = 2.0) -> tuple:
    """Closed two-strand test curve whose braid closure is a trefoil.

    The parameter runs over [0, 4): upper strands on [0, 1) and [2, 3) swap x
    three times with alternating depth, lower strands on [1, 2) and [3, 4) are
    straight. Returns ``(curve, crossing_times, up_flags, t_end)``.
    """

    def curve(u):
        u = np.asarray(u, dtype=float)
        seg = np.clip(np.floor(u), 0, 3)
        tau = u - seg
        s_up = np.where(seg == 0, 1.0, -1.0)
        x_up = s_up * a * np.cos(3 * np.pi * tau)
        y_up = np.sin(np.pi * tau) * (depth + s_up * a * np.sin(3 * np.pi * tau))
        x_down = np.where(seg == 1, -a, a)
        y_down = -depth * np.sin(np.pi * tau)
        upper = (seg == 0) | (seg == 2)
        x = np.where(upper, x_up, x_down)
        y = np.where(upper, y_up, y_down)
        z = np.cos(np.pi * u / 2)
        return np.stack([x, y, z], axis=-1)

    return curve, (0.0, 1.0, 2.0, 3.0), (True, False, True, False), 4.0
