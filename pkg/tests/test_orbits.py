import math

import numpy as np
import pytest

from oscitopo.errors import DomainError, PreconditionError, SearchFailure, UnsupportedOperationError
from oscitopo.fields import SystemParams, eval_field
from oscitopo.ode import IntegratorConfig, integrate
from oscitopo.orbits import (
    Arc,
    Branch,
    ExitSurface,
    crossing_counts,
    exit_time,
    exit_time_sweep,
    find_periodic_orbit,
    orbit_crossings,
    recurrence_scan,
    stable_direction,
    trace_stable_manifold,
)
from oscitopo.section import CrossingKind, SectionSpec, first_return, section_point

MS = SystemParams.moore_spiegel(27.0, 100.0)
MS_SPEC = SectionSpec.for_system(MS)
HOPF = SystemParams.hopf()
HOPF_SPEC = SectionSpec.for_system(HOPF)
# rounded start of the period-1 orbit of Moore-Spiegel (27, 100)
MS_GUESS = (-2.11, 158.72)


@pytest.fixture(scope="module")
def ms_orbit():
    return find_periodic_orbit(MS, section_point(MS, *MS_GUESS, spec=MS_SPEC), MS_SPEC)


@pytest.fixture(scope="module")
def manifold():
    return trace_stable_manifold(MS)


def test_hopf_orbit():
    orbit = find_periodic_orbit(HOPF, section_point(HOPF, 1.2, 0.3, spec=HOPF_SPEC), HOPF_SPEC)
    assert abs(orbit.period - 2 * math.pi) < 1e-8
    assert orbit.residual < 1e-9
    assert orbit.n_strands == 1
    radial = min(abs(m) for m in orbit.multipliers)
    assert abs(radial - math.exp(-4 * math.pi)) < 1e-6
    assert crossing_counts(orbit) == (1, 1)


def test_moore_spiegel_period_one_orbit(ms_orbit):
    assert ms_orbit.residual < 1e-9
    assert ms_orbit.n_strands == 1
    assert ms_orbit.period == pytest.approx(1.607028058892532, abs=1e-8)
    q = first_return(MS, ms_orbit.start, MS_SPEC)
    assert math.hypot(q.x - ms_orbit.start.x, q.z - ms_orbit.start.z) < 1e-8


def test_multiplier_product_law(ms_orbit):
    prod = abs(np.prod(ms_orbit.multipliers))
    expected = math.exp(-ms_orbit.period)
    assert abs(prod - expected) / expected < 1e-5
    assert np.linalg.det(ms_orbit.monodromy) > 0


def test_orbit_crossings_are_transverse_and_balanced(ms_orbit):
    cr = orbit_crossings(ms_orbit)
    assert cr[0].t == 0.0 and cr[0].kind is CrossingKind.UP
    assert all(c.speed > 1e-6 for c in cr)
    ups, downs = crossing_counts(ms_orbit)
    assert ups == downs == ms_orbit.n_strands


def test_recurrence_candidate_reduces_to_prime_period():
    traj = integrate(MS, (0.1, 0, 0), (0, 300))
    cands = recurrence_scan(MS, traj, MS_SPEC, 2.0, max_n=3)
    assert cands
    assert [c.distance for c in cands] == sorted(c.distance for c in cands)
    for cand in cands:
        try:
            orbit = find_periodic_orbit(MS, cand.point, MS_SPEC, cand.n_return)
        except SearchFailure:
            continue
        assert orbit.n_strands <= cand.n_return
        return
    pytest.fail("no candidate converged")


def test_hopf_recurrence_after_transient():
    traj = integrate(HOPF, (0.5, 0.0, 0.2), (0, 80))
    cands = recurrence_scan(HOPF, traj, HOPF_SPEC, 1e-6, max_n=1)
    assert cands and all(c.n_return == 1 for c in cands)
    assert cands[0].distance < 1e-6


def test_recurrence_needs_enough_crossings():
    traj = integrate(HOPF, (1.0, 0.0, 0.0), (0, 7))
    assert recurrence_scan(HOPF, traj, HOPF_SPEC, 10.0, max_n=2) == []
    with pytest.raises(DomainError):
        recurrence_scan(HOPF, traj, HOPF_SPEC, 0.0)


def test_newton_failure_reports_best_residual():
    with pytest.raises(SearchFailure) as info:
        find_periodic_orbit(MS, section_point(MS, 3.0, 4.0, spec=MS_SPEC), MS_SPEC, max_iter=2)
    assert info.value.best_residual > 1e-9


def test_stable_direction():
    lam, v = stable_direction(MS)
    J = np.array([[0, 1, 0], [0, 0, 1], [-27, 73, -1]])
    assert lam < 0
    np.testing.assert_allclose(J @ v, lam * v, atol=1e-12)
    assert v[0] > 0 and v[1] < 0


def test_manifold_reaches_target_inside_quadrant(manifold):
    d1, d2 = manifold
    assert d1.which is Branch.DELTA1 and d2.which is Branch.DELTA2
    assert d1.reached and d2.reached
    assert d1.contained
    assert np.all(d1.polyline[:, 0] >= -1e-9) and np.all(d1.polyline[:, 1] <= 1e-9)


def test_manifold_branches_are_point_reflections(manifold):
    d1, d2 = manifold
    n = min(len(d1.times), len(d2.times))
    np.testing.assert_array_equal(d1.times[:n], d2.times[:n])
    assert np.abs(d1.polyline[:n] + d2.polyline[:n]).max() < 1e-6


def test_manifold_seed_flows_to_origin():
    _, v = stable_direction(MS)
    traj = integrate(MS, 1e-6 * v, (0, 5))
    assert np.linalg.norm(traj.states, axis=1).min() < 1e-8


def test_manifold_seed_independence(manifold):
    d1 = manifold[0]
    d1_half = trace_stable_manifold(MS, 5e-7)[0]
    top = min(d1.arclength[-1], d1_half.arclength[-1])
    sig = np.linspace(1e-5, top, 300)
    a, b = d1.at_arclength(sig), d1_half.at_arclength(sig)
    inside = np.linalg.norm(a, axis=1) <= 50
    assert np.linalg.norm(a - b, axis=1)[inside].max() < 10 * 1e-6


def test_manifold_requires_moore_spiegel():
    with pytest.raises(UnsupportedOperationError):
        trace_stable_manifold(HOPF)


def test_exit_sweep_on_l1():
    curve = exit_time_sweep(MS, Arc.L1, [0.1, 0.5, 1.0, 2.0, 5.0])
    for rec in curve.records:
        assert rec.t_exit is not None and math.isfinite(rec.t_exit)
        assert rec.exit_surface in (ExitSurface.H1, ExitSurface.U)
        assert rec.violations == ()
    assert curve.records[0].t_exit == pytest.approx(0.4854, abs=1e-4)


def test_initial_direction_on_l1():
    for s in (0.1, 1.0, 5.0):
        np.testing.assert_array_equal(eval_field(MS, (s, 0, 0)), (0, 0, -27 * s))


def test_l2_mirrors_l1():
    for s in (0.3, 2.0):
        a = exit_time(MS, Arc.L1, s)
        b = exit_time(MS, Arc.L2, -s)
        assert abs(a.t_exit - b.t_exit) < 1e-8
        np.testing.assert_allclose(b.exit_state, -np.array(a.exit_state), atol=1e-8)
        assert {a.exit_surface, b.exit_surface} in ({ExitSurface.H1, ExitSurface.H2}, {ExitSurface.U, ExitSurface.u})


def test_sweep_continuity_on_fine_grid():
    s_values = np.arange(0.4, 0.6, 1e-3)
    recs = exit_time_sweep(MS, Arc.L1, s_values).records
    for a, b in zip(recs, recs[1:]):
        if a.exit_surface is b.exit_surface:
            assert abs(a.t_exit - b.t_exit) < 0.5


def test_exit_time_rejects_points_off_the_arc():
    with pytest.raises(PreconditionError):
        exit_time(MS, Arc.L1, -1.0)
    with pytest.raises(PreconditionError):
        exit_time(MS, Arc.L2, 1.0)


def test_unfinished_exit_reports_none():
    rec = exit_time(MS, Arc.L1, 5.0, IntegratorConfig(t_max=1.0))
    assert rec.exit_surface is ExitSurface.NONE and rec.t_exit is None
