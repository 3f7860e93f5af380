import math

import numpy as np
import pytest

from oscitopo.errors import DomainError, PreconditionError, ReturnFailure
from oscitopo.fields import SystemParams, eval_field
from oscitopo.ode import Fate, FateTag, IntegratorConfig, integrate
from oscitopo.section import (
    CrossingKind,
    JacobianMethod,
    Region,
    SectionSpec,
    detect_crossings,
    first_return,
    nth_return,
    return_map_jacobian,
    return_with_trajectory,
    sample_return_map,
    section_point,
)

NH1 = SystemParams.nose_hoover(1.0)
MS = SystemParams.moore_spiegel(27.0, 100.0)
HOPF = SystemParams.hopf()
NH_SPEC = SectionSpec.for_system(NH1)
MS_SPEC = SectionSpec.for_system(MS)


def _nh_crossings(t_end=200.0):
    return detect_crossings(integrate(NH1, (1, 0, 0), (0, t_end)), NH_SPEC)


def test_spec_for_system():
    assert NH_SPEC.region is Region.X1
    assert MS_SPEC.region is Region.U
    assert SectionSpec.for_system(HOPF).region is Region.FULL_PLANE
    assert NH_SPEC.admissible(-1, 5) and not NH_SPEC.admissible(1, 5)
    assert MS_SPEC.admissible(3, 1) and not MS_SPEC.admissible(3, -1)


def test_admissible_region_is_where_crossings_go_up():
    rng = np.random.default_rng(3)
    for params, spec in ((NH1, NH_SPEC), (MS, MS_SPEC)):
        for x, z in rng.uniform(-5, 5, (50, 2)):
            p = section_point(params, x, z, spec=spec)
            assert (p.kind is CrossingKind.UP) == spec.admissible(x, z)


def test_nose_hoover_crossing_structure():
    cr = _nh_crossings()
    ups = [c for c in cr if c.kind is CrossingKind.UP]
    assert len(ups) >= 10
    assert all(c.x < 0 for c in ups)
    kinds = [c.kind for c in cr if c.kind is not CrossingKind.TANGENT]
    assert all(a is not b for a, b in zip(kinds, kinds[1:]))
    assert all(c.speed > 1e-6 for c in cr)
    assert all(abs(c.state[1]) < 1e-12 for c in cr)


def test_tangent_crossing_is_reported():
    # path (0, (t - 1)^3, t): tangent to y = 0 on the line x = 0
    params = SystemParams.custom_field("xdot = 0\nydot = 3*(z - 1)^2\nzdot = 1\n")
    traj = integrate(params, (0, -1, 0), (0, 2))
    cr = detect_crossings(traj, NH_SPEC, params=NH1)
    assert [c.kind for c in cr] == [CrossingKind.TANGENT]
    assert cr[0].t == pytest.approx(1.0, abs=1e-4)
    assert cr[0].speed < 1e-8


def test_first_return_agrees_with_long_trajectory():
    ups = [c for c in _nh_crossings(100.0) if c.kind is CrossingKind.UP]
    cfg = IntegratorConfig()
    for a, b in zip(ups[:4], ups[1:5]):
        q = first_return(NH1, a, NH_SPEC, cfg)
        assert q.t - a.t > 1e-6
        assert q.t == pytest.approx(b.t, abs=1e-7)
        np.testing.assert_allclose(q.coords, b.coords, atol=1e-7)


def test_composition_consistency():
    p = section_point(NH1, -1.0, 0.5, spec=NH_SPEC)
    one = first_return(NH1, first_return(NH1, p, NH_SPEC), NH_SPEC)
    two = nth_return(NH1, p, NH_SPEC, 2)
    np.testing.assert_allclose(one.coords, two.coords, atol=1e-8)
    assert one.t == pytest.approx(two.t, abs=1e-8)


def test_start_point_preconditions():
    with pytest.raises(PreconditionError):
        first_return(NH1, section_point(NH1, 0.0, 3.0, spec=NH_SPEC), NH_SPEC)
    with pytest.raises(PreconditionError):
        first_return(NH1, section_point(NH1, 1.0, 3.0, spec=NH_SPEC), NH_SPEC)
    with pytest.raises(DomainError):
        nth_return(NH1, section_point(NH1, -1.0, 0.0, spec=NH_SPEC), NH_SPEC, 0)


def test_missing_return_gives_fate():
    p = section_point(NH1, -1.0, 0.5, spec=NH_SPEC)
    fate = first_return(NH1, p, NH_SPEC, IntegratorConfig(t_max=0.5))
    assert isinstance(fate, Fate)
    assert fate.tag is FateTag.BOUNDED
    with pytest.raises(ReturnFailure):
        return_map_jacobian(NH1, p, NH_SPEC, cfg=IntegratorConfig(t_max=0.5))


def test_hopf_cycle_is_fixed_with_known_multiplier():
    spec = SectionSpec.for_system(HOPF)
    p = section_point(HOPF, 1.0, 0.0, spec=spec)
    q = first_return(HOPF, p, spec)
    assert abs(q.x - 1.0) < 1e-9 and abs(q.z) < 1e-9
    assert q.t == pytest.approx(2 * math.pi, abs=1e-8)
    J = return_map_jacobian(HOPF, p, spec)
    np.testing.assert_allclose(J, np.diag([math.exp(-4 * math.pi), math.exp(-2 * math.pi)]), atol=1e-6)


def test_jacobian_methods_agree_on_nose_hoover():
    rng = np.random.default_rng(11)
    for x, z in zip(rng.uniform(-2.0, -0.5, 10), rng.uniform(-1.0, 1.0, 10)):
        p = section_point(NH1, x, z, spec=NH_SPEC)
        var = return_map_jacobian(NH1, p, NH_SPEC, JacobianMethod.VARIATIONAL)
        fd = return_map_jacobian(NH1, p, NH_SPEC, JacobianMethod.FINITE_DIFFERENCE)
        assert np.abs(var - fd).max() / np.abs(var).max() < 1e-5
        assert np.linalg.det(var) > 0


def test_moore_spiegel_determinant_follows_liouville():
    # det DP = exp(-tau) * f_y(p) / f_y(q) since the divergence is -1
    for x, z in ((1.0, 2.0), (-3.0, 5.0), (0.5, 0.7)):
        p = section_point(MS, x, z, spec=MS_SPEC)
        q = first_return(MS, p, MS_SPEC)
        J = return_map_jacobian(MS, p, MS_SPEC)
        expected = math.exp(-(q.t - p.t)) * p.speed / q.speed
        assert np.linalg.det(J) == pytest.approx(expected, rel=1e-6)


def test_return_with_trajectory_ends_at_return():
    p = section_point(MS, 1.0, 2.0, spec=MS_SPEC)
    q, traj = return_with_trajectory(MS, p, MS_SPEC)
    np.testing.assert_allclose(traj.state_at(q.t), q.array(), atol=1e-10)
    assert traj.t0 == p.t


def test_sample_return_map_records():
    recs = sample_return_map(NH1, [(-1.0, 0.5), (1.0, 0.5)], NH_SPEC)
    assert recs[0]["to"] is not None and len(recs[0]["to"]) == 2
    assert recs[1]["to"] is None


def test_section_point_fields():
    p = section_point(MS, 5.0, -2.0)
    assert p.kind is CrossingKind.DOWN and p.speed == 2.0
    assert p.to_dict() == {"t": 0.0, "x": 5.0, "z": -2.0, "speed": 2.0, "kind": "Down"}
    assert eval_field(MS, p.array())[1] == -2.0
