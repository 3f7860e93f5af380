import math

import numpy as np
import pytest

from oscitopo.errors import DegeneracyError, DomainError, IllPosedError, PreconditionError
from oscitopo.fields import SystemParams, eval_field
from oscitopo.topo.degree import (
    analytic_index,
    direction_avoidance,
    icosphere,
    numerical_degree,
    signed_solid_angles,
    sphere_samples,
)

NH1 = SystemParams.nose_hoover(1.0)
MS = SystemParams.moore_spiegel(27.0, 100.0)
IDENTITY = SystemParams.custom_field("xdot = x\nydot = y\nzdot = z\n")
TWO_POINTS = SystemParams.custom_field("xdot = x^2 - 1\nydot = -y\nzdot = -z\n")
ORIGIN = np.zeros(3)


def test_analytic_index_examples():
    assert analytic_index(MS, ORIGIN) == -1
    assert analytic_index(SystemParams.moore_spiegel(-1.0, 100.0), ORIGIN) == 1
    assert analytic_index(IDENTITY, ORIGIN) == 1


@pytest.mark.parametrize("T", [1.0, -1.0, 27.0, -27.0, 100.0, -100.0])
def test_index_is_minus_sign_of_T(T):
    assert analytic_index(SystemParams.moore_spiegel(T, 100.0), ORIGIN) == -int(np.sign(T))


def test_analytic_index_errors():
    with pytest.raises(PreconditionError):
        analytic_index(MS, (1, 0, 0))
    with pytest.raises(DegeneracyError):
        analytic_index(SystemParams.custom_field("xdot = x^2\nydot = y\nzdot = z\n"), ORIGIN)


def test_icosphere_is_closed_and_outward():
    V, F = icosphere(4)
    assert len(F) == 20 * 4**4 and len(V) == 10 * 4**4 + 2
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0)
    omega = signed_solid_angles(V[F[:, 0]], V[F[:, 1]], V[F[:, 2]])
    assert math.fsum(omega) == pytest.approx(4 * math.pi, rel=1e-12)
    edges = {}
    for a, b, c in F:
        for e in ((a, b), (b, c), (c, a)):
            edges[e] = edges.get(e, 0) + 1
    assert all((b, a) in edges for a, b in edges)


def test_identity_field_degree():
    res = numerical_degree(IDENTITY, ORIGIN, 3.0)
    assert res.numerical_degree == 1 and res.analytic_index == 1
    assert abs(res.raw_degree - 1) < 1e-12
    assert numerical_degree(IDENTITY, (0.2, -0.3, 0.1), 1.0).numerical_degree == 1
    outside = numerical_degree(IDENTITY, (5, 0, 0), 1.0)
    assert outside.numerical_degree == 0 and outside.analytic_index == 0


def test_moore_spiegel_degrees():
    small = numerical_degree(MS, ORIGIN, 1e-2)
    large = numerical_degree(MS, ORIGIN, 50.0)
    for res in (small, large):
        assert res.numerical_degree == -1
        assert abs(res.raw_degree + 1) < 0.1
        assert res.agreement is True


def test_nose_hoover_degree_is_zero():
    res = numerical_degree(NH1, ORIGIN, 50.0)
    assert res.numerical_degree == 0 and abs(res.raw_degree) < 0.1
    assert res.analytic_index == 0 and res.enclosed == ()


def test_poincare_hopf_with_two_fixed_points():
    assert numerical_degree(TWO_POINTS, (1, 0, 0), 0.5).numerical_degree == 1
    assert numerical_degree(TWO_POINTS, (-1, 0, 0), 0.5).numerical_degree == -1
    both = numerical_degree(TWO_POINTS, ORIGIN, 3.0)
    assert both.numerical_degree == 0
    assert len(both.enclosed) == 2 and both.analytic_index == 0


def test_degenerate_enclosed_point_has_no_analytic_sum():
    res = numerical_degree(SystemParams.custom_field("xdot = x^2\nydot = y\nzdot = z\n"), ORIGIN, 1.0)
    assert res.numerical_degree == 0
    assert res.analytic_index is None and res.agreement is None


@pytest.mark.parametrize("params, radius", [(MS, 1e-2), (MS, 50.0), (NH1, 50.0)])
def test_degree_stable_under_refinement(params, radius):
    a = numerical_degree(params, ORIGIN, radius, 4)
    b = numerical_degree(params, ORIGIN, radius, 5)
    assert a.numerical_degree == b.numerical_degree
    assert abs(a.raw_degree - b.raw_degree) < 0.05


def test_degree_input_validation():
    with pytest.raises(DomainError):
        numerical_degree(MS, ORIGIN, 1.0, subdivision=3)
    with pytest.raises(DomainError):
        numerical_degree(MS, ORIGIN, -1.0)
    with pytest.raises(DomainError):
        numerical_degree(MS, (0, 0), 1.0)


def test_avoidance():
    ang = direction_avoidance(NH1, 50.0, (0, 0, 1), samples=100_000)
    assert ang > 0
    np.testing.assert_array_equal(eval_field(NH1, (0, 0, 50)), (0, 0, -1))
    assert direction_avoidance(IDENTITY, 2.0, (0, 0, 1), samples=1000) == 0.0


def test_avoidance_seed_is_reproducible():
    a = direction_avoidance(NH1, 50.0, (0, 0, 1), samples=5000, seed=3)
    b = direction_avoidance(NH1, 50.0, (0, 0, 1), samples=5000, seed=3)
    assert a == b
    pts = sphere_samples(5000, seed=3)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0)


def test_vanishing_field_is_ill_posed():
    with pytest.raises(IllPosedError):
        direction_avoidance(MS, 1.0, (0, 0, 1), samples=100, center=(1, 0, 0))
