import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oscitopo.errors import DomainError, PreconditionError, UnsupportedOperationError
from oscitopo.fields import (
    SphericalDirection,
    SystemKind,
    SystemParams,
    divergence,
    eval_field,
    eval_jacobian,
    fixed_points,
    invariant_lines,
    known_fixed_points,
    radial_asymptotic_coefficient,
    radial_component,
    radial_polynomial_leading_part,
    section_normal_component,
)
from oscitopo.topo.spectrum import SpectrumType

NH1 = SystemParams.nose_hoover(1.0)
MS = SystemParams.moore_spiegel(27.0, 100.0)
HOPF = SystemParams.hopf()
finite = st.floats(-50, 50, allow_nan=False)
states = st.tuples(finite, finite, finite)


@pytest.mark.parametrize(
    "params, s, expected",
    [
        (NH1, (0, 0, 5), (0, 0, -1)),
        (SystemParams.nose_hoover(2.0), (1, 1, 1), (1, -2, 0)),
        (MS, (0, 0, 0), (0, 0, 0)),
        (SystemParams.moore_spiegel(1.0, 1.0), (1, 0, 0), (0, 0, -1)),
        (HOPF, (1, 0, 2), (0, 1, -2)),
    ],
)
def test_eval_field_examples(params, s, expected):
    np.testing.assert_array_equal(eval_field(params, s), expected)


def test_jacobian_examples():
    np.testing.assert_array_equal(eval_jacobian(MS, (0, 0, 0)), [[0, 1, 0], [0, 0, 1], [-27, 73, -1]])
    np.testing.assert_array_equal(eval_jacobian(NH1, (0, 0, 3)), [[0, 1, 0], [-1, -3, 0], [0, 0, 0]])


def test_non_finite_state_rejected():
    with pytest.raises(DomainError):
        eval_field(NH1, (0, np.nan, 0))
    with pytest.raises(DomainError):
        eval_jacobian(MS, (np.inf, 0, 0))


def test_invalid_parameters_rejected():
    with pytest.raises(DomainError):
        SystemParams.nose_hoover(0.0)
    with pytest.raises(DomainError):
        SystemParams.hopf(mu=-1.0)
    with pytest.raises(DomainError):
        SphericalDirection(4.0, 0.0)
    with pytest.raises(DomainError):
        SphericalDirection(1.0, 2 * math.pi)


def test_batched_evaluation_matches_pointwise():
    rng = np.random.default_rng(1)
    s = rng.normal(size=(5, 7, 3)) * 4
    F = eval_field(MS, s)
    J = eval_jacobian(MS, s)
    assert F.shape == (5, 7, 3) and J.shape == (5, 7, 3, 3)
    np.testing.assert_array_equal(F[3, 2], eval_field(MS, s[3, 2]))
    np.testing.assert_array_equal(J[4, 6], eval_jacobian(MS, s[4, 6]))


@settings(max_examples=40, deadline=None)
@given(states, st.sampled_from([NH1, SystemParams.nose_hoover(0.1), MS, HOPF]))
def test_jacobian_matches_central_differences(s, params):
    s = np.array(s)
    h = 1e-5 * max(1.0, np.abs(s).max())
    fd = np.empty((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd[:, j] = (eval_field(params, s + e) - eval_field(params, s - e)) / (2 * h)
    scale = max(1.0, np.abs(fd).max())
    np.testing.assert_allclose(eval_jacobian(params, s), fd, atol=1e-6 * scale)


@settings(max_examples=50, deadline=None)
@given(states)
def test_moore_spiegel_is_odd(s):
    s = np.array(s)
    np.testing.assert_array_equal(eval_field(MS, -s), -eval_field(MS, s))


@settings(max_examples=50, deadline=None)
@given(states, st.floats(0.1, 100), st.floats(0.1, 100))
def test_moore_spiegel_divergence_is_minus_one(s, T, R):
    assert divergence(SystemParams.moore_spiegel(T, R), s) == -1.0


@settings(max_examples=50, deadline=None)
@given(states, st.floats(0.05, 20))
def test_nose_hoover_never_vanishes(s, Q):
    F = eval_field(SystemParams.nose_hoover(Q), s)
    # either |x'| = |y| >= 1/2, or y^2 <= 1/4 and |z'| >= 3/(4Q)
    assert max(abs(F[0]), abs(F[2])) >= min(0.5, 0.75 / Q) * (1 - 1e-12)


@pytest.mark.parametrize("Q", [0.1, 1.0, 10.0])
def test_nose_hoover_has_no_fixed_points(Q):
    assert fixed_points(SystemParams.nose_hoover(Q)) == []


@pytest.mark.parametrize("T, R", [(27.0, 100.0), (39.25, 100.0), (1.0, 1.0)])
def test_moore_spiegel_single_fixed_point(T, R):
    found = fixed_points(SystemParams.moore_spiegel(T, R))
    assert len(found) == 1
    p, spec = found[0]
    assert np.linalg.norm(p) < 1e-12
    assert spec.rh_triple == (1.0, -R, T)


def test_fixed_points_of_custom_field_are_classified():
    params = SystemParams.custom_field("xdot = x^2 - 1\nydot = -y\nzdot = -z\n")
    found = sorted(fixed_points(params), key=lambda item: item[0][0])
    assert [round(p[0], 10) for p, _ in found] == [-1.0, 1.0]
    assert found[0][1].cls is SpectrumType.SINK
    assert found[1][1].cls is SpectrumType.REAL_SADDLE


def test_known_fixed_points_and_invariant_lines():
    assert len(known_fixed_points(MS)) == 1
    assert known_fixed_points(NH1) == []
    (line,) = invariant_lines(NH1)
    assert line.distance((0, 0, 17)) == 0.0
    assert invariant_lines(MS) == []


def test_radial_component_examples():
    for Q in (0.5, 1.0, 4.0):
        p = SystemParams.nose_hoover(Q)
        assert radial_component(p, 7.0, SphericalDirection(0.0, 0.0)) == pytest.approx(-1 / Q)
        assert radial_component(p, 7.0, SphericalDirection(math.pi / 2, 0.0)) == pytest.approx(0.0, abs=1e-12)


def test_radial_component_rejects_nonpositive_radius():
    with pytest.raises(DomainError):
        radial_component(NH1, 0.0, SphericalDirection(1.0, 1.0))


def test_nose_hoover_leading_term_from_expansion():
    # p.F = z y^2 (1/Q - 1) - z/Q; the quadratic part cancels at Q = 1
    d = SphericalDirection(math.pi / 4, math.pi / 2)
    c, order = radial_asymptotic_coefficient(SystemParams.nose_hoover(2.0), d)
    assert order == 2
    assert c == pytest.approx(math.cos(math.pi / 4) * math.sin(math.pi / 4) ** 2 * (0.5 - 1.0))
    c1, order1 = radial_asymptotic_coefficient(NH1, d)
    assert order1 == 0
    assert c1 == pytest.approx(-math.cos(math.pi / 4))


def test_moore_spiegel_leading_term_closed_form():
    rng = np.random.default_rng(2)
    th = rng.uniform(0, math.pi, 50)
    ps = rng.uniform(0, 2 * math.pi, 50)
    c, order = radial_asymptotic_coefficient(MS, (th, ps))
    expected = -100.0 * np.sin(th) ** 3 * np.cos(ps) ** 2 * np.sin(ps) * np.cos(th)
    assert order == 3
    np.testing.assert_allclose(c, expected, atol=1e-12)
    c0, _ = radial_asymptotic_coefficient(MS, SphericalDirection(1.0, 0.0))
    assert c0 == 0.0
    terms, _ = radial_polynomial_leading_part(MS)
    assert terms == {(2, 1, 1): -100.0}


def test_radial_asymptotics_unsupported_for_other_kinds():
    with pytest.raises(UnsupportedOperationError):
        radial_asymptotic_coefficient(HOPF, SphericalDirection(1.0, 1.0))


@pytest.mark.parametrize("params", [SystemParams.nose_hoover(0.1), MS])
def test_radial_error_shrinks_with_radius(params):
    th, ps = np.meshgrid(np.linspace(0, math.pi, 32), np.linspace(0, 2 * math.pi, 64, endpoint=False),
                         indexing="ij")
    coef, order = radial_asymptotic_coefficient(params, (th, ps))
    mask = np.abs(coef) > 0.1 * np.abs(coef).max()
    errs = []
    for r in (1e3, 1e4, 1e5):
        v = radial_component(params, r, (th, ps)) / r**order
        errs.append(np.abs(v - coef)[mask].max() / np.abs(coef).max())
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_section_normal_component():
    assert section_normal_component(NH1, (-3, 0, 7)) == 3.0
    assert section_normal_component(MS, (5, 0, -2)) == -2.0
    with pytest.raises(PreconditionError):
        section_normal_component(NH1, (0, 0.1, 0))


def test_params_round_trip():
    src = "xdot = y\nydot = -a*x\nzdot = 0\na = 2\n"
    for p in (NH1, MS, HOPF, SystemParams.custom_field(src, a=3.0)):
        assert SystemParams.from_dict(p.to_dict()) == p
    assert SystemParams.custom_field(src).env == {"a": 2.0}
    assert MS.kind is SystemKind.MOORE_SPIEGEL
    assert MS.label() == "moore-spiegel(T=27.0, R=100.0)"
