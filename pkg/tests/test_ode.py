import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from oscitopo.errors import DomainError, IntegrationError
from oscitopo.fields import SystemParams, eval_field
from oscitopo.ode import (
    Direction,
    FateTag,
    IntegratorConfig,
    classify_fate,
    integrate,
    locate_event,
    solve,
)

NH1 = SystemParams.nose_hoover(1.0)
MS = SystemParams.moore_spiegel(27.0, 100.0)
HOPF = SystemParams.hopf()


def _y(s):
    return s[..., 1]


def test_invariant_line():
    traj = integrate(NH1, (0, 0, 5), (0, 10))
    assert np.abs(traj.states[:, :2]).max() < 1e-9
    assert np.abs(traj.states[:, 2] - (5 - traj.t)).max() < 1e-8
    mid = traj(np.linspace(0, 10, 101))
    assert np.abs(mid[:, 2] - (5 - np.linspace(0, 10, 101))).max() < 1e-8


def test_hopf_converges_to_unit_circle():
    traj = integrate(HOPF, (1e-2, 0, 0.5), (0, 60))
    late = traj.states[traj.t >= 50]
    assert np.abs(np.hypot(late[:, 0], late[:, 1]) - 1).max() < 1e-6
    assert np.abs(late[:, 2]).max() < 1e-6


def test_hopf_event_period():
    traj = integrate(HOPF, (1, 0, 0), (0, 40))
    hits = locate_event(traj, lambda s: s[..., 0], Direction.RISING)
    gaps = np.diff([h.t for h in hits])
    assert len(gaps) >= 4
    assert np.abs(gaps - 2 * math.pi).max() < 1e-8


def test_start_time_event_excluded():
    traj = integrate(HOPF, (1, 0, 0), (0, 10))
    hits = locate_event(traj, _y, Direction.RISING)
    assert hits[0].t > 0
    assert hits[0].t == pytest.approx(2 * math.pi, abs=1e-8)


def test_event_residual_and_direction():
    traj = integrate(NH1, (1, 0, 0), (0, 50))
    up = locate_event(traj, _y, Direction.RISING)
    down = locate_event(traj, _y, Direction.FALLING)
    both = locate_event(traj, _y, Direction.ANY)
    assert len(both) == len(up) + len(down)
    assert all(abs(h.state[1]) < 1e-12 for h in both)
    assert all(eval_field(NH1, h.state)[1] > 0 for h in up)
    assert all(eval_field(NH1, h.state)[1] < 0 for h in down)


def _rk4_first_falling_crossing(s0, h=1e-3):
    f = lambda s: eval_field(NH1, s)  # noqa: E731

    def step(s, dt):
        k1 = f(s)
        k2 = f(s + dt / 2 * k1)
        k3 = f(s + dt / 2 * k2)
        k4 = f(s + dt * k3)
        return s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    s, t = np.array(s0, float), 0.0
    while True:
        nxt = step(s, h)
        if s[1] > 0 and nxt[1] <= 0:
            break
        s, t = nxt, t + h
    lo, hi = 0.0, h
    for _ in range(60):
        mid = (lo + hi) / 2
        if step(s, mid)[1] > 0:
            lo = mid
        else:
            hi = mid
    return t + lo


def test_event_matches_fixed_step_oracle():
    traj = integrate(NH1, (-1, 1, 0), (0, 20))
    hit = locate_event(traj, _y, Direction.FALLING)[0]
    assert hit.t == pytest.approx(_rk4_first_falling_crossing((-1, 1, 0)), abs=1e-6)


def test_matches_reference_solver():
    s0 = (0.3, -0.2, 0.1)
    ref = solve_ivp(lambda t, s: eval_field(MS, s), (0, 5), s0, method="DOP853", rtol=1e-13, atol=1e-14,
                    dense_output=True)
    traj = integrate(MS, s0, (0, 5))
    ts = np.linspace(0, 5, 37)
    np.testing.assert_allclose(traj(ts), ref.sol(ts).T, atol=1e-7)


def test_samples_are_bit_exact_and_immutable():
    traj = integrate(MS, (0.1, 0, 0), (0, 20))
    np.testing.assert_array_equal(traj(traj.t), traj.y)
    assert np.array_equal(traj(traj.t[17]), traj.y[17])
    with pytest.raises(ValueError):
        traj.y[0, 0] = 1.0


def test_runs_are_deterministic():
    a = integrate(NH1, (1, 0, 0), (0, 30))
    b = integrate(NH1, (1, 0, 0), (0, 30))
    assert np.array_equal(a.t, b.t) and np.array_equal(a.y, b.y)
    ea = [h.t for h in locate_event(a, _y)]
    eb = [h.t for h in locate_event(b, _y)]
    assert ea == eb


@pytest.mark.parametrize("params, s0", [(NH1, (1, 0, 0)), (MS, (0.1, 0, 0)), (HOPF, (0.2, 0.1, 1))])
def test_tolerance_halving_converges(params, s0):
    cfg = IntegratorConfig(rel_tol=1e-9, abs_tol=1e-11)
    half = cfg.replace(rel_tol=5e-10, abs_tol=5e-12)
    a = integrate(params, s0, (0, 5), cfg).final_state()
    b = integrate(params, s0, (0, 5), half).final_state()
    assert np.abs(a - b).max() < 10 * cfg.rel_tol * max(1.0, np.abs(a).max())


def test_nose_hoover_time_reversal():
    rng = np.random.default_rng(7)
    ts = np.linspace(0, 20, 41)
    for _ in range(20):
        x, y, z = rng.uniform(-1.5, 1.5, 3)
        fwd = integrate(NH1, (x, y, z), (0, 20))
        bwd = integrate(NH1, (x, -y, -z), (0, 20), reverse=True)
        mapped = fwd(ts) * np.array([1, -1, -1])
        assert np.abs(mapped - bwd(ts)).max() < 1e-7


def test_reverse_undoes_forward():
    fwd = integrate(NH1, (0.5, 0.2, -0.1), (0, 5))
    back = integrate(NH1, fwd.final_state(), (0, 5), reverse=True)
    np.testing.assert_allclose(back.final_state(), (0.5, 0.2, -0.1), atol=1e-9)


def test_escape_terminates_early():
    params = SystemParams.custom_field("xdot = x^2\nydot = 0\nzdot = 0\n")
    traj = integrate(params, (1, 0, 0), (0, 2))
    assert traj.fate.tag is FateTag.ESCAPED
    assert traj.t_end < 1.0
    norms = np.linalg.norm(traj.states, axis=1)
    assert norms[-1] >= 1e3 > norms[-2]


def test_step_budget_failure_carries_partial_trajectory():
    with pytest.raises(IntegrationError) as info:
        integrate(MS, (0.1, 0, 0), (0, 100), IntegratorConfig(max_steps=50))
    assert info.value.partial.n_steps > 0


def test_invalid_inputs():
    with pytest.raises(DomainError):
        integrate(NH1, (0, 0), (0, 1))
    with pytest.raises(DomainError):
        integrate(NH1, (0, 0, 0), (1, 0))
    with pytest.raises(DomainError):
        IntegratorConfig(rel_tol=0.0)
    traj = integrate(NH1, (1, 0, 0), (0, 1))
    with pytest.raises(DomainError):
        traj(2.0)


def test_solve_terminal_event():
    (t, y, f, dense), stop = solve(lambda s: np.array([1.0, -s[1]]), [0.0, 1.0], (0, 10),
                                   IntegratorConfig(), terminal=[(lambda s: s[0] - 2.5, Direction.RISING)])
    assert stop == ("terminal", 0)
    assert t[-2] < 2.5 <= t[-1]


@pytest.mark.parametrize(
    "params, s0, tag",
    [
        (NH1, (0, 0, 5), FateTag.ON_INVARIANT_LINE),
        (NH1, (1, 0, 0), FateTag.BOUNDED),
        (MS, (0.1, 0, 0), FateTag.BOUNDED),
        (SystemParams.custom_field("xdot = -x\nydot = -y\nzdot = -z\n"), (1, 1, 1), FateTag.CONVERGED),
        (SystemParams.custom_field("xdot = x\nydot = 0\nzdot = 0\n"), (1, 0, 0), FateTag.ESCAPED),
    ],
)
def test_classify_fate(params, s0, tag):
    assert classify_fate(params, s0).tag is tag


def test_invariant_line_orbit_escapes_downward():
    traj = integrate(NH1, (0, 0, 5), (0, 2000), IntegratorConfig(max_step=10.0))
    assert traj.fate.tag is FateTag.ESCAPED
    assert traj.final_state()[2] < -900
