import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from desplant.errors import DivergenceError, InputError
from desplant.plant import (
    BUILTIN_FIELDS,
    ControlAlphabet,
    ControlSchedule,
    LinearField,
    actuate,
    builtin_field,
    closed_form_double_integrator,
    double_integrator_field,
    flow,
    flow_schedule,
    integrate_step,
    march,
)

from oracles import di_state

DI = double_integrator_field()


@pytest.mark.parametrize("r, u", [("r1", -1.0), ("r2", 0.0), ("r3", 1.0)])
def test_actuate_double_integrator_alphabet(di_system, r, u):
    assert actuate(di_system.controls, r).tolist() == [u]


def test_actuate_unknown_symbol(di_system):
    with pytest.raises(InputError):
        actuate(di_system.controls, "r9")


def test_act_is_a_bijection(di_system):
    for r in di_system.controls.symbols:
        assert di_system.controls.symbol_of(actuate(di_system.controls, r)) == r


@pytest.mark.parametrize("entries", [
    (("r1", (1.0,)), ("r1", (2.0,))),
    (("r1", (1.0,)), ("r2", (1.0,))),
    (),
])
def test_alphabet_must_be_bijective(entries):
    with pytest.raises(InputError):
        ControlAlphabet(entries)


def test_rk4_step_exact_on_double_integrator():
    np.testing.assert_array_equal(integrate_step(DI, [0, 0], [1], 1.0), [0.5, 1.0])
    np.testing.assert_array_equal(integrate_step(DI, [1, 2], [0], 3.0), [7.0, 2.0])


def test_rk4_step_rejects_nonpositive_dt():
    with pytest.raises(InputError):
        integrate_step(DI, [0, 0], [1], 0.0)


def test_divergence_is_reported():
    blowup = LinearField([[50.0]], [[0.0]])
    with pytest.raises(DivergenceError):
        flow(blowup, [1.0], [0.0], horizon=100.0, dt=0.01)
    with pytest.raises(DivergenceError):
        integrate_step(blowup, [1e308], [0.0], 1.0)


def test_rk4_matches_classical_scheme_on_nonlinear_field():
    # compare against a hand-written RK4 on dx/dt = -x^3
    from desplant.plant import BuiltinField
    f = BuiltinField("cubic", lambda x, u: -x ** 3 + u, 1, 1)
    x, h = np.array([1.3]), 0.1
    k1 = -x ** 3
    k2 = -(x + h / 2 * k1) ** 3
    k3 = -(x + h / 2 * k2) ** 3
    k4 = -(x + h * k3) ** 3
    expected = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    np.testing.assert_allclose(integrate_step(f, x, [0.0], h), expected, rtol=0, atol=1e-15)


@pytest.mark.parametrize("u, invariant", [
    (1.0, lambda s: s[:, 0] - s[:, 1] ** 2 / 2),
    (-1.0, lambda s: s[:, 0] + s[:, 1] ** 2 / 2),
    (0.0, lambda s: s[:, 1]),
])
def test_flow_follows_integral_curves(u, invariant):
    seg = flow(DI, [-1, 0.5], [u], horizon=2.0, dt=0.01)
    k = invariant(seg.states)
    assert np.max(np.abs(k - k[0])) < 1e-9


def test_flow_single_step_has_two_samples():
    seg = flow(DI, [0.3, 0.1], [1.0], horizon=0.01, dt=0.01)
    assert len(seg) == 2
    assert seg.times.tolist() == [0.0, 0.01]


def test_flow_sample_layout():
    seg = flow(DI, [1, 2], [0.0], horizon=0.35, dt=0.1, t0=2.0)
    assert seg.start_time == 2.0
    np.testing.assert_array_equal(seg.start_state, [1, 2])
    np.testing.assert_allclose(seg.times, [2.0, 2.1, 2.2, 2.3, 2.35], atol=1e-15)
    assert np.all(np.diff(seg.times) > 0)
    assert seg.times[-1] >= 2.0 + 0.35


@pytest.mark.parametrize("x0, u, t, expected", [
    ([0, 0], 1, 2, [2, 2]),
    ([3, -1], 0, 4, [-1, -1]),
    ([-1, 0.5], 1, 0, [-1, 0.5]),
])
def test_closed_form(x0, u, t, expected):
    np.testing.assert_array_equal(closed_form_double_integrator(x0, u, t), expected)


def test_closed_form_agrees_with_independent_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        x0, u, t = rng.uniform(-5, 5, 2), rng.choice([-1, 0, 1]), rng.uniform(0, 10)
        np.testing.assert_allclose(closed_form_double_integrator(x0, u, t), di_state(x0, u, t), atol=1e-12)


@pytest.mark.parametrize("horizon", [1.0, 10.0, 100.0])
def test_flow_matches_closed_form_over_long_horizons(horizon):
    rng = np.random.default_rng(int(horizon))
    for _ in range(5):
        x0, u = rng.uniform(-5, 5, 2), rng.choice([-1.0, 0.0, 1.0])
        seg = flow(DI, x0, [u], horizon=horizon, dt=1e-3)
        expected = np.stack([closed_form_double_integrator(x0, u, t - seg.start_time) for t in seg.times[::97]])
        np.testing.assert_allclose(seg.states[::97], expected, rtol=0, atol=1e-9)


def test_block_stepping_equals_stepwise_rk4():
    rng = np.random.default_rng(11)
    for _ in range(5):
        f = LinearField(rng.normal(size=(3, 3)) * 0.5, rng.normal(size=(3, 2)))
        x0, u = rng.normal(size=3), rng.normal(size=2)
        seg = flow(f, x0, u, horizon=0.5, dt=1e-3)
        x = x0
        for k in range(1, len(seg)):
            x = integrate_step(f, x, u, seg.times[k] - seg.times[k - 1])
            np.testing.assert_allclose(seg.states[k], x, rtol=1e-12, atol=1e-12)


def test_march_blocks_overlap_by_one_sample():
    blocks = list(march(DI, [0, 1], [0.0], horizon=5.0, dt=1e-3, chunk=1000))
    assert len(blocks) == 5
    for (t_a, s_a), (t_b, s_b) in zip(blocks, blocks[1:]):
        assert t_a[-1] == t_b[0]
        np.testing.assert_array_equal(s_a[-1], s_b[0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_linear_field_evaluation(n, m, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(n, n)), rng.normal(size=(n, m))
    x, u = rng.normal(size=n), rng.normal(size=m)
    expected = [sum(A[i, j] * x[j] for j in range(n)) + sum(B[i, j] * u[j] for j in range(m)) for i in range(n)]
    np.testing.assert_allclose(LinearField(A, B)(x, u), expected, rtol=1e-12, atol=1e-12)


def test_linear_field_shape_checks():
    with pytest.raises(InputError):
        LinearField([[1, 2]], [[1]])
    with pytest.raises(InputError):
        LinearField([[1, 0], [0, 1]], [[1]])


def test_builtins():
    assert builtin_field("double_integrator") == DI
    with pytest.raises(InputError):
        builtin_field("nope")
    pend = BUILTIN_FIELDS["pendulum"]()
    seg = flow(pend, [0.5, 0.0], [0.0], horizon=2.0, dt=1e-3)
    energy = 0.5 * seg.states[:, 1] ** 2 - np.cos(seg.states[:, 0])
    assert np.max(np.abs(energy - energy[0])) < 1e-10


def test_single_entry_schedule_equals_constant_flow(di_system):
    x0 = [-1.0, 0.5]
    schedule = ControlSchedule((("r3", 0.0),))
    (seg,) = flow_schedule(DI, di_system.controls, x0, schedule, until=2.0, dt=1e-3)
    ref = flow(DI, x0, [1.0], horizon=2.0, dt=1e-3)
    np.testing.assert_array_equal(seg.states, ref.states)
    np.testing.assert_array_equal(seg.times, ref.times)


def test_schedule_switches_control(di_system):
    schedule = ControlSchedule((("r3", 0.0), ("r1", 1.0)))
    segs = flow_schedule(DI, di_system.controls, [0.0, 0.0], schedule, until=2.0, dt=1e-3)
    assert [s.control.tolist() for s in segs] == [[1.0], [-1.0]]
    end = closed_form_double_integrator(closed_form_double_integrator([0, 0], 1, 1), -1, 1)
    np.testing.assert_allclose(segs[-1].states[-1], end, atol=1e-12)
    assert schedule.value_at(di_system.controls, 0.5).tolist() == [1.0]
    assert schedule.value_at(di_system.controls, 1.0).tolist() == [-1.0]


def test_schedule_times_strictly_increasing():
    with pytest.raises(InputError):
        ControlSchedule((("r1", 0.0), ("r2", 0.0)))
