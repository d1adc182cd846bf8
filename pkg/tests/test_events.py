import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from desplant.errors import BoundaryStateError, InputError
from desplant.events import (
    DEFAULT_EPS_T,
    PlantEvent,
    PlantSymbol,
    check_simultaneity,
    detect_events,
    event_to_symbol,
    next_crossing,
    plant_alphabet,
)
from desplant.partition import PartitionSpec, quality, signs_of
from desplant.plant import LinearField, double_integrator_field, flow

from oracles import di_crossings, di_first_crossing

DI = double_integrator_field()
AXES = PartitionSpec.affine(np.eye(2))


def _event(index, time, direction="+"):
    x = np.zeros(2)
    return PlantEvent(index, direction, time, x, x)


def test_single_upward_crossing():
    seg = flow(DI, [-1, 1], [0.0], horizon=3.0)
    (e,) = detect_events(seg, AXES)
    assert (e.index, e.direction) == (1, "+")
    assert abs(e.time - 1.0) < 1e-9
    assert abs(e.state[0]) < 1e-9


def test_segment_inside_one_cell_has_no_events():
    seg = flow(DI, [1, 1], [1.0], horizon=5.0)
    assert detect_events(seg, AXES) == []


def test_only_first_functional_crosses_under_positive_control():
    seg = flow(DI, [-1, 0.5], [1.0], horizon=5.0)
    (e,) = detect_events(seg, AXES)
    assert e.index == 1
    # -1 + 0.5 t + 0.5 t^2 = (t + 2)(t - 1)
    assert abs(e.time - 1.0) < 1e-9
    assert di_first_crossing([-1, 0.5], 1.0)[:2] == (1.0, 1)


def test_boundary_start_rejected():
    seg = flow(DI, [0.0, 1.0], [0.0], horizon=1.0)
    with pytest.raises(BoundaryStateError):
        detect_events(seg, AXES)


def test_initial_signs_allow_kernel_start():
    seg = flow(DI, [0.0, 1.0], [-1.0], horizon=3.0)
    events = detect_events(seg, AXES, initial_signs=(1, 1))
    # x2 = 1 - t crosses at t=1, then x1 = t - t^2/2 crosses at t=2
    assert [(e.index, e.direction) for e in events] == [(2, "-"), (1, "-")]
    np.testing.assert_allclose([e.time for e in events], [1.0, 2.0], atol=1e-9)


def test_initial_signs_validated():
    seg = flow(DI, [0.0, 1.0], [0.0], horizon=1.0)
    with pytest.raises(InputError):
        detect_events(seg, AXES, initial_signs=(0, 1))


def test_repeated_crossings_of_one_kernel_all_reported():
    osc = LinearField([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [0.0]])
    seg = flow(osc, [1.0, 0.1], [0.0], horizon=10.0)
    events = [e for e in detect_events(seg, AXES) if e.index == 1]
    assert len(events) == 3
    assert [e.direction for e in events] == ["-", "+", "-"]
    times = np.array([e.time for e in events])
    np.testing.assert_allclose(np.diff(times), np.pi, atol=1e-6)


def test_tangential_touch_is_not_an_event():
    # x1 = -1 + 2t - t^2 touches zero at t=1 and turns back
    seg = flow(DI, [-1.0, 2.0], [-2.0], horizon=3.0)
    events = detect_events(seg, AXES, eps_h=1e-15)
    assert [e.index for e in events] == [2]


@pytest.mark.parametrize("e, name", [((1, "+"), "z1+"), ((2, "-"), "z2-")])
def test_event_to_symbol(e, name):
    assert event_to_symbol(_event(e[0], 0.0, e[1])).name == name


def test_symbol_parsing():
    assert PlantSymbol.parse("z1+") == PlantSymbol(1, "+")
    assert PlantSymbol.parse("z_{2-}") == PlantSymbol(2, "-")
    assert PlantSymbol.parse("z_3+") == PlantSymbol(3, "+")
    for bad in ("z1", "y1+", "z0+", "z+1"):
        with pytest.raises(InputError):
            PlantSymbol.parse(bad)


@pytest.mark.parametrize("n", [1, 2, 5])
def test_symbol_mapping_is_a_bijection(n):
    pairs = list(itertools.product(range(1, n + 1), "+-"))
    names = {event_to_symbol(_event(i, 0.0, d)).name for i, d in pairs}
    assert len(names) == 2 * n
    assert names == {z.name for z in plant_alphabet(n)}
    for i, d in pairs:
        z = PlantSymbol.parse(f"z{i}{d}")
        assert (z.index, z.direction) == (i, d)


def test_simultaneous_events_ordered_by_index():
    events = [_event(3, 1.0), _event(1, 1.0 + DEFAULT_EPS_T / 2)]
    ordered, flag = check_simultaneity(events)
    assert [e.index for e in ordered] == [1, 3]
    assert flag is True


def test_separated_events_unchanged():
    events = [_event(2, 1.0), _event(1, 2.0)]
    ordered, flag = check_simultaneity(events)
    assert ordered == events
    assert flag is False


def test_simultaneity_of_nothing():
    assert check_simultaneity([]) == ([], False)


def test_crossing_through_a_corner_is_flagged():
    crossing = next_crossing(DI, [-1.0, -1.0], [1.0], AXES, horizon=5.0)
    # h2 crosses at t=1 while x1 = -1.5 there
    assert crossing.trigger.index == 2 and not crossing.simultaneous
    # straight line through the origin hits both kernels at once
    shear = LinearField([[0.0, 0.0], [0.0, 0.0]], [[1.0], [1.0]])
    crossing = next_crossing(shear, [-1.0, -1.0], [1.0], AXES, horizon=5.0)
    assert crossing.simultaneous
    assert [e.index for e in crossing.events] == [1, 2]
    assert abs(crossing.end_time - 1.0) < 1e-9


def test_next_crossing_without_event_runs_to_horizon():
    crossing = next_crossing(DI, [1.0, 1.0], [1.0], AXES, horizon=4.0)
    assert crossing.trigger is None
    assert crossing.end_time == 4.0
    np.testing.assert_allclose(crossing.end_state, [1 + 4 + 8, 5], atol=1e-9)


def test_next_crossing_spans_blocks():
    # the crossing sits well past the first integration block
    crossing = next_crossing(DI, [-10.0, 1.0], [0.0], AXES, horizon=50.0, dt=1e-3)
    assert crossing.trigger.index == 1
    assert abs(crossing.end_time - 10.0) < 1e-9


def test_sliding_along_a_kernel_is_diagnosed():
    # x2 stays on its kernel while x1 drifts towards zero
    crossing = next_crossing(DI, [-1.0, 0.0], [0.0], AXES, horizon=1.0, initial_signs=(-1, 1))
    assert crossing.sliding
    assert crossing.trigger is None


# --- properties -------------------------------------------------------------

def _random_state_in(signs, rng):
    return np.array(signs) * rng.uniform(0.05, 5.0, 2)


@pytest.mark.parametrize("signs, u", list(itertools.product(
    [(1, 1), (-1, 1), (-1, -1), (1, -1)], [-1.0, 0.0, 1.0])))
def test_localization_matches_closed_form(signs, u):
    rng = np.random.default_rng([*(s + 1 for s in signs), int(u) + 1])
    tol = max(DEFAULT_EPS_T, 1e-8)
    horizon = 20.0
    for _ in range(100):
        x0 = _random_state_in(signs, rng)
        crossing = next_crossing(DI, x0, [u], AXES, horizon=horizon)
        expected = di_first_crossing(x0, u, horizon)
        if expected is None:
            assert crossing.trigger is None
            continue
        t, i, d = expected
        e = crossing.trigger
        assert (e.index, e.direction) == (i, d), x0
        assert abs(e.time - t) < tol, (x0, e.time, t)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_direction_consistency_and_completeness(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    A = rng.normal(size=(n, n))
    A -= 0.5 * np.eye(n)
    f = LinearField(A, rng.normal(size=(n, 1)))
    count = int(rng.integers(1, 4))
    p = PartitionSpec.affine(rng.normal(size=(count, n)), rng.normal(size=count))
    x0 = rng.normal(size=n)
    if 0 in quality(p, x0):
        return
    seg = flow(f, x0, rng.normal(size=1), horizon=3.0, dt=1e-2)
    events = detect_events(seg, p)
    signs = signs_of(p.values(seg.states))
    for e in events:
        i = e.index - 1
        assert quality(p, e.post_state)[i] == e.sign
        before = [s for s, t in zip(signs[:, i], seg.times) if t < e.time and s != 0]
        assert before[-1] == -e.sign
        assert seg.times[0] <= e.time <= seg.times[-1]
    for i in range(p.size):
        col = signs[:, i][signs[:, i] != 0]
        strict_changes = int(np.sum(col[1:] != col[:-1]))
        assert strict_changes == sum(e.index == i + 1 for e in events)


def test_oracle_agrees_on_known_crossings():
    assert di_crossings([-1.0, 1.0], 0.0, 5.0) == [(1.0, 1, "+")]
    assert di_crossings([1.0, 1.0], 1.0, 5.0) == []
    (t, i, d), = di_crossings([-1.0, -1.0], 1.0, 1.5)
    assert (t, i, d) == (1.0, 2, "+")
