import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecodrive.traffic import (PassSchedule, RouteSpec, ScheduleError, Signal, TrafficLight,
                              compute_windows, green_wave, is_green, route4, segment_context,
                              signal_at, table1_light)

durations = st.integers(1, 40)


@pytest.mark.parametrize("t, want", [(0, Signal.GREEN), (24, Signal.GREEN), (27, Signal.YELLOW),
                                     (40, Signal.RED), (55, Signal.GREEN)])
def test_table1_signal_timeline(t, want):
    assert signal_at(table1_light(), t) is want


@settings(max_examples=50, deadline=None)
@given(durations, st.integers(0, 10), durations, st.integers(0, 200))
def test_signal_is_periodic(g, y, r, t):
    light = TrafficLight(0.0, g, y, r, 0.0)
    assert signal_at(light, t) is signal_at(light, t + light.cycle)


def test_no_yellow_light_never_yellow():
    light = TrafficLight(0.0, 10, 0, 5)
    assert all(signal_at(light, t) is not Signal.YELLOW for t in range(100))


def test_light_validation():
    with pytest.raises(ValueError):
        TrafficLight(0.0, 0, 3, 5)
    with pytest.raises(ValueError):
        TrafficLight(0.0, 10, 3, 5, phase_offset=18)


def test_windows_all_green():
    assert compute_windows(0, 5, table1_light(), 20) == (None, 15)


def test_windows_red_until_30():
    # red on [0, 30), green from 30 on
    light = TrafficLight(0.0, 40, 0, 30, 40.0)
    assert not is_green(light, 29) and is_green(light, 30)
    assert compute_windows(0, 5, light, 40) == (25, 35)


def test_windows_deadline_inside_horizon():
    with pytest.raises(ScheduleError, match="deadline inside horizon"):
        compute_windows(16, 5, table1_light(), 20)


@settings(max_examples=100, deadline=None)
@given(durations, st.integers(0, 5), durations, st.integers(0, 200), st.integers(0, 100))
def test_window_onset_is_first_green(g, y, r, off, k):
    light = TrafficLight(0.0, g, y, r, off % (g + y + r))
    kp = next(t for t in range(k + 5, k + 5 + 3 * light.cycle) if is_green(light, t))
    if kp > k + 5 and not is_green(light, kp - 1):
        # green starts exactly at the deadline: no room for t_red < t_green
        with pytest.raises(ScheduleError, match="infeasible"):
            compute_windows(k, 5, light, kp)
        return
    t_red, t_green = compute_windows(k, 5, light, kp)
    assert t_green == kp - k - 5
    if t_red is not None:
        onset = k + 5 + t_red
        assert is_green(light, onset) and not is_green(light, onset - 1)
        assert 1 <= t_red <= t_green
    else:
        assert all(is_green(light, t) for t in range(k + 5, kp + 1))


def test_green_wave_on_route4():
    route, ref = route4()
    sched = green_wave(route)
    assert len(sched.k_pass) == 4
    assert all(a <= b for a, b in zip(sched.k_pass, ref.k_pass))
    assert all(is_green(l, k) for l, k in zip(route.lights, sched.k_pass))


def test_route4_reference_schedule_is_green():
    route, sched = route4()
    sched.validate(route)
    # constant 5 m/s meets each light inside its green phase
    assert all(is_green(l, int(l.s_tl / 5.0)) for l in route.lights)


def test_green_wave_always_green_light():
    route = RouteSpec((TrafficLight(100.0, 1000, 0, 1, 0.0),), 120.0)
    sched = green_wave(route, margin=2)
    # 49 m to reach 14 m/s in 7 s, then 51 m at 14 m/s: 10.64 s
    assert sched.k_pass == (11,)


def test_green_wave_without_green_fails():
    route = RouteSpec((TrafficLight(100.0, 1, 0, 10_000, 1.0),), 120.0)
    with pytest.raises(ScheduleError, match="no green wave"):
        green_wave(route)


@pytest.mark.parametrize("s_hat, moved", [(193.0, True), (191.0, False)])
def test_segment_transition_rule(s_hat, moved):
    route, sched = route4()
    ctx = segment_context(route, sched, 0, 30, s_hat)
    assert (ctx.light_index == 1) is moved


def test_route_complete_after_goal():
    route, sched = route4()
    ctx = segment_context(route, sched, 4, 150, route.goal_s + 3.0)
    assert ctx.route_complete
    assert not segment_context(route, sched, 4, 150, route.goal_s + 2.0).route_complete


def test_schedule_validation():
    route, _ = route4()
    with pytest.raises(ValueError):
        PassSchedule((3, 2))
    with pytest.raises(ValueError):
        PassSchedule((43, 81, 103)).validate(route)
    with pytest.raises(ValueError, match="not green"):
        PassSchedule((43, 81, 103, 130)).validate(route)


def test_route_json_round_trip():
    route, sched = route4()
    assert RouteSpec.from_json(json.loads(json.dumps(route.to_json()))) == route
    assert PassSchedule.from_json(sched.to_json()) == sched


def test_route_validation():
    l1, l2 = TrafficLight(10.0, 5, 1, 5), TrafficLight(5.0, 5, 1, 5)
    with pytest.raises(ValueError):
        RouteSpec((l1, l2), 20.0)
    with pytest.raises(ValueError):
        RouteSpec((l2,), 0.0)
