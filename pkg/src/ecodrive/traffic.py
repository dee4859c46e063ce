"""Route segments, deterministic signal timelines and pass-time windows."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional


class Signal(str, enum.Enum):
    GREEN = "Green"
    YELLOW = "Yellow"
    RED = "Red"


@dataclass(frozen=True)
class TrafficLight:
    s_tl: float
    green_dur: float
    yellow_dur: float
    red_dur: float
    phase_offset: float = 0.0

    def __post_init__(self):
        if self.green_dur <= 0 or self.red_dur <= 0 or self.yellow_dur < 0:
            raise ValueError("green/red durations must be > 0 and yellow >= 0")
        if not 0 <= self.phase_offset < self.cycle:
            raise ValueError(f"phase offset must lie in [0, {self.cycle})")

    @property
    def cycle(self) -> float:
        return self.green_dur + self.yellow_dur + self.red_dur

    def phase(self, t: float) -> float:
        return (t + self.phase_offset) % self.cycle

    def to_json(self) -> dict:
        return {"s_tl": self.s_tl, "green": self.green_dur, "yellow": self.yellow_dur,
                "red": self.red_dur, "offset": self.phase_offset}

    @classmethod
    def from_json(cls, d: dict) -> "TrafficLight":
        return cls(float(d["s_tl"]), float(d["green"]), float(d["yellow"]),
                   float(d["red"]), float(d.get("offset", 0.0)))


def signal_at(light: TrafficLight, t: float) -> Signal:
    if t < 0:
        raise ValueError("time must be nonnegative")
    tau = light.phase(t)
    if tau < light.green_dur:
        return Signal.GREEN
    if tau < light.green_dur + light.yellow_dur:
        return Signal.YELLOW
    return Signal.RED


def remaining_in_phase(light: TrafficLight, t: float) -> float:
    tau = light.phase(t)
    g, y = light.green_dur, light.yellow_dur
    if tau < g:
        return g - tau
    if tau < g + y:
        return g + y - tau
    return light.cycle - tau


def is_green(light: TrafficLight, t: int) -> bool:
    return signal_at(light, t) is Signal.GREEN


@dataclass(frozen=True)
class RouteSpec:
    lights: tuple
    goal_s: float
    v_max: float = 14.0
    a_min: float = -3.0
    a_max: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "lights", tuple(self.lights))
        pos = [l.s_tl for l in self.lights]
        if any(b <= a for a, b in zip(pos, pos[1:])):
            raise ValueError("light positions must be strictly increasing")
        if not self.goal_s > 0:
            raise ValueError("goal_s must be positive")
        if not self.a_min < 0 < self.a_max:
            raise ValueError("need a_min < 0 < a_max")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")

    def to_json(self) -> dict:
        return {"lights": [l.to_json() for l in self.lights], "goal_s": self.goal_s,
                "v_max": self.v_max, "a_min": self.a_min, "a_max": self.a_max}

    @classmethod
    def from_json(cls, d: dict) -> "RouteSpec":
        return cls(tuple(TrafficLight.from_json(x) for x in d["lights"]), float(d["goal_s"]),
                   float(d.get("v_max", 14.0)), float(d.get("a_min", -3.0)),
                   float(d.get("a_max", 2.0)))


@dataclass(frozen=True)
class PassSchedule:
    k_pass: tuple

    def __post_init__(self):
        ks = tuple(int(k) for k in self.k_pass)
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("pass schedule must be strictly increasing")
        object.__setattr__(self, "k_pass", ks)

    def validate(self, route: RouteSpec) -> None:
        if len(self.k_pass) != len(route.lights):
            raise ValueError("one pass time per light required")
        for light, k in zip(route.lights, self.k_pass):
            if not is_green(light, k):
                raise ValueError(f"k_pass={k} is not green for light at {light.s_tl} m")

    def to_json(self) -> dict:
        return {"k_pass": list(self.k_pass)}

    @classmethod
    def from_json(cls, d: dict) -> "PassSchedule":
        return cls(tuple(d["k_pass"]))


class ScheduleError(ValueError):
    pass


def compute_windows(k: int, N: int, light: TrafficLight, k_pass: int) -> tuple[Optional[int], int]:
    """Horizon-relative (t_red, t_green) for the terminal sets.

    t_green counts steps from the end of the horizon to the pass deadline.
    t_red, when not None, counts steps from the end of the horizon to the
    onset of the green phase that contains k_pass; it is None when the
    whole window from k+N to k_pass is already green.
    """
    start = k + N
    if start > k_pass:
        raise ScheduleError("deadline inside horizon")
    t_green = k_pass - start
    last_blocked = None
    for t in range(k_pass, start - 1, -1):
        if not is_green(light, t):
            last_blocked = t
            break
    if last_blocked is None:
        return None, t_green
    g = last_blocked + 1
    if g >= k_pass:
        raise ScheduleError("infeasible schedule: no green window before k_pass")
    return g - start, t_green


def _earliest_arrival(dist: float, v0: float, v_max: float, a_max: float) -> float:
    v0 = min(v0, v_max)
    t_acc = (v_max - v0) / a_max
    d_acc = v0 * t_acc + 0.5 * a_max * t_acc**2
    if d_acc >= dist:
        # solve v0 t + a t^2 / 2 = dist
        return (-v0 + math.sqrt(v0 * v0 + 2 * a_max * dist)) / a_max
    return t_acc + (dist - d_acc) / v_max


def green_wave(route: RouteSpec, t0: float = 0.0, v_cruise_hint: float = 5.0,
               margin: int = 2, v_crawl: float = 1.0, s0: float = 0.0,
               v0: float = 0.0) -> PassSchedule:
    """Greedy earliest-green pass times, light by light."""
    t_prev, s_prev, v_prev = t0, s0, v0
    ks = []
    for light in route.lights:
        dist = light.s_tl - s_prev
        if dist <= 0:
            raise ScheduleError("light behind the start position")
        t_lo = t_prev + _earliest_arrival(dist, v_prev, route.v_max, route.a_max)
        t_hi = t_prev + dist / v_crawl
        k = math.ceil(t_lo)
        found = None
        while k <= t_hi:
            if all(is_green(light, t) for t in range(max(0, k - margin), k + margin + 1)):
                found = k
                break
            k += 1
        if found is None:
            raise ScheduleError(f"no green wave for light at {light.s_tl} m")
        ks.append(found)
        t_prev, s_prev, v_prev = found, light.s_tl, min(v_cruise_hint, route.v_max)
    return PassSchedule(tuple(ks))


@dataclass(frozen=True)
class SegmentContext:
    light_index: int
    light: Optional[TrafficLight]
    signal: Optional[Signal]
    remaining: float
    distance: float
    k_pass: Optional[int]
    t_red: Optional[int]
    t_green: Optional[int]
    deadline_in_horizon: bool = False
    route_complete: bool = False
    k: int = 0

    @property
    def s_tl(self) -> Optional[float]:
        return None if self.light is None else self.light.s_tl


def advance_index(route: RouteSpec, idx: int, s_hat: float, w_bound: float = 3.0) -> int:
    """Move past every light whose position is surely behind the vehicle."""
    while idx < len(route.lights) and s_hat - w_bound >= route.lights[idx].s_tl:
        idx += 1
    return idx


def segment_context(route: RouteSpec, schedule: PassSchedule, idx: int, k: int,
                    s_hat: float, N: int = 5, w_bound: float = 3.0) -> SegmentContext:
    idx = advance_index(route, idx, s_hat, w_bound)
    if idx >= len(route.lights):
        done = s_hat - w_bound >= route.goal_s
        return SegmentContext(idx, None, None, math.inf, route.goal_s - s_hat,
                              None, None, None, route_complete=done, k=k)
    light = route.lights[idx]
    kp = schedule.k_pass[idx]
    sig = signal_at(light, k)
    rem = remaining_in_phase(light, k)
    if k + N > kp:
        return SegmentContext(idx, light, sig, rem, light.s_tl - s_hat, kp, None, None,
                              deadline_in_horizon=True, k=k)
    t_red, t_green = compute_windows(k, N, light, kp)
    return SegmentContext(idx, light, sig, rem, light.s_tl - s_hat, kp, t_red, t_green, k=k)


def load_route(path) -> RouteSpec:
    return RouteSpec.from_json(json.loads(Path(path).read_text()))


def table1_light(s_tl: float = 200.0) -> TrafficLight:
    """Green 30 s / yellow 5 s / red 25 s, green with 25 s left at t = 0."""
    return TrafficLight(s_tl, 30.0, 5.0, 25.0, 5.0)


def table1_route(tail: float = 0.0, v_max: float = 14.0) -> tuple[RouteSpec, PassSchedule]:
    light = table1_light()
    return RouteSpec((light,), light.s_tl + tail if tail else light.s_tl, v_max), PassSchedule((20,))


ROUTE4_POSITIONS = (189.0, 378.0, 490.0, 553.0)
ROUTE4_K_PASS = (43, 81, 103, 116)


def route4(goal_s: float = 575.0) -> tuple[RouteSpec, PassSchedule]:
    """Four-light test route; cycles built so a steady 5 m/s run meets green.

    Each light is green on [k_pass - 20, k_pass + 10) with a 60 s cycle, so
    constant 5 m/s (arrivals at 37.8, 75.6, 98.0, 110.6 s) passes on green.
    """
    lights = []
    for s, kp in zip(ROUTE4_POSITIONS, ROUTE4_K_PASS):
        green, yellow, red = 30.0, 3.0, 27.0
        onset = kp - 20
        offset = (-onset) % (green + yellow + red)
        lights.append(TrafficLight(s, green, yellow, red, offset))
    return RouteSpec(tuple(lights), goal_s), PassSchedule(ROUTE4_K_PASS)
