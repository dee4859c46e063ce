"""Closed-loop simulation, Monte Carlo evaluation and the learning loop."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .controller import (CruiseConfig, LearnedArtifacts, MpcConfig, StepOutput, control_step,
                         cruise_control)
from .energy import DEFAULT_MODEL, DEFAULT_P, EnergyModel, true_energy
from .geometry import SInterval
from .learning import Dataset, augment
from .plant import (DEFAULT_LIMITS, Limits, NoiseModel, Observer, VehicleState, measure,
                    observer_update, sample_terminal_noise, step_true)
from .traffic import (PassSchedule, RouteSpec, TrafficLight, is_green,
                      segment_context, signal_at)


@dataclass(frozen=True)
class SimConfig:
    N: int = 5
    L: float = 0.05
    w_bound: float = 3.0
    noise: str = "uniform"
    s0: float = 0.0
    v0: float = 0.0
    max_steps: int = 600
    energy_P: np.ndarray = field(default_factory=lambda: DEFAULT_P.copy())
    stop_at_goal: bool = True

    @property
    def noise_model(self) -> NoiseModel:
        return NoiseModel(SInterval(-self.w_bound, self.w_bound), self.noise)


class CruiseController:
    def __init__(self, cfg: CruiseConfig = CruiseConfig(), limits: Limits = DEFAULT_LIMITS):
        self.cfg, self.limits = cfg, limits

    def __call__(self, x_hat: VehicleState, ctx) -> StepOutput:
        u = cruise_control(x_hat, ctx, self.cfg, self.limits)
        return StepOutput(u, False, {"step": ctx.k, "u": u, "mode": "cruise"})


class MpcController:
    """Learned MPC with the cruise backup; one terminal-noise draw per segment."""

    def __init__(self, art: Optional[LearnedArtifacts], route: RouteSpec, schedule: PassSchedule,
                 cfg: MpcConfig = MpcConfig(), cruise: CruiseConfig = CruiseConfig(),
                 model: EnergyModel = DEFAULT_MODEL):
        self.art, self.route, self.schedule = art, route, schedule
        self.cfg, self.cruise, self.model = cfg, cruise, model
        self._sn: dict = {}

    def sn(self, segment: int) -> np.ndarray:
        if segment not in self._sn:
            rng = np.random.default_rng([self.cfg.seed, segment])
            self._sn[segment] = sample_terminal_noise(rng, self.cfg.M, self.cfg.N, self.cfg.L)
        return self._sn[segment]

    def __call__(self, x_hat: VehicleState, ctx) -> StepOutput:
        if ctx.light is None:
            u = cruise_control(x_hat, ctx, self.cruise, self.cfg.limits)
            return StepOutput(u, False, {"step": ctx.k, "u": u, "mode": "post-route"})
        return control_step(x_hat, ctx, self.art, self.cfg, self.cruise, self.sn(ctx.light_index),
                            self.route, self.schedule, self.model)


@dataclass
class TrajectoryLog:
    t: list = field(default_factory=list)
    s_true: list = field(default_factory=list)
    s_hat: list = field(default_factory=list)
    v: list = field(default_factory=list)
    u: list = field(default_factory=list)
    signal: list = field(default_factory=list)
    segment: list = field(default_factory=list)
    dE: list = field(default_factory=list)
    fallback: list = field(default_factory=list)
    records: list = field(default_factory=list)
    crossings: list = field(default_factory=list)  # per light: dict
    goal_reached: bool = False

    @property
    def total_energy(self) -> float:
        return float(np.sum(self.dE))

    @property
    def travel_time(self) -> int:
        return len(self.u)

    @property
    def fallback_rate(self) -> float:
        return float(np.mean(self.fallback)) if self.fallback else 0.0

    @property
    def violations(self) -> int:
        return sum(c["violation"] for c in self.crossings)

    @property
    def deadline_misses(self) -> int:
        return sum(not c["deadline_met"] for c in self.crossings)

    @property
    def any_fallback(self) -> bool:
        return any(self.fallback)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "s_true", "s_hat", "v", "u", "signal", "segment", "dE", "fallback"])
            for row in zip(self.t, self.s_true, self.s_hat, self.v, self.u, self.signal,
                           self.segment, self.dE, self.fallback):
                w.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3]), repr(row[4]),
                            row[5], row[6], repr(row[7]), int(row[8])])

    def relative_pairs(self, route: RouteSpec, tail: float = 300.0) -> np.ndarray:
        """(s_hat - s_tl, v, u) rows for the learning data set.

        Each step is stored relative to the light its segment approaches and,
        up to ``tail`` metres past, relative to every light already passed.
        """
        pos = np.array([l.s_tl for l in route.lights])
        rows = []
        for sh, v, u, seg in zip(self.s_hat, self.v, self.u, self.segment):
            for i, p in enumerate(pos):
                rel = sh - p
                if i == seg or (i < seg and rel <= tail):
                    rows.append((rel, v, u))
                elif seg >= len(pos) and i == len(pos) - 1 and rel <= tail:
                    rows.append((rel, v, u))
        return np.array(rows, dtype=float).reshape(-1, 3)


def _crossing_report(light: TrafficLight, k_pass: int, s_true: list) -> dict:
    s = np.asarray(s_true)
    idx = np.flatnonzero(s > light.s_tl)
    k_c = int(idx[0]) if len(idx) else None
    violation = False
    if k_c is not None and k_c > 0:
        violation = not (is_green(light, k_c) and is_green(light, k_c - 1))
    met = k_c is not None and k_c <= k_pass
    return {"s_tl": light.s_tl, "k_cross": k_c, "violation": bool(violation),
            "deadline_met": bool(met), "k_pass": k_pass}


def run_closed_loop(route: RouteSpec, schedule: PassSchedule, controller: Callable,
                    cfg: SimConfig = SimConfig(), seed: int = 0,
                    goal_s: Optional[float] = None) -> TrajectoryLog:
    """measure -> observe -> segment context -> control -> plant -> energy.

    Runs until the true position reaches the goal (or ``max_steps``).
    """
    rng = np.random.default_rng(seed)
    noise = cfg.noise_model
    goal = route.goal_s if goal_s is None else goal_s
    lim = Limits(route.v_max, route.a_min, route.a_max)
    x = VehicleState(cfg.s0, cfg.v0)
    log = TrajectoryLog()
    obs = None
    u_prev = 0.0
    idx = 0
    for k in range(cfg.max_steps + 1):
        y = measure(x, float(noise.sample(rng)), noise)
        obs = Observer.from_measurement(y, cfg.L) if obs is None else observer_update(obs, u_prev, y)
        log.t.append(k)
        log.s_true.append(x.s)
        if x.s >= goal and cfg.stop_at_goal:
            log.goal_reached = True
            break
        if k == cfg.max_steps:
            break
        x_hat = obs.estimate
        ctx = segment_context(route, schedule, idx, k, x_hat.s, cfg.N, cfg.w_bound)
        idx = ctx.light_index
        out = controller(x_hat, ctx)
        u = float(np.clip(out.u, max(lim.a_min, -x.v), min(lim.a_max, lim.v_max - x.v)))
        log.s_hat.append(x_hat.s)
        log.v.append(x.v)
        log.u.append(u)
        log.signal.append(signal_at(ctx.light, k).value if ctx.light is not None else "")
        log.segment.append(idx)
        log.dE.append(float(true_energy(x.v, u, cfg.energy_P)))
        log.fallback.append(bool(out.fallback))
        out.record["u"] = u
        log.records.append(out.record)
        x = step_true(x, u)
        u_prev = u
    log.s_true = log.s_true[:len(log.u) + 1]
    log.crossings = [_crossing_report(l, kp, log.s_true)
                     for l, kp in zip(route.lights, schedule.k_pass)]
    return log


def collect_cruise_pairs(route: RouteSpec, schedule: PassSchedule, v_ref: float, seed: int,
                         tail: float = 300.0, cfg: SimConfig = SimConfig(),
                         cruise: CruiseConfig = CruiseConfig(), s0: Optional[float] = None) -> np.ndarray:
    """Relative (s, v, u) rows from one cruise run that continues ``tail`` m past the last light."""
    ctrl = CruiseController(replace(cruise, v_ref=v_ref), Limits(route.v_max, route.a_min,
                                                                 route.a_max))
    goal = route.lights[-1].s_tl + tail
    cfg = replace(cfg, max_steps=max(cfg.max_steps, 2000), s0=cfg.s0 if s0 is None else s0)
    log = run_closed_loop(route, schedule, ctrl, cfg, seed, goal_s=goal)
    return log.relative_pairs(route, tail)


def monte_carlo(route: RouteSpec, schedule: PassSchedule, make_controller: Callable,
                runs: int, seed: int = 0, cfg: SimConfig = SimConfig()) -> tuple[dict, list]:
    """Runs with seeds seed..seed+runs-1; returns (summary, logs)."""
    logs = []
    for r in range(runs):
        logs.append(run_closed_loop(route, schedule, make_controller(), cfg, seed + r))
    E = np.array([l.total_energy for l in logs])
    T = np.array([l.travel_time for l in logs])
    summary = {
        "runs": runs,
        "energy": {"mean": float(E.mean()), "std": float(E.std(ddof=1)) if runs > 1 else 0.0,
                   "min": float(E.min()), "max": float(E.max())},
        "travel_time": {"mean": float(T.mean()), "min": int(T.min()), "max": int(T.max())},
        "violations": int(sum(l.violations for l in logs)),
        "deadline_misses": int(sum(l.deadline_misses for l in logs)),
        "fallback_rate": float(np.mean([l.fallback_rate for l in logs])),
        "runs_with_fallback": int(sum(l.any_fallback for l in logs)),
    }
    return summary, logs


# ---------------------------------------------------------------------------
# learning loop


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 15
    mc_runs: int = 100
    aug_runs: int = 3
    init_speeds: tuple = tuple(float(v) for v in range(4, 15))
    init_runs: int = 10
    tail: float = 300.0
    eval_seed: int = 10_000
    seed: int = 0
    early_stop: bool = False
    early_stop_tol: float = 0.01
    early_stop_window: int = 3
    random_iterations: int = 0
    augment_with_eval: bool = True  # evaluation episodes are closed-loop MPC runs too


def random_scenario(rng: np.random.Generator, v_max: float = 14.0) -> tuple[RouteSpec, PassSchedule, float]:
    """One-light route with random timing, distance and initial speed.

    Returns (route, schedule, v0); k_pass is a green step the vehicle can
    reach without exceeding v_max.
    """
    while True:
        g, y, r = rng.uniform(20, 40), rng.uniform(3, 6), rng.uniform(15, 30)
        dist = rng.uniform(120, 300)
        v0 = rng.uniform(0, 8)
        light = TrafficLight(dist, g, y, r, rng.uniform(0, g + y + r))
        t_min = math.ceil(dist / v_max + (v_max - v0) ** 2 / (2 * 2.0 * v_max)) + 2
        cands = [k for k in range(t_min, t_min + 90)
                 if all(is_green(light, t) for t in range(k - 2, k + 3))]
        if cands:
            k_pass = int(rng.choice(cands[:30]))
            return RouteSpec((light,), dist, v_max), PassSchedule((k_pass,)), float(v0)


def _augment_from_logs(D: Dataset, logs, route, tail, iteration, scenario, limits) -> Dataset:
    for log in logs:
        pairs = log.relative_pairs(route, tail)
        if len(pairs):
            D = augment(D, pairs, iteration, scenario, limits)
    return D


def _settled(curve: Sequence[dict], tol: float, window: int) -> bool:
    """Relative change of the mean energy below ``tol`` for ``window`` iterations in a row."""
    if len(curve) <= window:
        return False
    e = [r["mean_energy"] for r in curve[-window - 1:]]
    return all(abs(b - a) < tol * abs(a) for a, b in zip(e, e[1:]))


def train(route: RouteSpec, schedule: PassSchedule, tcfg: TrainConfig = TrainConfig(),
          mpc: MpcConfig = MpcConfig(), cruise: CruiseConfig = CruiseConfig(),
          sim: SimConfig = SimConfig(), model: EnergyModel = DEFAULT_MODEL,
          D: Optional[Dataset] = None, log_fn: Optional[Callable] = None) -> dict:
    """Iterative learning: evaluate with the current data, then augment it.

    Iteration i builds the artifacts from the data on hand, runs the Monte
    Carlo evaluation (fixed seeds, episodes end at the route goal) and then
    drives ``aug_runs`` episodes with a post-route tail to grow the data.
    """
    from .learning import init_dataset

    rng = np.random.default_rng(tcfg.seed)
    limits = mpc.limits
    if D is None:
        D = init_dataset([(route, schedule)], tcfg.init_speeds, tcfg.init_runs, rng, limits,
                         tail=tcfg.tail, cfg=sim, cruise=cruise)
    curve, random_curve = [], []
    art = None
    for it in range(1, tcfg.iterations + 1):
        t0 = time.perf_counter()
        art = LearnedArtifacts(D, mpc, model)
        summary, logs = monte_carlo(route, schedule,
                                    lambda: MpcController(art, route, schedule, mpc, cruise, model),
                                    tcfg.mc_runs, tcfg.eval_seed, sim)
        E = np.array([l.total_energy for l in logs])
        row = {"iter": it, "dataset_size": len(D), "mean_energy": float(E.mean()),
               "std_energy": float(E.std(ddof=1)) if len(E) > 1 else 0.0,
               "fallback_rate": summary["fallback_rate"], "violations": summary["violations"],
               "seconds": time.perf_counter() - t0}
        curve.append(row)
        if log_fn:
            log_fn(row)
        aug_logs = [run_closed_loop(route, schedule,
                                    MpcController(art, route, schedule, mpc, cruise, model), sim,
                                    int(rng.integers(2**31)), goal_s=route.lights[-1].s_tl + tcfg.tail)
                    for _ in range(tcfg.aug_runs)]
        if tcfg.augment_with_eval:
            aug_logs = logs + aug_logs
        D = _augment_from_logs(D, aug_logs, route, tcfg.tail, it, f"iter:{it}", limits)
        if tcfg.early_stop and _settled(curve, tcfg.early_stop_tol, tcfg.early_stop_window):
            break
    for it in range(1, tcfg.random_iterations + 1):
        r_route, r_sched, v0 = random_scenario(rng, route.v_max)
        r_sim = replace(sim, v0=v0)
        r_art = LearnedArtifacts(D, mpc, model)
        r_logs = [run_closed_loop(r_route, r_sched,
                                  MpcController(r_art, r_route, r_sched, mpc, cruise, model), r_sim,
                                  int(rng.integers(2**31)), goal_s=r_route.lights[-1].s_tl + tcfg.tail)
                  for _ in range(tcfg.aug_runs)]
        E = [l.total_energy for l in r_logs]
        random_curve.append({"iter": it, "dataset_size": len(D), "mean_energy": float(np.mean(E)),
                             "fallback_rate": float(np.mean([l.fallback_rate for l in r_logs])),
                             "violations": int(sum(l.violations for l in r_logs))})
        D = _augment_from_logs(D, r_logs, r_route, tcfg.tail, tcfg.iterations + it, f"random:{it}",
                               limits)
    return {"dataset": D, "curve": curve, "random_curve": random_curve, "artifacts": art}


def write_curve(path, curve: Sequence[dict],
                cols=("iter", "dataset_size", "mean_energy", "std_energy", "fallback_rate")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in curve:
            w.writerow([row.get(c, "") for c in cols])


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2))
