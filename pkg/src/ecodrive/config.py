"""Experiment configuration: JSON schema, validation and hashing.

A config has the sections ``route``, ``vehicle``, ``noise``, ``mpc``,
``cruise``, ``training`` and ``evaluation``; every section is optional and
falls back to the defaults below.  ``route`` is either a preset name
("route4", "table1") or an inline route object with an optional
``k_pass`` list (schedule source "given") or ``schedule: "green_wave"``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from .controller import CruiseConfig, MpcConfig
from .plant import Limits
from .sim import SimConfig, TrainConfig
from .traffic import (PassSchedule, RouteSpec, ScheduleError, green_wave, route4,
                      table1_route)

SECTIONS = ("route", "vehicle", "noise", "mpc", "cruise", "training", "evaluation")
CONTROLLERS = ("mpc", "cruise")

# route-specific defaults; the green band is the set of cruise speeds that
# meet every scheduled green light without stopping
PRESET_INIT_SPEEDS = {
    "route4": (4.6, 4.8, 5.0, 5.2, 5.4, 5.6),
    "table1": tuple(float(v) for v in range(4, 15)),
}
PRESET_CRUISE_VREF = {"route4": 5.0, "table1": 12.0}
# closed-loop route4 data contract slowly near the lights (about 0.95 per sweep)
PRESET_VALUE_MAX_ITER = {"route4": 500}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    controller: str = "mpc"
    runs: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller kind {self.controller!r}; "
                              f"expected one of {', '.join(CONTROLLERS)}")
        if self.runs < 1:
            raise ConfigError("evaluation.runs must be at least 1")


@dataclass(frozen=True)
class ExperimentConfig:
    route: RouteSpec
    schedule: PassSchedule
    limits: Limits = field(default_factory=Limits)
    sim: SimConfig = field(default_factory=SimConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    cruise: CruiseConfig = field(default_factory=CruiseConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _pick(section: dict, name: str, allowed: tuple) -> dict:
    if not isinstance(section, dict):
        raise ConfigError(f"section {name} must be an object")
    extra = set(section) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {name}: {', '.join(sorted(extra))}")
    return section


def _route(obj: Any, limits: Limits) -> tuple[RouteSpec, PassSchedule, str]:
    if isinstance(obj, str):
        if obj == "route4":
            route, sched = route4()
        elif obj == "table1":
            route, sched = table1_route(v_max=limits.v_max)
        else:
            raise ConfigError(f"unknown route preset {obj!r}")
        return replace(route, v_max=limits.v_max, a_min=limits.a_min, a_max=limits.a_max), sched, obj
    if not isinstance(obj, dict):
        raise ConfigError("route must be a preset name or an object")
    try:
        base = dict(obj)
        base.setdefault("v_max", limits.v_max)
        base.setdefault("a_min", limits.a_min)
        base.setdefault("a_max", limits.a_max)
        route = RouteSpec.from_json(base)
        src = obj.get("schedule", "given")
        if src == "green_wave":
            sched = green_wave(route)
        elif src == "given":
            if "k_pass" not in obj:
                raise ConfigError("route.k_pass is required when schedule is 'given'")
            sched = PassSchedule(tuple(obj["k_pass"]))
        else:
            raise ConfigError(f"unknown schedule source {src!r}")
        sched.validate(route)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, ScheduleError) as exc:
        raise ConfigError(f"invalid route: {exc}") from exc
    return route, sched, "custom"


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    try:
        veh = _pick(raw.get("vehicle", {}), "vehicle", ("v_max", "a_min", "a_max"))
        limits = Limits(**veh)
        route, sched, preset = _route(raw.get("route", "route4"), limits)

        noise = _pick(raw.get("noise", {}), "noise", ("w_bound", "distribution", "L"))
        w = float(noise.get("w_bound", 3.0))
        L = float(noise.get("L", 0.05))
        mpc_raw = _pick(raw.get("mpc", {}), "mpc",
                        ("N", "M", "qp_tol", "kkt_tol", "seed", "noise_samples_per_point",
                         "value_max_iter"))
        mpc_raw = dict(mpc_raw)
        mpc_raw.setdefault("value_max_iter", PRESET_VALUE_MAX_ITER.get(preset, 200))
        mpc = MpcConfig(L=L, w_bound=w, limits=limits, **mpc_raw)

        cr_raw = dict(_pick(raw.get("cruise", {}), "cruise",
                            ("v_ref", "k_p", "stop_margin", "brake_decel", "lookahead",
                             "green_margin")))
        cr_raw.setdefault("v_ref", PRESET_CRUISE_VREF.get(preset, 5.0))
        cruise = CruiseConfig(w_bound=w, **cr_raw)

        sim_raw = _pick(raw.get("evaluation", {}), "evaluation",
                        ("controller", "runs", "seed", "max_steps", "s0", "v0"))
        sim = SimConfig(N=mpc.N, L=L, w_bound=w, noise=noise.get("distribution", "uniform"),
                        s0=float(sim_raw.get("s0", 0.0)), v0=float(sim_raw.get("v0", 0.0)),
                        max_steps=int(sim_raw.get("max_steps", 600)))
        ev = EvalConfig(sim_raw.get("controller", "mpc"), int(sim_raw.get("runs", 100)),
                        int(sim_raw.get("seed", 0)))

        tr_raw = dict(_pick(raw.get("training", {}), "training",
                            tuple(TrainConfig.__dataclass_fields__)))
        if "init_speeds" in tr_raw:
            tr_raw["init_speeds"] = tuple(float(v) for v in tr_raw["init_speeds"])
        else:
            tr_raw["init_speeds"] = PRESET_INIT_SPEEDS.get(preset, TrainConfig().init_speeds)
        training = TrainConfig(**tr_raw)
        if training.iterations < 1:
            raise ConfigError("training.iterations must be at least 1")
        if training.mc_runs < 1 or training.init_runs < 1:
            raise ConfigError("training.mc_runs and training.init_runs must be at least 1")
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(route, sched, limits, sim, mpc, cruise, training, ev, raw)


def load_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(raw)


def describe(cfg: ExperimentConfig) -> dict:
    """Resolved config as plain JSON (what actually ran)."""
    tr = asdict(cfg.training)
    tr["init_speeds"] = list(tr["init_speeds"])
    return {
        "route": cfg.route.to_json(),
        "schedule": cfg.schedule.to_json(),
        "mpc": {k: v for k, v in asdict(cfg.mpc).items() if k != "limits"},
        "cruise": asdict(cfg.cruise),
        "training": tr,
        "evaluation": asdict(cfg.evaluation),
    }
