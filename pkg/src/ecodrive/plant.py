"""Longitudinal point-mass plant, noisy localization and the position observer."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import SInterval


@dataclass(frozen=True)
class SystemMatrices:
    """Zero-order-hold double integrator sampled at ``Ts``."""

    Ts: float = 1.0

    @property
    def A(self) -> np.ndarray:
        return np.array([[1.0, self.Ts], [0.0, 1.0]])

    @property
    def B(self) -> np.ndarray:
        return np.array([0.5 * self.Ts**2, self.Ts])

    @property
    def C(self) -> np.ndarray:
        return np.eye(2)

    @property
    def D(self) -> np.ndarray:
        return np.array([1.0, 0.0])

    @property
    def F(self) -> np.ndarray:
        return np.array([1.0, 0.0])

    def successors(self, states: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        """Vectorized A x + B u for rows of ``states``."""
        states = np.asarray(states, dtype=float).reshape(-1, 2)
        inputs = np.asarray(inputs, dtype=float).reshape(-1)
        out = np.empty_like(states)
        out[:, 0] = states[:, 0] + self.Ts * states[:, 1] + 0.5 * self.Ts**2 * inputs
        out[:, 1] = states[:, 1] + self.Ts * inputs
        return out


DEFAULT_SYS = SystemMatrices()


@dataclass(frozen=True)
class Limits:
    """State box 0 <= v <= v_max and input box a_min <= u <= a_max."""

    v_max: float = 14.0
    a_min: float = -3.0
    a_max: float = 2.0

    def __post_init__(self):
        if not self.a_min < 0 < self.a_max:
            raise ValueError("need a_min < 0 < a_max")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")

    def feasible(self, v, u, tol: float = 1e-9) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        u = np.asarray(u, dtype=float)
        return ((v >= -tol) & (v <= self.v_max + tol)
                & (u >= self.a_min - tol) & (u <= self.a_max + tol))


DEFAULT_LIMITS = Limits()


@dataclass(frozen=True)
class VehicleState:
    s: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.v])


@dataclass(frozen=True)
class Measurement:
    s_meas: float
    v_meas: float


@dataclass(frozen=True)
class NoiseModel:
    """Localization noise, uniform over ``bound`` unless told otherwise."""

    bound: SInterval = field(default_factory=lambda: SInterval(-3.0, 3.0))
    distribution: str = "uniform"

    def __post_init__(self):
        if self.distribution not in ("uniform", "boundary"):
            raise ValueError(f"unknown noise distribution {self.distribution!r}")

    def sample(self, rng: np.random.Generator, size=None):
        lo, hi = self.bound.lo, self.bound.hi
        if self.distribution == "uniform":
            return rng.uniform(lo, hi, size)
        # adversarial: only the two extreme values
        return np.where(rng.random(size) < 0.5, lo, hi)


def step_true(x: VehicleState, u: float, sys: SystemMatrices = DEFAULT_SYS) -> VehicleState:
    Ts = sys.Ts
    return VehicleState(float(x.s + Ts * x.v + 0.5 * Ts * Ts * u), float(x.v + Ts * u))


def measure(x: VehicleState, w: float, noise: NoiseModel | None = None) -> Measurement:
    bound = (noise or NoiseModel()).bound
    if not (bound.lo - 1e-12 <= w <= bound.hi + 1e-12):
        raise ValueError(f"noise outside support: w={w} not in [{bound.lo}, {bound.hi}]")
    return Measurement(x.s + w, x.v)


@dataclass(frozen=True)
class Observer:
    estimate: VehicleState
    L: float
    sys: SystemMatrices = DEFAULT_SYS

    def __post_init__(self):
        if not 0.0 <= self.L < 1.0:
            raise ValueError(f"observer gain must lie in [0, 1), got {self.L}")

    @classmethod
    def from_measurement(cls, y: Measurement, L: float, sys: SystemMatrices = DEFAULT_SYS):
        return cls(VehicleState(y.s_meas, y.v_meas), L, sys)


def observer_update(obs: Observer, u: float, y_next: Measurement) -> Observer:
    """Predict with the model, then correct position by L times the innovation.

    Speed is reset to the (exact) speed measurement.
    """
    pred = step_true(obs.estimate, u, obs.sys)
    s_new = pred.s + obs.L * (y_next.s_meas - pred.s)
    return replace(obs, estimate=VehicleState(s_new, y_next.v_meas))


def error_rollout(L: float, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Estimation error and lumped noise along a noise sequence w_0..w_T.

    Returns ``ds`` (length T+1, ds_0 = -w_0) and ``n`` (length T) with
    n_k = L * (ds_k + w_{k+1}).
    """
    w = np.asarray(w, dtype=float)
    ds = np.empty(len(w))
    ds[0] = -w[0]
    for k in range(len(w) - 1):
        ds[k + 1] = (1.0 - L) * ds[k] - L * w[k + 1]
    n = L * (ds[:-1] + w[1:])
    return ds, n


def sample_lumped_noise(rng: np.random.Generator, count: int, L: float,
                        noise: NoiseModel | None = None, burn_in: int = 1000) -> np.ndarray:
    """``count`` single-step lumped-noise draws from the stationary regime."""
    return sample_terminal_noise(rng, count, 1, L, noise, burn_in)


def sample_terminal_noise(rng: np.random.Generator, M: int, N: int, L: float,
                          noise: NoiseModel | None = None, burn_in: int = 1000) -> np.ndarray:
    """M draws of the N-step lumped-noise sum, each from an independent chain.

    Chains start from a uniform error in W and are burnt in so the
    initial condition is forgotten before the N summed steps.
    """
    if M < 1:
        raise ValueError("need at least one sample")
    noise = noise or NoiseModel()
    lo, hi = noise.bound.lo, noise.bound.hi
    if L == 0.0:
        return np.zeros(M)
    ds = rng.uniform(lo, hi, M)
    total = np.zeros(M)
    for k in range(burn_in + N):
        w_next = noise.sample(rng, M)
        if k >= burn_in:
            total += L * (ds + w_next)
        ds = (1.0 - L) * ds - L * w_next
    return total
