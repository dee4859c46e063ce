"""Quadratic energy stage cost over [v, u, 1] and its PSD-constrained fit."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

# kJ per 1 s step; chosen so 5 m/s cruising costs about 2.2 kJ/s
DEFAULT_P = np.array([[0.08, 0.10, 0.0], [0.10, 1.50, 0.0], [0.0, 0.0, 0.20]])

_MONOMIALS = ("v^2", "v*u", "v", "u^2", "u", "1")


class EnergySample(NamedTuple):
    v: float
    u: float
    dE: float


@dataclass(frozen=True, eq=False)
class EnergyModel:
    P: np.ndarray
    residual: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (3, 3):
            raise ValueError("P must be 3x3")
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)

    def is_psd(self, tol: float = 1e-9) -> bool:
        return bool(np.linalg.eigvalsh(self.P).min() >= -tol)

    def stage_cost(self, v, u):
        return stage_cost(self, v, u)

    def to_json(self) -> dict:
        return {"P": self.P.tolist(), "residual": dict(self.residual)}

    @classmethod
    def from_json(cls, obj: dict) -> "EnergyModel":
        return cls(np.asarray(obj["P"], dtype=float), dict(obj.get("residual", {})))


DEFAULT_MODEL = EnergyModel(DEFAULT_P)


def stage_cost(m: EnergyModel, v, u):
    """[v u 1] P [v u 1]^T, vectorized over v and u."""
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    P = m.P
    out = (
        P[0, 0] * v * v
        + 2 * P[0, 1] * v * u
        + 2 * P[0, 2] * v
        + P[1, 1] * u * u
        + 2 * P[1, 2] * u
        + P[2, 2]
    )
    return float(out) if out.ndim == 0 else out


def true_energy(v, u, P: np.ndarray = DEFAULT_P):
    """Ground-truth per-step consumption used by the simulator."""
    return stage_cost(EnergyModel(P), v, u)


def _design(v: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.column_stack([v * v, v * u, v, u * u, u, np.ones_like(v)])


def _theta_to_P(th: np.ndarray) -> np.ndarray:
    a, b, c, d, e, f = th
    return np.array([[a, b / 2, c / 2], [b / 2, d, e / 2], [c / 2, e / 2, f]])


def _P_to_theta(P: np.ndarray) -> np.ndarray:
    return np.array([P[0, 0], 2 * P[0, 1], 2 * P[0, 2], P[1, 1], 2 * P[1, 2], P[2, 2]])


def _psd_project(P: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(0.5 * (P + P.T))
    return (V * np.maximum(w, 0.0)) @ V.T


def fit_energy_model(samples: Iterable, tol: float = 1e-10, max_iter: int = 10_000) -> EnergyModel:
    """Least-squares fit of a PSD P to (v, u, dE) samples.

    The unconstrained fit is a linear least-squares problem in the six free
    entries of P.  When it comes out indefinite, gradient steps on the fit
    alternate with eigenvalue clipping until P stops moving.
    """
    arr = np.asarray([tuple(s) for s in samples], dtype=float).reshape(-1, 3)
    v, u, dE = arr[:, 0], arr[:, 1], arr[:, 2]
    Phi = _design(v, u)
    if len(arr) < 6 or np.linalg.matrix_rank(Phi) < 6:
        missing = _missing_directions(Phi)
        raise ValueError(f"insufficient excitation: unidentified directions {missing}")

    theta_ls, *_ = np.linalg.lstsq(Phi, dE, rcond=None)
    P = _theta_to_P(theta_ls)
    if np.linalg.eigvalsh(P).min() < 0:
        P = _projected_fit(Phi, dE, P, tol, max_iter)

    pred = Phi @ _P_to_theta(P)
    resid = dE - pred
    total = float(dE.sum())
    stats = {
        "n": int(len(arr)),
        "rmse": float(np.sqrt(np.mean(resid**2))),
        "total_measured": total,
        "total_predicted": float(pred.sum()),
        "total_rel_error": float((pred.sum() - total) / total) if total else 0.0,
    }
    return EnergyModel(P, stats)


def _projected_fit(Phi, y, P0, tol, max_iter):
    # projected gradient on f(P) = ||Phi theta(P) - y||^2 over the PSD cone
    G = Phi.T @ Phi
    step = 1.0 / (2.0 * np.linalg.eigvalsh(G).max())
    P = _psd_project(P0)
    for _ in range(max_iter):
        th = _P_to_theta(P)
        grad_th = G @ th - Phi.T @ y
        # chain rule: off-diagonal entries appear twice in theta
        g = _theta_to_P(grad_th)
        g[np.triu_indices(3, 1)] *= 2
        g[np.tril_indices(3, -1)] *= 2
        P_new = _psd_project(P - step * g)
        if np.linalg.norm(P_new - P) <= tol * max(1.0, np.linalg.norm(P)):
            return P_new
        P = P_new
    return P


def _missing_directions(Phi: np.ndarray) -> list[str]:
    if len(Phi) == 0:
        return list(_MONOMIALS)
    _, sv, Vt = np.linalg.svd(Phi, full_matrices=True)
    rank = int(np.sum(sv > 1e-10 * max(1.0, sv.max() if len(sv) else 1.0)))
    null = Vt[rank:]
    names = []
    for vec in null:
        names.append(_MONOMIALS[int(np.argmax(np.abs(vec)))])
    return sorted(set(names)) or list(_MONOMIALS)


def read_samples_csv(path) -> list[EnergySample]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["v", "u", "dE"]:
            raise ValueError(f"expected header v,u,dE in {path}, got {reader.fieldnames}")
        return [EnergySample(float(r["v"]), float(r["u"]), float(r["dE"])) for r in reader]


def write_samples_csv(path, samples: Iterable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["v", "u", "dE"])
        for s in samples:
            w.writerow([repr(float(x)) for x in s])


def synthetic_samples(rng: np.random.Generator, n: int, P: np.ndarray = DEFAULT_P,
                      rel_noise: float = 0.0, v_max: float = 14.0,
                      a_min: float = -3.0, a_max: float = 2.0) -> list[EnergySample]:
    v = rng.uniform(0.0, v_max, n)
    u = rng.uniform(a_min, a_max, n)
    dE = true_energy(v, u, P)
    if rel_noise:
        dE = dE * (1.0 + rel_noise * rng.standard_normal(n))
    dE = np.maximum(dE, 0.0)
    return [EnergySample(float(a), float(b), float(c)) for a, b, c in zip(v, u, dE)]


def save_model(path, m: EnergyModel) -> None:
    Path(path).write_text(json.dumps(m.to_json(), indent=2))


def load_model(path) -> EnergyModel:
    return EnergyModel.from_json(json.loads(Path(path).read_text()))
