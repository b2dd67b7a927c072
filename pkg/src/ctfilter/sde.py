"""Wiener increments and Euler-Maruyama simulation of the truth/observation pair."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, SimulationDiverged
from .models import FilterModel


def wiener_increments(rng: np.random.Generator, dt: float, dims: int, steps: int) -> np.ndarray:
    """``steps`` i.i.d. increments with covariance ``dt * I``, shape ``(steps, dims)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return np.sqrt(dt) * rng.standard_normal((int(steps), int(dims)))


@dataclass(frozen=True)
class PathRecord:
    dt: float
    times: np.ndarray
    states: np.ndarray  # (steps + 1, d)
    obs_increments: np.ndarray  # (steps, m)

    def __post_init__(self):
        if self.states.shape[0] != self.obs_increments.shape[0] + 1:
            raise ModelError("states must have one more entry than obs_increments")
        if self.times.shape[0] != self.states.shape[0]:
            raise ModelError("times and states lengths differ")
        if len(self.times) > 1 and np.abs(np.diff(self.times) - self.dt).max() > 1e-12:
            raise ModelError("time grid is not uniform with spacing dt")

    @property
    def steps(self) -> int:
        return self.obs_increments.shape[0]

    def write_csv(self, path):
        d = self.states.shape[1]
        m = self.obs_increments.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x_{i + 1}" for i in range(d)] + [f"dz_{j + 1}" for j in range(m)])
            for k, t in enumerate(self.times):
                dz = self.obs_increments[k] if k < self.steps else [""] * m
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in self.states[k]]
                                + [v if v == "" else repr(float(v)) for v in dz])


def simulate_truth_obs(
    model: FilterModel,
    x0,
    dt: float,
    steps: int,
    rng: np.random.Generator,
    obs_rng: np.random.Generator | None = None,
    t0: float = 0.0,
) -> PathRecord:
    """Euler-Maruyama path of the signal and its observation increments.

    ``rng`` drives the signal noise B and ``obs_rng`` the observation noise W.
    When ``obs_rng`` is omitted both are spawned from ``rng``, which keeps
    them independent but ties them to a single seed.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if obs_rng is None:
        rng, obs_rng = rng.spawn(2)
    d, m = model.dim_state, model.dim_obs
    dB = wiener_increments(rng, dt, d, steps)
    dW = wiener_increments(obs_rng, dt, m, steps)

    states = np.empty((steps + 1, d))
    dz = np.empty((steps, m))
    x = np.asarray(x0, dtype=float).reshape(d)
    states[0] = x
    for k in range(steps):
        dz[k] = model.h(x).reshape(m) * dt + dW[k]
        x = x + model.a(x).reshape(d) * dt + model.sigma(x).reshape(d, d) @ dB[k]
        if not np.all(np.isfinite(x)):
            raise SimulationDiverged(f"truth state became non-finite at step {k + 1}", step=k + 1)
        states[k + 1] = x
    times = t0 + dt * np.arange(steps + 1)
    return PathRecord(dt, times, states, dz)
