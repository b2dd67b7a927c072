"""Stochastic and deterministic ensemble Kalman-Bucy filters.

Both steps accept a :class:`LinearModel` or a general :class:`FilterModel`.
For the linear case the gain is ``Sigma_N H^T``; for nonlinear models it is
replaced by the empirical cross-covariance between X and h(X), normalised by
``1/(N-1)`` like ``Sigma_N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SimulationDiverged
from .models import Ensemble, FilterModel, LinearModel, as_ensemble, require_particles


@dataclass(frozen=True)
class EnsembleStats:
    mean: np.ndarray
    cov: np.ndarray


def ensemble_stats(ens) -> EnsembleStats:
    """Empirical mean and ``1/(N-1)`` covariance."""
    ens = as_ensemble(ens)
    require_particles(ens)
    X = ens.states
    mean = X.mean(axis=0)
    dev = X - mean
    cov = dev.T @ dev / (ens.n - 1)
    return EnsembleStats(mean, 0.5 * (cov + cov.T))


def _model_terms(ens: Ensemble, model):
    """Return ``(drift, h values, gain, constant sigma or None, h_mean)`` for one step.

    For a linear model the gain is ``Sigma H^T``; otherwise the ensemble
    cross-covariance between states and h values is used.
    """
    X = ens.states
    if isinstance(model, LinearModel):
        stats = ensemble_stats(ens)
        gain = stats.cov @ model.H.T
        return X @ model.A.T, X @ model.H.T, gain, model.sigma, stats.mean @ model.H.T
    hX = model.h(X).reshape(ens.n, model.dim_obs)
    h_mean = hX.mean(axis=0)
    dev_x = X - X.mean(axis=0)
    gain = dev_x.T @ (hX - h_mean) / (ens.n - 1)
    return model.a(X).reshape(X.shape), hX, gain, None, h_mean


def _signal_noise(model, X, dB, sigma_const):
    if sigma_const is not None:
        return dB @ sigma_const.T
    sig = model.sigma(X).reshape(X.shape[0], X.shape[1], X.shape[1])
    return np.einsum("nij,nj->ni", sig, dB)


def _draw(rng, shape, dt, zero_noise, given):
    if given is not None:
        return np.asarray(given, dtype=float).reshape(shape)
    if zero_noise:
        return np.zeros(shape)
    if rng is None:
        raise ValueError("an rng is required unless zero_noise is set or noise is given")
    return np.sqrt(dt) * rng.standard_normal(shape)


def _finish(X, step):
    bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
    if bad.size:
        raise SimulationDiverged(
            f"particle {bad[0]} became non-finite" + (f" at step {step}" if step is not None else ""),
            step=step,
            particle=int(bad[0]),
        )
    return Ensemble(X)


def stochastic_enkbf_step(
    ens,
    dz,
    dt: float,
    model: LinearModel | FilterModel,
    rng: np.random.Generator | None = None,
    *,
    zero_noise: bool = False,
    dB=None,
    dW=None,
    step: int | None = None,
) -> Ensemble:
    """Perturbed-innovation update; the gain is frozen from the pre-update ensemble."""
    ens = as_ensemble(ens)
    require_particles(ens)
    n, d = ens.states.shape
    m = model.dim_obs
    dz = np.asarray(dz, dtype=float).reshape(m)
    drift, hX, gain, sigma_const, _ = _model_terms(ens, model)
    dB = _draw(rng, (n, d), dt, zero_noise, dB)
    dW = _draw(rng, (n, m), dt, zero_noise, dW)
    innovation = dz - hX * dt + dW
    X = ens.states + drift * dt + _signal_noise(model, ens.states, dB, sigma_const) + innovation @ gain.T
    return _finish(X, step)


def deterministic_enkbf_step(
    ens,
    dz,
    dt: float,
    model: LinearModel | FilterModel,
    rng: np.random.Generator | None = None,
    *,
    zero_noise: bool = False,
    dB=None,
    step: int | None = None,
) -> Ensemble:
    """Symmetrised-innovation update ``dZ - (h(X^i) + h_mean) dt / 2``."""
    ens = as_ensemble(ens)
    require_particles(ens)
    n, d = ens.states.shape
    m = model.dim_obs
    dz = np.asarray(dz, dtype=float).reshape(m)
    drift, hX, gain, sigma_const, h_mean = _model_terms(ens, model)
    dB = _draw(rng, (n, d), dt, zero_noise, dB)
    innovation = dz - 0.5 * (hX + h_mean) * dt
    X = ens.states + drift * dt + _signal_noise(model, ens.states, dB, sigma_const) + innovation @ gain.T
    return _finish(X, step)
