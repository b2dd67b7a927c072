"""Kalman-Bucy filter and extended Kalman-Bucy filter, explicit Euler on a fixed grid."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalFailure
from .models import FilterModel, GaussianState, LinearModel

PSD_TOL = 1e-8


@dataclass(frozen=True)
class JacobianPair:
    """Jacobians of the drift (d x d) and observation (m x d) maps."""

    dA: Callable[[np.ndarray], np.ndarray]
    dH: Callable[[np.ndarray], np.ndarray]


def _checked_state(mean, cov) -> GaussianState:
    cov = 0.5 * (cov + cov.T)
    tr = abs(np.trace(cov))
    if not (np.all(np.isfinite(cov)) and np.all(np.isfinite(mean))):
        raise NumericalFailure("Kalman-Bucy state became non-finite")
    lam = np.linalg.eigvalsh(cov).min()
    if lam < -PSD_TOL * tr:
        raise NumericalFailure(f"covariance lost positive semidefiniteness (min eigenvalue {lam:.3e})")
    return GaussianState(mean, cov)


def _riccati_step(S, A, sigma_sq, H, dt):
    return S + (A @ S + S @ A.T + sigma_sq - S @ H.T @ H @ S) * dt


def kbf_step(state: GaussianState, dz, dt: float, model: LinearModel) -> GaussianState:
    """One Euler step of the conditional mean SDE and the Riccati ODE."""
    A, sigma, H = model.A, model.sigma, model.H
    m, S = state.mean, state.cov
    dz = np.asarray(dz, dtype=float).reshape(model.dim_obs)
    K = S @ H.T
    mean = m + A @ m * dt + K @ (dz - H @ m * dt)
    cov = _riccati_step(S, A, sigma @ sigma.T, H, dt)
    return _checked_state(mean, cov)


def ekbf_step(
    state: GaussianState, dz, dt: float, model: FilterModel, jac: JacobianPair
) -> GaussianState:
    """Extended Kalman-Bucy step with Jacobians evaluated at the current mean."""
    m, S = state.mean, state.cov
    d, p = model.dim_state, model.dim_obs
    dz = np.asarray(dz, dtype=float).reshape(p)
    A = np.asarray(jac.dA(m), dtype=float).reshape(d, d)
    H = np.asarray(jac.dH(m), dtype=float).reshape(p, d)
    sigma = model.sigma(m).reshape(d, d)
    K = S @ H.T
    mean = m + model.a(m).reshape(d) * dt + K @ (dz - model.h(m).reshape(p) * dt)
    cov = _riccati_step(S, A, sigma @ sigma.T, H, dt)
    return _checked_state(mean, cov)


def run_kbf(state: GaussianState, dz_seq, dt: float, model: LinearModel):
    """Run the filter over a sequence of increments; returns means and covariances
    of shape ``(steps + 1, d)`` and ``(steps + 1, d, d)``."""
    dz_seq = np.asarray(dz_seq, dtype=float).reshape(len(dz_seq), -1)
    means = [state.mean]
    covs = [state.cov]
    for dz in dz_seq:
        state = kbf_step(state, dz, dt, model)
        means.append(state.mean)
        covs.append(state.cov)
    return np.array(means), np.array(covs)


def run_ekbf(state: GaussianState, dz_seq, dt: float, model: FilterModel, jac: JacobianPair):
    dz_seq = np.asarray(dz_seq, dtype=float).reshape(len(dz_seq), -1)
    means = [state.mean]
    covs = [state.cov]
    for dz in dz_seq:
        state = ekbf_step(state, dz, dt, model, jac)
        means.append(state.mean)
        covs.append(state.cov)
    return np.array(means), np.array(covs)


def steady_state_variance_scalar(A: float, sigma: float, H: float) -> float:
    """Positive root of ``2 A S + sigma^2 - H^2 S^2 = 0``."""
    if H == 0:
        if A >= 0:
            raise ValueError("no steady state without observations for A >= 0")
        return sigma**2 / (-2.0 * A)
    return (A + np.sqrt(A**2 + (H * sigma) ** 2)) / H**2
