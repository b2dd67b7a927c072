"""Problem data: model functions, linear-Gaussian specialisation, mixtures.

Model callables are vectorised over leading axes: ``drift`` and
``observation`` map ``(..., d)`` to ``(..., d)`` and ``(..., m)``;
``diffusion`` maps ``(..., d)`` to ``(..., d, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InsufficientEnsemble, ModelError

Array = np.ndarray
VectorMap = Callable[[Array], Array]


@dataclass(frozen=True)
class FilterModel:
    """Signal ``dX = a(X)dt + sigma(X)dB`` observed as ``dZ = h(X)dt + dW``."""

    dim_state: int
    dim_obs: int
    drift: VectorMap
    diffusion: VectorMap
    observation: VectorMap
    name: str = "model"

    def __post_init__(self):
        if self.dim_state < 1 or self.dim_obs < 1:
            raise ModelError("dim_state and dim_obs must be positive")

    def a(self, x):
        return np.asarray(self.drift(np.asarray(x, dtype=float)), dtype=float)

    def sigma(self, x):
        return np.asarray(self.diffusion(np.asarray(x, dtype=float)), dtype=float)

    def h(self, x):
        return np.asarray(self.observation(np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class LinearModel:
    """``a(x) = A x``, ``h(x) = H x`` and constant diffusion ``sigma``."""

    A: Array
    sigma: Array
    H: Array

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        d = A.shape[0]
        if A.shape != (d, d) or sigma.shape != (d, d) or H.shape[1] != d:
            raise ModelError(
                f"inconsistent shapes A{A.shape} sigma{sigma.shape} H{H.shape}"
            )
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "H", H)

    @property
    def dim_state(self) -> int:
        return self.A.shape[0]

    @property
    def dim_obs(self) -> int:
        return self.H.shape[0]

    def to_filter_model(self, name="linear") -> FilterModel:
        A, sigma, H = self.A, self.sigma, self.H

        def drift(x):
            return x @ A.T

        def diffusion(x):
            return np.broadcast_to(sigma, x.shape[:-1] + sigma.shape)

        def observation(x):
            return x @ H.T

        return FilterModel(self.dim_state, self.dim_obs, drift, diffusion, observation, name)


@dataclass(frozen=True)
class GaussianState:
    mean: Array
    cov: Array

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        d = mean.shape[0]
        if cov.shape != (d, d):
            raise ModelError(f"covariance shape {cov.shape} does not match mean of length {d}")
        scale = max(np.abs(cov).max(), 1e-300)
        if np.abs(cov - cov.T).max() > 1e-10 * scale:
            raise ModelError("covariance is not symmetric")
        tr = np.trace(cov)
        if d and np.linalg.eigvalsh(cov).min() < -1e-10 * max(tr, 0.0):
            raise ModelError("covariance is not positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted sum of Gaussians; covariances are validated by Cholesky."""

    weights: Array
    means: Array
    covariances: Array
    _chol: Array = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        k = w.shape[0]
        means = np.asarray(self.means, dtype=float).reshape(k, -1)
        d = means.shape[1]
        covs = np.asarray(self.covariances, dtype=float).reshape(k, d, d)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ModelError("mixture weights must be nonnegative and sum to 1")
        if not np.allclose(covs, np.swapaxes(covs, 1, 2), rtol=0, atol=1e-12):
            raise ModelError("mixture covariances must be symmetric")
        try:
            chol = np.linalg.cholesky(covs)
        except np.linalg.LinAlgError as exc:
            raise ModelError("mixture covariance is not positive definite") from exc
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "_chol", chol)

    @classmethod
    def gaussian(cls, mean, cov) -> "GaussianMixture":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls([1.0], mean[None], np.atleast_2d(cov)[None])

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    def mean(self) -> Array:
        return self.weights @ self.means

    def cov(self) -> Array:
        mu = self.mean()
        dev = self.means - mu
        return np.einsum("k,kij->ij", self.weights, self.covariances) + np.einsum(
            "k,ki,kj->ij", self.weights, dev, dev
        )

    def log_component_densities(self, x) -> Array:
        """``log w_k + log N(x; mu_k, S_k)`` with shape ``(..., K)``."""
        x = np.asarray(x, dtype=float)
        if self.dim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        d = self.dim
        diff = x[..., None, :] - self.means  # (..., K, d)
        inv_chol = np.linalg.inv(self._chol)  # (K, d, d)
        z = np.einsum("kij,...kj->...ki", inv_chol, diff)
        logdet = 2.0 * np.log(np.diagonal(self._chol, axis1=1, axis2=2)).sum(axis=1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return logw - 0.5 * (np.sum(z * z, axis=-1) + logdet + d * np.log(2.0 * np.pi))


def mixture_density(mix: GaussianMixture, x) -> Array:
    """Evaluate the mixture density.

    For ``d == 1`` any array of points is accepted and the result has the
    same shape; otherwise ``x`` has shape ``(..., d)``.
    """
    logc = mix.log_component_densities(x)
    return np.exp(logc).sum(axis=-1)


@dataclass(frozen=True)
class Ensemble:
    """N particle states in R^d, stored as an ``(N, d)`` array."""

    states: Array

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.ndim != 2:
            raise ModelError(f"ensemble states must be (N, d), got shape {states.shape}")
        if not np.all(np.isfinite(states)):
            raise ModelError("ensemble contains non-finite states")
        object.__setattr__(self, "states", states)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return self.n

    def permuted(self, perm) -> "Ensemble":
        return Ensemble(self.states[np.asarray(perm)])


def as_ensemble(ens) -> Ensemble:
    return ens if isinstance(ens, Ensemble) else Ensemble(ens)


def require_particles(ens: Ensemble, minimum=2):
    if ens.n < minimum:
        raise InsufficientEnsemble(f"need at least {minimum} particles, got {ens.n}")


def mixture_sample(mix: GaussianMixture, n: int, rng: np.random.Generator) -> Ensemble:
    """Draw ``n`` i.i.d. samples: component by weight, then a Gaussian draw."""
    if n < 1:
        raise ValueError("n must be at least 1")
    comp = rng.choice(mix.n_components, size=n, p=mix.weights)
    z = rng.standard_normal((n, mix.dim))
    x = mix.means[comp] + np.einsum("nij,nj->ni", mix._chol[comp], z)
    return Ensemble(x)
