"""Named models, densities and observation functions for config files.

Keys:

* densities: ``bimodal_sigma2_0.2``, ``gaussian_sigma2_0.2``, ``standard_normal``
* observations: ``identity`` (h(x) = x), ``cubic`` (h(x) = x^3)
* models: ``linear_1d`` (A = -0.5, sigma = 1, H = 1, prior N(0, 1)),
  ``double_well_1d`` (a(x) = x - x^3, sigma = 0.5, h(x) = x, prior bimodal)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError
from .kalman import JacobianPair
from .models import FilterModel, GaussianMixture, GaussianState, LinearModel


@dataclass(frozen=True)
class Observation:
    h: Callable
    grad: Callable
    slope: float | None = None  # set when h is affine in d = 1


@dataclass(frozen=True)
class ModelEntry:
    model: FilterModel
    prior: GaussianMixture
    linear: LinearModel | None = None
    jacobians: JacobianPair | None = None

    def prior_state(self) -> GaussianState:
        return GaussianState(self.prior.mean(), self.prior.cov())


def bimodal(sigma2=0.2) -> GaussianMixture:
    return GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [[[sigma2]], [[sigma2]]])


DENSITIES = {
    "bimodal_sigma2_0.2": bimodal(0.2),
    "gaussian_sigma2_0.2": GaussianMixture.gaussian([0.0], [[0.2]]),
    "standard_normal": GaussianMixture.gaussian([0.0], [[1.0]]),
}

OBSERVATIONS = {
    "identity": Observation(lambda x: x, lambda x: np.ones_like(x), slope=1.0),
    "cubic": Observation(lambda x: x**3, lambda x: 3 * x**2),
}


def _linear_1d() -> ModelEntry:
    lin = LinearModel([[-0.5]], [[1.0]], [[1.0]])
    jac = JacobianPair(lambda x: lin.A, lambda x: lin.H)
    return ModelEntry(lin.to_filter_model("linear_1d"), GaussianMixture.gaussian([0.0], [[1.0]]), lin, jac)


def _double_well_1d() -> ModelEntry:
    sigma = 0.5
    model = FilterModel(
        1,
        1,
        drift=lambda x: x - x**3,
        diffusion=lambda x: np.full(x.shape[:-1] + (1, 1), sigma),
        observation=lambda x: x,
        name="double_well_1d",
    )
    jac = JacobianPair(lambda x: np.atleast_2d(1.0 - 3.0 * x**2), lambda x: np.ones((1, 1)))
    return ModelEntry(model, bimodal(0.2), None, jac)


MODELS = {
    "linear_1d": _linear_1d(),
    "double_well_1d": _double_well_1d(),
}


def _lookup(table, key, kind):
    try:
        return table[key]
    except KeyError:
        raise ConfigError(f"unknown {kind} {key!r}; known: {sorted(table)}") from None


def get_density(key: str) -> GaussianMixture:
    return _lookup(DENSITIES, key, "density")


def get_observation(key: str) -> Observation:
    return _lookup(OBSERVATIONS, key, "observation")


def get_model(key: str) -> ModelEntry:
    return _lookup(MODELS, key, "model")
