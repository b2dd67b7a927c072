"""Feedback particle filter with pluggable gain approximation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import SimulationDiverged
from .gain import (
    GainField,
    GalerkinBasis,
    constant_gain,
    exact_gain_affine,
    exact_gain_scalar,
    galerkin_gain,
    kernel_gain,
)
from .models import Ensemble, FilterModel, GaussianMixture, LinearModel, as_ensemble, require_particles
from .transport import coupling_gain


class GainApproximator:
    """Maps ``(ensemble, h values, warm state)`` to ``(GainField, next warm state)``.

    ``calls`` counts invocations so callers can check that a gain is computed
    exactly once per filter step.
    """

    tag = "gain"

    def __init__(self):
        self.calls = 0

    def __call__(self, ens: Ensemble, h_vals, warm=None, step=None):
        self.calls += 1
        return self.compute(ens, h_vals, warm, step)

    def compute(self, ens, h_vals, warm, step):
        raise NotImplementedError


class ConstantGain(GainApproximator):
    tag = "constant"

    def compute(self, ens, h_vals, warm, step):
        return constant_gain(ens, h_vals), None


class GalerkinGain(GainApproximator):
    def __init__(self, basis: GalerkinBasis):
        super().__init__()
        self.basis = basis
        self.tag = f"galerkin:{basis.name}"

    def compute(self, ens, h_vals, warm, step):
        return galerkin_gain(ens, h_vals, self.basis), None


class KernelGain(GainApproximator):
    """Kernel gain; the fixed-point iterate is carried to the next step."""

    def __init__(self, epsilon: float, L: int = 1000):
        super().__init__()
        self.epsilon = epsilon
        self.L = L
        self.tag = f"kernel:{epsilon:g}"

    def compute(self, ens, h_vals, warm, step):
        phi_prev = None
        if warm is not None and len(warm.phi) == ens.n:
            phi_prev = warm.phi
        return kernel_gain(ens, h_vals, self.epsilon, self.L, phi_prev)


class CouplingGain(GainApproximator):
    def __init__(self, epsilon: float = 0.1, method: str = "auto"):
        super().__init__()
        self.epsilon = epsilon
        self.method = method
        self.tag = f"coupling:{epsilon:g}"

    def compute(self, ens, h_vals, warm, step):
        return coupling_gain(ens, h_vals, self.epsilon, method=self.method), None


class ExactGain(GainApproximator):
    """Exact scalar gain for a known density (d = 1).

    ``density_at(step)`` returns the density of the particles at that step,
    e.g. the Kalman-Bucy posterior in a linear-Gaussian twin experiment.  If
    ``slope`` is given the observation is taken to be affine and the closed
    form is used instead of quadrature.
    """

    tag = "exact"

    def __init__(self, density_at: Callable[[int], GaussianMixture], h=None, slope=None):
        super().__init__()
        if h is None and slope is None:
            raise ValueError("ExactGain needs an observation function or an affine slope")
        self.density_at = density_at
        self.h = h
        self.slope = slope

    def compute(self, ens, h_vals, warm, step):
        if ens.dim != 1:
            raise ValueError("exact gain oracle is limited to d = 1")
        density = self.density_at(step)
        x = ens.states[:, 0]
        if self.slope is not None:
            K = exact_gain_affine(density, self.slope, x)
        else:
            K = exact_gain_scalar(density, self.h, x)
        return GainField(np.asarray(K).reshape(-1, 1, 1), "exact"), None


def _as_filter_model(model):
    return model.to_filter_model() if isinstance(model, LinearModel) else model


@dataclass
class FPFResult:
    ensemble: Ensemble
    gain: GainField
    warm: object


def fpf_step(
    ens,
    dz,
    dt: float,
    model: FilterModel | LinearModel,
    gain: GainApproximator,
    rng: np.random.Generator | None = None,
    *,
    warm=None,
    step: int | None = None,
    zero_noise: bool = False,
    dB=None,
    full_output: bool = False,
):
    """One explicit step of the feedback particle filter.

    The gain and ``h_mean`` are computed once from the pre-update ensemble.
    Returns the new ensemble, or an :class:`FPFResult` carrying the gain and
    warm-start state when ``full_output`` is set.
    """
    ens = as_ensemble(ens)
    require_particles(ens)
    fm = _as_filter_model(model)
    n, d = ens.states.shape
    m = fm.dim_obs
    X = ens.states
    dz = np.asarray(dz, dtype=float).reshape(m)
    hX = fm.h(X).reshape(n, m)
    h_mean = hX.mean(axis=0)
    field, warm_next = gain(ens, hX, warm, step)
    if len(field) != n:
        raise ValueError(f"gain approximator returned {len(field)} gains for {n} particles")

    if dB is None:
        if zero_noise:
            dB = np.zeros((n, d))
        else:
            if rng is None:
                raise ValueError("an rng is required unless zero_noise is set or dB is given")
            dB = np.sqrt(dt) * rng.standard_normal((n, d))
    dB = np.asarray(dB, dtype=float).reshape(n, d)
    sig = fm.sigma(X).reshape(n, d, d)
    innovation = dz - 0.5 * (hX + h_mean) * dt
    X_new = (
        X
        + fm.a(X).reshape(n, d) * dt
        + np.einsum("nij,nj->ni", sig, dB)
        + np.einsum("nij,nj->ni", field.gains, innovation)
    )
    bad = np.flatnonzero(~np.all(np.isfinite(X_new), axis=1))
    if bad.size:
        where = f" at step {step}" if step is not None else ""
        raise SimulationDiverged(f"particle {bad[0]} became non-finite{where}", step=step, particle=int(bad[0]))
    out = Ensemble(X_new)
    if full_output:
        return FPFResult(out, field, warm_next)
    return out
