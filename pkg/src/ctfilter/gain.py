"""Gain-function approximation for the weighted Poisson equation.

Given particles X^1..X^N drawn from a density rho and observation values
h(X^i), each approximator returns K^i ~ grad(phi)(X^i) where
``-div(rho grad phi) = (h - h_mean) rho``.  The scalar exact solution is
provided as an oracle for d = 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .errors import DegenerateKernel, IllConditionedBasis, ModelError, OracleFailure
from .models import GaussianMixture, as_ensemble, mixture_density, require_particles

MAX_GALERKIN_CONDITION = 1e12


@dataclass(frozen=True)
class GainField:
    """Per-particle gains, shape ``(N, d, m)``."""

    gains: np.ndarray
    method_tag: str

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if g.ndim != 3:
            raise ModelError(f"gain field must be (N, d, m), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise ModelError(f"{self.method_tag}: non-finite gain")
        object.__setattr__(self, "gains", g)

    def __len__(self):
        return self.gains.shape[0]

    def scalar(self) -> np.ndarray:
        """Gains as a length-N vector; only valid for d = m = 1."""
        if self.gains.shape[1:] != (1, 1):
            raise ValueError("scalar() requires d = m = 1")
        return self.gains[:, 0, 0]


def _obs_matrix(h_vals, n) -> np.ndarray:
    h = np.asarray(h_vals, dtype=float)
    return h.reshape(n, -1)


def _scalar_obs(h_vals, n, method) -> np.ndarray:
    h = _obs_matrix(h_vals, n)
    if h.shape[1] != 1:
        raise ValueError(f"{method} gain supports scalar observations only (m = 1)")
    return h[:, 0]


# --------------------------------------------------------------------------
# exact scalar solution


def _quad(fun, lo, hi, epsabs, points=None):
    if hi <= lo:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(
            fun, lo, hi, epsabs=epsabs, epsrel=0.0, limit=200, points=points, full_output=1
        )[:3]
    if err > epsabs * 10 or not np.isfinite(val):
        raise OracleFailure(f"quadrature on [{lo:g}, {hi:g}] did not converge (error estimate {err:.2e})")
    return val


def oracle_domain(density: GaussianMixture) -> tuple[float, float]:
    """Quadrature range: mixture mean range +/- 10 component standard deviations."""
    mu = density.means[:, 0]
    sd = np.sqrt(density.covariances[:, 0, 0])
    return float((mu - 10 * sd).min()), float((mu + 10 * sd).max())


def exact_gain_scalar(density: GaussianMixture, h: Callable, x, *, epsabs: float = 1e-8):
    """Exact gain ``K(x) = -(1/rho(x)) int_{-inf}^x rho(z)(h(z) - h_mean) dz`` for d = 1.

    ``x`` may be a scalar or an array.  Points left of the density mean are
    integrated from the left tail and points right of it from the right tail
    (the full integral vanishes), which avoids cancellation in the tails.
    """
    if density.dim != 1:
        raise ValueError("exact_gain_scalar requires a one-dimensional density")
    lo, hi = oracle_domain(density)
    breaks = sorted(set(float(m) for m in density.means[:, 0]))

    w = [float(v) for v in density.weights]
    mu = [float(v) for v in density.means[:, 0]]
    var = [float(v) for v in density.covariances[:, 0, 0]]
    norm = [wk / math.sqrt(2.0 * math.pi * vk) for wk, vk in zip(w, var)]

    def rho(z):
        return sum(c * math.exp(-0.5 * (z - m) ** 2 / v) for c, m, v in zip(norm, mu, var))

    h_mean = _quad(lambda z: rho(z) * float(h(z)), lo, hi, epsabs, points=breaks)

    def integrand(z):
        return rho(z) * (float(h(z)) - h_mean)

    xs = np.asarray(x, dtype=float)
    flat = xs.ravel()
    center = float(density.mean()[0])
    out = np.empty_like(flat)

    order = np.argsort(flat)
    left = [i for i in order if flat[i] <= center]
    right = [i for i in order[::-1] if flat[i] > center]

    acc, prev = 0.0, lo
    for i in left:
        xi = min(max(flat[i], lo), hi)
        acc += _quad(integrand, prev, xi, epsabs / max(len(left), 1))
        prev = xi
        out[i] = acc
    acc, prev = 0.0, hi
    for i in right:
        xi = min(max(flat[i], lo), hi)
        acc -= _quad(integrand, xi, prev, epsabs / max(len(right), 1))
        prev = xi
        out[i] = acc

    dens = mixture_density(density, flat)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = -out / dens
    if not np.all(np.isfinite(gain)):
        raise OracleFailure("density underflow at a query point; exact gain undefined there")
    return gain.reshape(xs.shape) if xs.ndim else float(gain[0])


def exact_gain_affine(density: GaussianMixture, slope: float, x, offset: float = 0.0):
    """Closed-form exact gain for a 1-D Gaussian mixture and ``h(x) = slope*x + offset``.

    Same quantity as :func:`exact_gain_scalar`, evaluated with normal CDFs
    instead of quadrature; used where the oracle must be called at every
    particle of every time step.
    """
    if density.dim != 1:
        raise ValueError("exact_gain_affine requires a one-dimensional density")
    x = np.asarray(x, dtype=float)
    w = density.weights
    mu = density.means[:, 0]
    s = np.sqrt(density.covariances[:, 0, 0])
    mbar = w @ mu
    z = (x[..., None] - mu) / s
    pdf = np.exp(-0.5 * z**2) / (np.sqrt(2 * np.pi) * s)
    # Sum_k w_k (mu_k - mbar) Phi_k(x); uses the upper tail right of mbar.
    lower = special.ndtr(z)
    upper = special.ndtr(-z)
    shift = w * (mu - mbar)
    cdf_term = np.where(x[..., None] <= mbar, lower, -upper) @ shift
    rho = pdf @ w
    return slope * ((pdf * s**2) @ w - cdf_term) / rho


# --------------------------------------------------------------------------
# Algorithm: constant gain


def constant_gain(ens, h_vals) -> GainField:
    """``K = (1/N) sum_j (h(X^j) - h_mean) X^j``, the same d x m matrix for all particles."""
    ens = as_ensemble(ens)
    require_particles(ens)
    X = ens.states
    h = _obs_matrix(h_vals, ens.n)
    dh = h - h.mean(axis=0)
    K = X.T @ dh / ens.n
    return GainField(np.broadcast_to(K, (ens.n,) + K.shape).copy(), "constant")


# --------------------------------------------------------------------------
# Algorithm: Galerkin


@dataclass(frozen=True)
class GalerkinBasis:
    """Basis functions with gradients, vectorised over particles.

    ``values(X)`` returns ``(N, M)`` and ``gradients(X)`` returns ``(N, M, d)``.
    With ``standardize`` set, both are evaluated at standardised coordinates
    ``(X - mean) / std`` of the ensemble and gradients are mapped back by the
    chain rule.
    """

    values: Callable[[np.ndarray], np.ndarray]
    gradients: Callable[[np.ndarray], np.ndarray]
    size: int
    standardize: bool = False
    name: str = "basis"

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("a Galerkin basis needs at least one function")


def monomial_basis(M: int, d: int = 1, standardize: bool = True) -> GalerkinBasis:
    """Per-coordinate monomials ``x_l, x_l^2, ..., x_l^M`` (``M * d`` functions)."""
    powers = np.arange(1, M + 1)

    def values(X):
        return (X[:, None, :] ** powers[None, :, None]).reshape(X.shape[0], -1)

    def gradients(X):
        n = X.shape[0]
        dv = powers[None, :, None] * X[:, None, :] ** (powers[None, :, None] - 1)  # (N, M, d)
        G = np.zeros((n, M, d, d))
        idx = np.arange(d)
        G[:, :, idx, idx] = dv
        return G.reshape(n, M * d, d)

    return GalerkinBasis(values, gradients, M * d, standardize, name=f"monomial{M}")


def function_basis(funcs, grads, name="custom") -> GalerkinBasis:
    """Basis from lists of per-function callables ``f(X) -> (N,)``, ``g(X) -> (N, d)``."""

    def values(X):
        return np.stack([np.asarray(f(X), dtype=float).reshape(X.shape[0]) for f in funcs], axis=1)

    def gradients(X):
        return np.stack([np.asarray(g(X), dtype=float).reshape(X.shape) for g in grads], axis=1)

    return GalerkinBasis(values, gradients, len(funcs), False, name)


def galerkin_gain(ens, h_vals, basis: GalerkinBasis) -> GainField:
    ens = as_ensemble(ens)
    require_particles(ens)
    n = ens.n
    if n < basis.size:
        raise IllConditionedBasis(f"Galerkin needs N >= M (M={basis.size}, N={n})")
    h = _scalar_obs(h_vals, n, "Galerkin")
    X = ens.states
    if basis.standardize:
        loc = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        U = (X - loc) / scale
        psi = basis.values(U)
        grad = basis.gradients(U) / scale
    else:
        psi = basis.values(X)
        grad = basis.gradients(X)

    A = np.einsum("nkd,nld->kl", grad, grad) / n
    b = psi.T @ (h - h.mean()) / n
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_GALERKIN_CONDITION:
        raise IllConditionedBasis(
            f"Galerkin matrix condition number {cond:.3e} exceeds {MAX_GALERKIN_CONDITION:.0e} "
            f"(M={basis.size}, N={n})"
        )
    c = np.linalg.solve(A, b)
    K = np.einsum("k,nkd->nd", c, grad)
    return GainField(K[:, :, None], f"galerkin:{basis.name}")


# --------------------------------------------------------------------------
# Algorithm: kernel-based fixed point


@dataclass(frozen=True)
class KernelState:
    epsilon: float
    iterations: int
    phi: np.ndarray
    deltas: np.ndarray | None = field(default=None, repr=False)


def markov_kernel(X: np.ndarray, epsilon: float) -> np.ndarray:
    """Row-stochastic matrix T built from the symmetrically normalised Gaussian kernel."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    sq = np.sum(X * X, axis=1)
    dist2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    np.fill_diagonal(dist2, 0.0)
    g = np.exp(-dist2 / (4.0 * epsilon))
    off = g.copy()
    np.fill_diagonal(off, 0.0)
    if X.shape[0] > 1 and np.any(off.max(axis=1) == 0.0):
        row = int(np.flatnonzero(off.max(axis=1) == 0.0)[0])
        raise DegenerateKernel(
            f"kernel row {row} has no off-diagonal mass at epsilon={epsilon:g}; increase epsilon"
        )
    root = np.sqrt(g.sum(axis=1))
    k = g / root[:, None] / root[None, :]
    return k / k.sum(axis=1, keepdims=True)


def _kernel_a(T, r, epsilon):
    return T * (r[None, :] - (T @ r)[:, None]) / (2.0 * epsilon)


def kernel_gain(
    ens,
    h_vals,
    epsilon: float,
    L: int,
    phi_prev=None,
    *,
    log_deltas: bool = False,
):
    """Kernel-based gain by L successive-approximation sweeps.

    Returns ``(GainField, KernelState)``; pass ``state.phi`` back as
    ``phi_prev`` on the next time step to warm-start the iteration.
    """
    if L < 1:
        raise ValueError("L must be at least 1")
    ens = as_ensemble(ens)
    require_particles(ens)
    n = ens.n
    X = ens.states
    h = _scalar_obs(h_vals, n, "kernel")
    T = markov_kernel(X, epsilon)
    eh = epsilon * (h - h.mean())

    phi = np.zeros(n) if phi_prev is None else np.array(phi_prev, dtype=float).reshape(n)
    deltas = np.empty(L) if log_deltas else None
    for sweep in range(L):
        new = T @ phi + eh
        new -= new.mean()
        if deltas is not None:
            deltas[sweep] = np.abs(new - phi).max()
        phi = new

    a = _kernel_a(T, phi + eh, epsilon)
    K = a @ X
    state = KernelState(epsilon, L, phi, deltas)
    return GainField(K[:, :, None], f"kernel:{epsilon:g}"), state


def kernel_coefficients(ens, h_vals, epsilon: float, L: int, phi_prev=None):
    """The matrices ``T`` and ``a`` from one kernel gain evaluation (diagnostics)."""
    ens = as_ensemble(ens)
    h = _scalar_obs(h_vals, ens.n, "kernel")
    _, state = kernel_gain(ens, h, epsilon, L, phi_prev)
    T = markov_kernel(ens.states, epsilon)
    return T, _kernel_a(T, state.phi + epsilon * (h - h.mean()), epsilon)
