"""Continuous-time filtering: Kalman-Bucy, ensemble Kalman-Bucy and feedback particle filters."""

from .enkbf import EnsembleStats, deterministic_enkbf_step, ensemble_stats, stochastic_enkbf_step
from .fpf import (
    ConstantGain,
    CouplingGain,
    ExactGain,
    GainApproximator,
    GalerkinGain,
    KernelGain,
    fpf_step,
)
from .gain import (
    GainField,
    GalerkinBasis,
    KernelState,
    constant_gain,
    exact_gain_affine,
    exact_gain_scalar,
    function_basis,
    galerkin_gain,
    kernel_gain,
    monomial_basis,
)
from .kalman import JacobianPair, ekbf_step, kbf_step, run_ekbf, run_kbf
from .models import (
    Ensemble,
    FilterModel,
    GaussianMixture,
    GaussianState,
    LinearModel,
    mixture_density,
    mixture_sample,
)
from .sde import PathRecord, simulate_truth_obs, wiener_increments
from .seeding import derive_stream
from .transport import Coupling, coupling_gain, monotone_coupling, solve_transportation

__version__ = "0.1.0"
