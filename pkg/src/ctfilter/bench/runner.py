"""Monte Carlo gain benchmarks and filter twin experiments."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..catalog import get_density, get_model, get_observation
from ..enkbf import deterministic_enkbf_step, ensemble_stats, stochastic_enkbf_step
from ..errors import FilterError
from ..fpf import ConstantGain, CouplingGain, ExactGain, GalerkinGain, KernelGain, fpf_step
from ..gain import GainField, exact_gain_scalar, monomial_basis
from ..kalman import run_ekbf, run_kbf
from ..models import GaussianMixture, mixture_density, mixture_sample
from ..sde import simulate_truth_obs
from ..seeding import derive_stream
from ..transport import coupling_gain
from .config import AlgorithmSpec, ExperimentConfig, FilterSpec


@dataclass(frozen=True)
class ErrorRecord:
    algorithm: str
    N: int
    param: object
    trial: int
    error: float
    status: str = "ok"


def gain_error(approx, exact) -> float:
    """Mean squared difference ``(1/N) sum |K_alg(X^i) - K_ex(X^i)|^2`` (d = 1)."""
    K = approx.scalar() if isinstance(approx, GainField) else np.asarray(approx, dtype=float).ravel()
    exact = np.asarray(exact, dtype=float).ravel()
    if K.shape != exact.shape:
        raise ValueError(f"gain length {K.shape[0]} does not match exact length {exact.shape[0]}")
    return float(np.mean((K - exact) ** 2))


def make_approximator(spec: AlgorithmSpec, kwargs: dict, d: int = 1):
    if spec.name == "constant":
        return ConstantGain()
    if spec.name == "galerkin":
        return GalerkinGain(monomial_basis(kwargs["M"], d))
    if spec.name == "kernel":
        return KernelGain(kwargs["epsilon"], kwargs["L"])
    if spec.name == "coupling":
        return CouplingGain(kwargs["epsilon"], kwargs["method"])
    raise ValueError(spec.name)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


# --------------------------------------------------------------------------
# gain experiments


def trial_ensemble(cfg: ExperimentConfig, N: int, trial: int):
    rng = derive_stream(cfg.seed, "gain", cfg.density, N, trial, "ensemble")
    return mixture_sample(get_density(cfg.density), N, rng)


def _gain_trial(cfg: ExperimentConfig, N: int, trial: int):
    density = get_density(cfg.density)
    obs = get_observation(cfg.observation)
    ens = trial_ensemble(cfg, N, trial)
    x = ens.states[:, 0]
    h_vals = obs.h(x)
    exact = exact_gain_scalar(density, obs.h, x)
    records = []
    for spec in cfg.algorithms:
        for param, kwargs in spec.variants():
            approx = make_approximator(spec, kwargs)
            try:
                field, _ = approx(ens, h_vals)
                records.append(ErrorRecord(spec.name, N, param, trial, gain_error(field, exact)))
            except FilterError as exc:
                records.append(ErrorRecord(spec.name, N, param, trial, math.nan, f"error: {type(exc).__name__}: {exc}"))
    return records


def _record_key(r: ErrorRecord):
    return (r.trial, r.N, r.algorithm, float(r.param) if r.param != "" else -1.0)


def run_gain_benchmark(cfg: ExperimentConfig) -> list[ErrorRecord]:
    """Every configured algorithm on fresh ensembles; one record per (algorithm, param, N, trial).

    All algorithms in a trial see the same ensemble.  Output is sorted, so it
    does not depend on the order algorithms are listed or on worker timing.
    """
    jobs = [(cfg, N, t) for t in range(cfg.trials) for N in cfg.N]
    records = [r for batch in _map(_gain_trial, jobs, cfg.workers) for r in batch]
    return sorted(records, key=_record_key)


ERROR_HEADER = ["algorithm", "param", "N", "trial", "error", "status"]


def error_rows(records):
    return [[r.algorithm, r.param, r.N, r.trial, r.error, r.status] for r in records]


def summarize_errors(records) -> dict:
    """Mean error per (algorithm, param, N) over successful trials."""
    groups = {}
    for r in records:
        if r.status == "ok":
            groups.setdefault((r.algorithm, r.param, r.N), []).append(r.error)
    return {k: float(np.mean(v)) for k, v in groups.items()}


def run_gain_eval(cfg: ExperimentConfig, dump_coupling: str | None = None):
    """Per-particle gains for one ensemble of size ``cfg.N[0]`` (trial 0).

    Returns rows ``algorithm, param, i, x, K_alg, K_exact, rho``.  When
    ``dump_coupling`` is a path stem, each coupling plan is written next to it.
    """
    density = get_density(cfg.density)
    obs = get_observation(cfg.observation)
    N = cfg.N[0]
    ens = trial_ensemble(cfg, N, 0)
    x = ens.states[:, 0]
    h_vals = obs.h(x)
    exact = exact_gain_scalar(density, obs.h, x)
    rho = mixture_density(density, x)
    rows = []
    for spec in sorted(cfg.algorithms, key=lambda s: s.name):
        for param, kwargs in spec.variants():
            try:
                if spec.name == "coupling":
                    field, coupling = coupling_gain(
                        ens, h_vals, kwargs["epsilon"], method=kwargs["method"], return_coupling=True
                    )
                    if dump_coupling is not None:
                        coupling.write_csv(f"{dump_coupling}.coupling_eps{param:g}.csv")
                else:
                    field, _ = make_approximator(spec, kwargs)(ens, h_vals)
                K = field.scalar()
            except FilterError:
                K = np.full(N, math.nan)
            for i in range(N):
                rows.append([spec.name, param, i, x[i], K[i], exact[i], rho[i]])
    return rows


GAIN_EVAL_HEADER = ["algorithm", "param", "i", "x", "K_alg", "K_exact", "rho"]


# --------------------------------------------------------------------------
# filter twin experiments


@dataclass
class FilterTrace:
    filter: str
    N: int
    means: np.ndarray  # (steps + 1, d)
    variances: np.ndarray  # (steps + 1, d)
    status: str = "ok"


def _ensemble_filter(cfg, spec: FilterSpec, N, trial, path, entry, kbf):
    model = entry.linear if entry.linear is not None else entry.model
    fm = entry.model
    tag = spec.tag
    init_rng = derive_stream(cfg.seed, "filter", cfg.model, trial, tag, N, "init")
    noise_rng = derive_stream(cfg.seed, "filter", cfg.model, trial, tag, N, "noise")
    ens = mixture_sample(entry.prior, N, init_rng)
    steps = path.steps
    d = fm.dim_state
    means = np.full((steps + 1, d), np.nan)
    variances = np.full((steps + 1, d), np.nan)

    approx = None
    if spec.name == "fpf":
        if spec.gain == "exact":
            kbf_means, kbf_covs = kbf
            slope = float(entry.linear.H[0, 0])
            approx = ExactGain(lambda k: GaussianMixture.gaussian(kbf_means[k], kbf_covs[k]), slope=slope)
        else:
            (_, kwargs), = spec.gain.variants()
            approx = make_approximator(spec.gain, kwargs, d)

    def record(k, e):
        st = ensemble_stats(e)
        means[k] = st.mean
        variances[k] = np.diag(st.cov)

    record(0, ens)
    warm = None
    try:
        for k in range(steps):
            dz = path.obs_increments[k]
            if spec.name == "enkbf-stochastic":
                ens = stochastic_enkbf_step(ens, dz, cfg.dt, model, noise_rng, step=k + 1)
            elif spec.name == "enkbf-deterministic":
                ens = deterministic_enkbf_step(ens, dz, cfg.dt, model, noise_rng, step=k + 1)
            else:
                res = fpf_step(ens, dz, cfg.dt, fm, approx, noise_rng, warm=warm, step=k, full_output=True)
                ens, warm = res.ensemble, res.warm
            record(k + 1, ens)
    except FilterError as exc:
        return FilterTrace(tag, N, means, variances, f"error: {type(exc).__name__}: {exc}")
    return FilterTrace(tag, N, means, variances)


def _filter_trial(cfg: ExperimentConfig, trial: int):
    entry = get_model(cfg.model)
    x0_rng = derive_stream(cfg.seed, "filter", cfg.model, trial, "x0")
    truth_rng = derive_stream(cfg.seed, "filter", cfg.model, trial, "truth")
    obs_rng = derive_stream(cfg.seed, "filter", cfg.model, trial, "obs")
    x0 = mixture_sample(entry.prior, 1, x0_rng).states[0]

    path = simulate_truth_obs(entry.model, x0, cfg.dt, cfg.steps, truth_rng, obs_rng)
    prior = entry.prior_state()
    kbf = None
    if entry.linear is not None:
        kbf = run_kbf(prior, path.obs_increments, cfg.dt, entry.linear)

    traces = []
    for spec in cfg.filters:
        if spec.name == "kbf":
            traces.append(FilterTrace("kbf", 0, kbf[0], np.diagonal(kbf[1], axis1=1, axis2=2)))
        elif spec.name == "ekbf":
            try:
                m, c = run_ekbf(prior, path.obs_increments, cfg.dt, entry.model, entry.jacobians)
                traces.append(FilterTrace("ekbf", 0, m, np.diagonal(c, axis1=1, axis2=2)))
            except FilterError as exc:
                nan = np.full_like(path.states, np.nan)
                traces.append(FilterTrace("ekbf", 0, nan, nan, f"error: {type(exc).__name__}: {exc}"))
        else:
            for N in cfg.N:
                traces.append(_ensemble_filter(cfg, spec, N, trial, path, entry, kbf))
    return path, kbf, traces


def _rms(a, b):
    diff = np.asarray(a) - np.asarray(b)
    return float(np.sqrt(np.mean(diff**2)))


def run_filter_experiment(cfg: ExperimentConfig):
    """Run every configured filter on a common truth/observation path per trial.

    Returns ``(series_rows, summary_rows)``.  Series rows are
    ``trial, filter, N, step, t, truth_*, mean_*, var_*``; summary rows are
    ``trial, filter, N, rmse_truth, rmse_vs_kbf, status`` where RMS values
    are taken over all time steps.
    """
    results = _map(_filter_trial, [(cfg, t) for t in range(cfg.trials)], cfg.workers)
    series, summary = [], []
    for trial, (path, kbf, traces) in enumerate(results):
        for tr in sorted(traces, key=lambda tr: (tr.filter, tr.N)):
            for k in range(0, path.steps + 1, cfg.record_every):
                series.append([trial, tr.filter, tr.N, k, path.times[k], *path.states[k], *tr.means[k], *tr.variances[k]])
            ok = tr.status == "ok"
            rmse = _rms(tr.means, path.states) if ok else math.nan
            vs_kbf = _rms(tr.means, kbf[0]) if ok and kbf is not None else math.nan
            summary.append([trial, tr.filter, tr.N, rmse, vs_kbf, tr.status])
    return series, summary


def series_header(d: int):
    return (
        ["trial", "filter", "N", "step", "t"]
        + [f"truth_{i + 1}" for i in range(d)]
        + [f"mean_{i + 1}" for i in range(d)]
        + [f"var_{i + 1}" for i in range(d)]
    )


SUMMARY_HEADER = ["trial", "filter", "N", "rmse_truth", "rmse_vs_kbf", "status"]
