"""Experiment configuration files (YAML or JSON).

Top-level keys::

    kind         gain-eval | gain-bench | filter-run
    density      density key (gain experiments)        default bimodal_sigma2_0.2
    observation  observation key (gain experiments)    default identity
    model        model key (filter-run)                default linear_1d
    algorithms   list of {name, ...} gain algorithms   (gain experiments)
    filters      list of {name, ...} filters           (filter-run)
    N            particle count or list of counts
    trials       Monte Carlo trials                    default 100
    dt           time step (filter-run)                default 0.01
    horizon      final time (filter-run)               default 1.0
    seed         64-bit master seed                    default 0
    out          output CSV path
    workers      process pool size                     default 1
    record_every time-series thinning (filter-run)     default 1

Algorithm entries: ``{name: constant}``, ``{name: galerkin, M: [1, 3, 5]}``,
``{name: kernel, epsilon: [...], L: 1000}``, ``{name: coupling, epsilon: [...]}``.
Filter entries: ``kbf``, ``ekbf``, ``enkbf-stochastic``, ``enkbf-deterministic``
and ``{name: fpf, gain: <algorithm entry or "exact">}``.
Unknown keys anywhere are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..catalog import DENSITIES, MODELS, OBSERVATIONS
from ..errors import ConfigError

KINDS = ("gain-eval", "gain-bench", "filter-run")
GAIN_ALGORITHMS = {
    "constant": {},
    "galerkin": {"M": [1]},
    "kernel": {"epsilon": [0.1], "L": 1000},
    "coupling": {"epsilon": [0.1], "method": "auto"},
}
FILTERS = ("kbf", "ekbf", "enkbf-stochastic", "enkbf-deterministic", "fpf")


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    params: dict = field(default_factory=dict)

    def variants(self):
        """Expand list-valued sweep parameters into ``(param_value, kwargs)`` pairs."""
        if self.name == "constant":
            return [("", {})]
        if self.name == "galerkin":
            return [(M, {"M": M}) for M in self.params["M"]]
        if self.name == "kernel":
            return [(e, {"epsilon": e, "L": self.params["L"]}) for e in self.params["epsilon"]]
        if self.name == "coupling":
            return [(e, {"epsilon": e, "method": self.params["method"]}) for e in self.params["epsilon"]]
        raise ConfigError(f"unknown gain algorithm {self.name!r}")


@dataclass(frozen=True)
class FilterSpec:
    name: str
    gain: AlgorithmSpec | str | None = None

    @property
    def tag(self) -> str:
        if self.name != "fpf":
            return self.name
        if self.gain == "exact":
            return "fpf-exact"
        (param, _), = self.gain.variants()
        return f"fpf-{self.gain.name}" + (f":{param:g}" if param != "" else "")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    density: str = "bimodal_sigma2_0.2"
    observation: str = "identity"
    model: str = "linear_1d"
    algorithms: tuple = ()
    filters: tuple = ()
    N: tuple = (100,)
    trials: int = 100
    dt: float = 0.01
    horizon: float = 1.0
    seed: int = 0
    out: str | None = None
    workers: int = 1
    record_every: int = 1

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _as_list(value, cast, key):
    values = value if isinstance(value, (list, tuple)) else [value]
    try:
        return [cast(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {cast.__name__} value(s), got {value!r}") from None


def parse_algorithm(entry, where="algorithms") -> AlgorithmSpec:
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, dict) or "name" not in entry:
        raise ConfigError(f"{where}: each entry needs a 'name'")
    name = entry["name"]
    if name not in GAIN_ALGORITHMS:
        raise ConfigError(f"{where}: unknown gain algorithm {name!r}; known: {sorted(GAIN_ALGORITHMS)}")
    allowed = GAIN_ALGORITHMS[name]
    extra = set(entry) - {"name"} - set(allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)} for algorithm {name!r}")
    params = dict(allowed)
    params.update({k: v for k, v in entry.items() if k != "name"})
    if name == "galerkin":
        params["M"] = _as_list(params["M"], int, f"{where}.M")
        if any(M < 1 for M in params["M"]):
            raise ConfigError(f"{where}.M: basis size must be >= 1")
    if name in ("kernel", "coupling"):
        params["epsilon"] = _as_list(params["epsilon"], float, f"{where}.epsilon")
        if any(e <= 0 for e in params["epsilon"]):
            raise ConfigError(f"{where}.epsilon: values must be positive")
    if name == "kernel":
        params["L"] = int(params["L"])
        if params["L"] < 1:
            raise ConfigError(f"{where}.L must be >= 1")
    if name == "coupling" and params["method"] not in ("auto", "monotone", "simplex"):
        raise ConfigError(f"{where}.method must be auto, monotone or simplex")
    return AlgorithmSpec(name, params)


def parse_filter(entry) -> FilterSpec:
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, dict) or "name" not in entry:
        raise ConfigError("filters: each entry needs a 'name'")
    name = entry["name"]
    if name not in FILTERS:
        raise ConfigError(f"filters: unknown filter {name!r}; known: {list(FILTERS)}")
    extra = set(entry) - {"name", "gain"}
    if extra or (name != "fpf" and "gain" in entry):
        raise ConfigError(f"filters: unknown key(s) {sorted(extra or {'gain'})} for filter {name!r}")
    if name != "fpf":
        return FilterSpec(name)
    gain = entry.get("gain", "constant")
    if gain == "exact":
        return FilterSpec(name, "exact")
    spec = parse_algorithm(gain, where="filters.gain")
    for key in ("M", "epsilon"):
        if key in spec.params and len(spec.params[key]) != 1:
            raise ConfigError(f"filters.gain.{key}: an FPF filter takes a single value")
    return FilterSpec(name, spec)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown config key(s): {sorted(extra)}")
    if raw.get("kind") not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {raw.get('kind')!r}")
    kw = dict(raw)
    if "algorithms" in kw:
        kw["algorithms"] = tuple(parse_algorithm(a) for a in kw["algorithms"] or [])
    if "filters" in kw:
        kw["filters"] = tuple(parse_filter(f) for f in kw["filters"] or [])
    if "N" in kw:
        kw["N"] = tuple(_as_list(kw["N"], int, "N"))
    for key, cast in (("trials", int), ("workers", int), ("record_every", int), ("seed", int),
                      ("dt", float), ("horizon", float)):
        if key in kw:
            kw[key] = cast(kw[key])
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig):
    if cfg.trials < 1:
        raise ConfigError("trials must be >= 1")
    if cfg.workers < 1 or cfg.record_every < 1:
        raise ConfigError("workers and record_every must be >= 1")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if any(n < 2 for n in cfg.N):
        raise ConfigError("every N must be >= 2")
    if cfg.kind in ("gain-eval", "gain-bench"):
        if cfg.density not in DENSITIES:
            raise ConfigError(f"unknown density {cfg.density!r}; known: {sorted(DENSITIES)}")
        if cfg.observation not in OBSERVATIONS:
            raise ConfigError(f"unknown observation {cfg.observation!r}; known: {sorted(OBSERVATIONS)}")
        if DENSITIES[cfg.density].dim != 1:
            raise ConfigError("gain experiments need a one-dimensional density for the exact oracle")
        if not cfg.algorithms:
            raise ConfigError("gain experiments need at least one algorithm")
    else:
        if cfg.model not in MODELS:
            raise ConfigError(f"unknown model {cfg.model!r}; known: {sorted(MODELS)}")
        if not cfg.filters:
            raise ConfigError("filter-run needs at least one filter")
        if cfg.dt <= 0 or cfg.horizon <= 0:
            raise ConfigError("dt and horizon must be positive")
        entry = MODELS[cfg.model]
        for spec in cfg.filters:
            if spec.name == "kbf" and entry.linear is None:
                raise ConfigError(f"kbf requires a linear model; {cfg.model!r} is nonlinear")
            if spec.name == "ekbf" and entry.jacobians is None:
                raise ConfigError(f"ekbf requires Jacobians for {cfg.model!r}")
            if spec.gain == "exact" and (entry.linear is None or entry.model.dim_state != 1):
                raise ConfigError("fpf with the exact gain needs a scalar linear-Gaussian model")


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(raw)
