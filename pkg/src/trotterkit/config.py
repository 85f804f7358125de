"""Experiment configuration: one flat, commented YAML document per run.

Every key with its default, type and meaning lives in :data:`SCHEMA`; that
table is the single source of defaults and is what ``show-config`` prints.
Unknown keys are errors so a typo cannot silently fall back to a default.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .heatpot import SPATIAL_PROFILES, TIME_PROFILES
from .propagator import SchemeKind

#: bumped whenever a default in SCHEMA changes
DEFAULTS_VERSION = 1

# key -> (default, help); order is the order of the emitted file
SCHEMA = {
    "preset": (None, "preset the other keys were derived from (informative)"),
    "problem": ("heat", "heat | scalar"),
    # heat problem
    "dimension": (1, "space dimension of the box, 1 or 2"),
    "cells_per_axis": (64, "interior nodes per axis of the Dirichlet grid"),
    "domain_length": (1.0, "side length of the box"),
    "v0": ("zero", "time-independent spatial profile"),
    "v1": ("sin", "spatial profile multiplied by rho(t)"),
    "rho": ("holder", "time profile: const | holder | linear | cos"),
    "amp0": (0.0, "amplitude of v0"),
    "amp1": (1.0, "amplitude of rho(t) v1"),
    "beta": (0.75, "Hoelder exponent in time (rho = t^beta for 'holder'); the scalar problem has beta = 1"),
    # scalar problem
    "scalar_a": (1.0, "scalar generator A = (a)"),
    "scalar_b": (1.0, "scalar family B(t) = (b t)"),
    # experiment
    "alpha": (0.25, "relative-bound exponent used to judge the rate"),
    "horizon_T": (1.0, "time horizon T"),
    "scheme": ("Un", "Un | UnPrime | Vn | VnPrime"),
    "n_ladder": ([2, 4, 8, 16, 32, 64, 128, 256], "step counts of the error sweep"),
    "mesh_divisions": (16, "uniform Delta mesh: pairs s < t of a grid with this many cells"),
    "tol": (1e-10, "local tolerance of the reference integrator"),
    "window": (0.5, "fraction of the finest ladder points used in the rate fit"),
    "slack": (0.15, "allowed shortfall of the fitted rate below the theoretical rate"),
    "gamma_eps": (0.05, "gamma = 1 - gamma_eps when beta = 1"),
    "stability_n_max": (64, "largest n in the A-stability sweep"),
    "audit": (True, "measure C_alpha, L_beta, C_1* (stability is always checked)"),
    "bounds": (False, "run the bound validators as part of 'run'"),
    "evospace": (False, "run the evolution-space checks as part of 'run'"),
    "evospace_triples": ([[16, 8, 2], [16, 8, 4], [32, 16, 8]],
                         "(m, k, n) triples for the evolution-space checks"),
    "evospace_vectors": (20, "random space-time vectors per triple"),
    "seed": (0, "seed of every randomized check"),
    "threads": (1, "worker threads for mesh-parallel loops"),
    "out": ("results", "output directory"),
    "csv_only": (False, "skip the SVG plot"),
}

_CHOICES = {
    "problem": ("heat", "scalar"),
    "dimension": (1, 2),
    "v0": tuple(sorted(SPATIAL_PROFILES)),
    "v1": tuple(sorted(SPATIAL_PROFILES)),
    "rho": TIME_PROFILES,
    "scheme": tuple(k.value for k in SchemeKind),
}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str | None = SCHEMA["preset"][0]
    problem: str = SCHEMA["problem"][0]
    dimension: int = SCHEMA["dimension"][0]
    cells_per_axis: int = SCHEMA["cells_per_axis"][0]
    domain_length: float = SCHEMA["domain_length"][0]
    v0: str = SCHEMA["v0"][0]
    v1: str = SCHEMA["v1"][0]
    rho: str = SCHEMA["rho"][0]
    amp0: float = SCHEMA["amp0"][0]
    amp1: float = SCHEMA["amp1"][0]
    beta: float = SCHEMA["beta"][0]
    scalar_a: float = SCHEMA["scalar_a"][0]
    scalar_b: float = SCHEMA["scalar_b"][0]
    alpha: float = SCHEMA["alpha"][0]
    horizon_T: float = SCHEMA["horizon_T"][0]
    scheme: str = SCHEMA["scheme"][0]
    n_ladder: tuple = tuple(SCHEMA["n_ladder"][0])
    mesh_divisions: int = SCHEMA["mesh_divisions"][0]
    tol: float = SCHEMA["tol"][0]
    window: float = SCHEMA["window"][0]
    slack: float = SCHEMA["slack"][0]
    gamma_eps: float = SCHEMA["gamma_eps"][0]
    stability_n_max: int = SCHEMA["stability_n_max"][0]
    audit: bool = SCHEMA["audit"][0]
    bounds: bool = SCHEMA["bounds"][0]
    evospace: bool = SCHEMA["evospace"][0]
    evospace_triples: tuple = tuple(tuple(t) for t in SCHEMA["evospace_triples"][0])
    evospace_vectors: int = SCHEMA["evospace_vectors"][0]
    seed: int = SCHEMA["seed"][0]
    threads: int = SCHEMA["threads"][0]
    out: str = SCHEMA["out"][0]
    csv_only: bool = SCHEMA["csv_only"][0]

    def __post_init__(self):
        # lists from YAML become tuples so configs stay hashable and comparable
        object.__setattr__(self, "n_ladder", tuple(int(n) for n in self.n_ladder))
        object.__setattr__(self, "evospace_triples",
                           tuple(tuple(int(v) for v in t) for t in self.evospace_triples))
        for key, allowed in _CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"invalid value {getattr(self, key)!r} for key {key!r}; "
                                  f"allowed: {list(allowed)}")
        if any(n < 1 for n in self.n_ladder):
            raise ConfigError("n_ladder entries must be >= 1")
        if any(len(t) != 3 for t in self.evospace_triples):
            raise ConfigError("evospace_triples entries must be (m, k, n)")
        if self.seed < 0 or self.threads < 1:
            raise ConfigError("seed must be >= 0 and threads >= 1")
        if not 0 < self.window <= 1:
            raise ConfigError("window must lie in (0, 1]")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def as_dict(self) -> dict:
        d = asdict(self)
        d["n_ladder"] = list(self.n_ladder)
        d["evospace_triples"] = [list(t) for t in self.evospace_triples]
        return d


assert [f.name for f in fields(ExperimentConfig)] == list(SCHEMA)

PRESETS = {
    # A = (1), B(t) = t: Lipschitz in time, closed-form propagator
    "scalar": dict(problem="scalar", alpha=0.1, beta=1.0),
    # V = 1 + 4 t^0.75 sin(pi x)
    "heat1d-default": dict(problem="heat", v0="one", amp0=1.0, v1="sin", amp1=4.0),
    # V = 10 t^0.75 |sin(2 pi x)|: rough in space, Hoelder-sharp at t = 0
    "heat1d-sharp-holder": dict(problem="heat", v0="zero", v1="abs_sin2", amp1=10.0),
    "heat2d-small": dict(problem="heat", dimension=2, cells_per_axis=8, v0="zero", v1="sin",
                         amp1=4.0, n_ladder=(2, 4, 8, 16, 32, 64, 128)),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; allowed: {sorted(PRESETS)}")
    return ExperimentConfig(preset=name, **PRESETS[name])


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping of keys to values")
    unknown = sorted(set(data) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}; allowed keys: {list(SCHEMA)}")
    base = preset(data["preset"]) if data.get("preset") else ExperimentConfig()
    try:
        return replace(base, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dumps(cfg: ExperimentConfig) -> str:
    """Flat YAML with a comment above every key."""
    lines = [f"# trotterkit experiment config (defaults version {DEFAULTS_VERSION})"]
    for key, value in cfg.as_dict().items():
        lines.append(f"# {SCHEMA[key][1]}")
        lines.append(yaml.safe_dump({key: value}, default_flow_style=True, width=1000).strip()
                     .removeprefix("{").removesuffix("}"))
    return "\n".join(lines) + "\n"


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return from_dict(data or {})


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def resolve(spec: str) -> ExperimentConfig:
    """A preset name or a path to a config file."""
    if spec in PRESETS:
        return preset(spec)
    if not Path(spec).exists():
        raise ConfigError(f"{spec!r} is neither a preset ({sorted(PRESETS)}) nor a config file")
    return load(spec)


def defaults_table() -> str:
    return dumps(ExperimentConfig())
