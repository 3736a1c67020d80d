"""Experiment configuration: validation, key=value files, and flag merging.

A config names a model, a sampler, the sampler's settings, and the run shape
(chains/warmup/samples/thin/seed/output). Command-line flags override config
file values; unknown keys are rejected by name.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class DataError(ValueError):
    """Missing or malformed dataset input."""


MODELS = ("funnel", "oneway-cp", "oneway-ncp", "custom")
SAMPLERS = ("rwm", "mwg", "ehmc", "nuts", "rmhmc")
METRICS = ("unit", "diag")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one run."""

    model: str = "funnel"
    n: int = 25                      # funnel latent count
    data: str | None = None          # dataset path for one-way models
    sampler: str = "nuts"
    eps: float | None = None         # fixed step size (no adaptation if delta unset)
    adapt_delta: float | None = None # dual-averaging target acceptance
    n_leapfrog: int = 32             # static step count for ehmc/rmhmc
    max_depth: int = 10
    alpha: float = 1e6               # SoftAbs regularization
    scale: float | None = None       # global proposal scale factor for rwm/mwg
    metric: str = "unit"
    chains: int = 4
    warmup: int = 1000
    samples: int = 1000
    thin: int = 1
    seed: int = 1
    output: str | None = None
    save_warmup: bool = False
    name: str = "run"
    stream_offset: int = 0           # distinguishes runs sharing a seed
    parallel: bool = False
    record_stability: bool = False   # per-draw integrator stability bound (diagnostic)
    fp_tol: float = 1e-10
    fp_max: int = 100

    def validate(self) -> "ExperimentConfig":
        if self.model not in MODELS:
            raise ConfigError(f"unknown model id '{self.model}' (choose from {MODELS})")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler id '{self.sampler}' (choose from {SAMPLERS})")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric kind '{self.metric}' (choose from {METRICS})")
        if self.chains < 1:
            raise ConfigError(f"'chains' must be >= 1, got {self.chains}")
        if self.warmup < 0:
            raise ConfigError(f"'warmup' must be >= 0, got {self.warmup}")
        if self.samples < 0:
            raise ConfigError(f"'samples' must be >= 0, got {self.samples}")
        if self.thin < 1:
            raise ConfigError(f"'thin' must be >= 1, got {self.thin}")
        if self.model == "funnel" and self.n < 1:
            raise ConfigError(f"'n' must be >= 1, got {self.n}")
        if self.eps is not None and self.eps <= 0:
            raise ConfigError(f"'eps' must be > 0, got {self.eps}")
        if self.adapt_delta is not None and not 0.0 < self.adapt_delta < 1.0:
            raise ConfigError(f"'adapt_delta' must be in (0, 1), got {self.adapt_delta}")
        if self.scale is not None and self.scale <= 0:
            raise ConfigError(f"'scale' must be > 0, got {self.scale}")
        if self.n_leapfrog < 1:
            raise ConfigError(f"'n_leapfrog' must be >= 1, got {self.n_leapfrog}")
        if self.max_depth < 1:
            raise ConfigError(f"'max_depth' must be >= 1, got {self.max_depth}")
        if self.alpha <= 0:
            raise ConfigError(f"'alpha' must be > 0, got {self.alpha}")
        if self.model in ("oneway-cp", "oneway-ncp"):
            if self.data is None:
                raise ConfigError(f"model '{self.model}' requires 'data'")
            if not Path(self.data).exists():
                raise DataError(f"data file not found: {self.data}")
        if self.sampler in ("ehmc", "nuts", "rmhmc") and self.eps is None and self.adapt_delta is None:
            raise ConfigError(f"sampler '{self.sampler}' needs 'eps' or 'adapt_delta'")
        return self


_BOOL_KEYS = {"save_warmup", "parallel", "record_stability"}
_INT_KEYS = {"n", "n_leapfrog", "max_depth", "chains", "warmup", "samples",
             "thin", "seed", "stream_offset", "fp_max"}
_FLOAT_KEYS = {"eps", "adapt_delta", "alpha", "scale", "fp_tol"}
_STR_KEYS = {"model", "data", "sampler", "metric", "output", "name"}

# Aliases mirroring the sample-driver flag vocabulary.
_ALIASES = {
    "num_warmup": "warmup",
    "num_samples": "samples",
    "delta": "adapt_delta",
    "stepsize": "eps",
    "int_steps": "n_leapfrog",
    "file": "data",
}


def _coerce(key: str, raw: str):
    try:
        if key in _BOOL_KEYS:
            low = raw.strip().lower()
            if low in ("1", "true", "yes"):
                return True
            if low in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"malformed value for '{key}': {raw!r}") from None


def read_config_file(path: str | Path) -> dict:
    """Parse a key=value config file; '#' starts a comment."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{ln}: expected key=value, got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS:
            raise ConfigError(f"{path}:{ln}: unknown key '{key}'")
        values[key] = _coerce(key, raw)
    return values


def parse_config(flag_values: dict, config_file: str | Path | None = None) -> ExperimentConfig:
    """Merge config-file values with flag overrides into a validated config.

    ``flag_values`` holds only flags the user actually passed (None means
    unset); they take precedence over the file.
    """
    merged: dict = {}
    if config_file is not None:
        merged.update(read_config_file(config_file))
    for key, value in flag_values.items():
        if value is not None:
            merged[key] = value
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**merged).validate()


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    return replace(cfg, **kwargs).validate()
