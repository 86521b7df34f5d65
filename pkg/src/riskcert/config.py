"""Experiment configuration: YAML file <-> :class:`ExperimentConfig`.

A config file looks like::

    system:
      A: [[1.2, 0.3], [0.0, 0.5]]
      B: [[1.0], [0.5]]
      E: [[1.0, 2.0], [0.5, -0.5]]
      K: [[-0.7, -0.2]]
      Sigma_w: [[0.5, 0.0], [0.0, 0.25]]
    epsilon: 0.3
    x0: [2.0, 3.0]
    horizon: 60
    runs: 500
    seed: 42
    radius: 6.0
    trigger: {corollary: 1, kind: state_error_abs, sigma: max}
    sampler: gaussian

``trigger`` may also be a shorthand string: ``cor1`` ... ``cor4`` or
``sigma=VALUE``. Omitted keys take the defaults of the dataclasses below.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import InvalidInputError, RiskCertError
from .risk import MomentAmbiguitySet
from .simulation import SAMPLER_KINDS, DisturbanceSampler
from .triggers import (
    INPUT_ERROR_ABS,
    INPUT_ERROR_REL,
    SIGMA_RULES,
    STATE_ERROR_ABS,
    TRIGGER_KINDS,
    ClosedLoopSystem,
    TriggerPolicy,
)


class ConfigError(InvalidInputError):
    code = "invalid-config"


SAMPLER_ALIASES = {"uniform": "scaled_uniform"}
_COROLLARY_KIND = {1: STATE_ERROR_ABS, 2: INPUT_ERROR_ABS, 3: STATE_ERROR_ABS, 4: INPUT_ERROR_ABS}


@dataclass(frozen=True)
class TriggerSpec:
    """Which threshold rule to use; ``sigma=None`` means the corollary's maximal value."""

    corollary: int | None = 1
    kind: str = STATE_ERROR_ABS
    sigma: float | None = None

    def __post_init__(self):
        if self.corollary is not None and self.corollary not in SIGMA_RULES:
            raise ConfigError(f"trigger corollary must be 1..4, got {self.corollary}")
        if self.kind not in TRIGGER_KINDS:
            raise ConfigError(f"unknown trigger kind {self.kind!r}")
        if self.sigma is None and self.corollary is None:
            raise ConfigError("sigma 'max' needs a corollary")
        if self.sigma is not None and not self.sigma >= 0.0:
            raise ConfigError(f"sigma must be nonnegative, got {self.sigma}")

    @classmethod
    def parse(cls, value) -> "TriggerSpec":
        if isinstance(value, TriggerSpec):
            return value
        if isinstance(value, str):
            text = value.strip().lower()
            if text.startswith("cor") and text[3:].isdigit():
                n = int(text[3:])
                return cls(corollary=n, kind=_COROLLARY_KIND.get(n, STATE_ERROR_ABS))
            if text.startswith("sigma="):
                raw = text.split("=", 1)[1]
                if raw == "max":
                    return cls(corollary=1)
                return cls(corollary=None, sigma=_as_float(raw, "sigma"))
            raise ConfigError(f"cannot parse trigger {value!r}; use cor1..cor4 or sigma=VALUE")
        if isinstance(value, dict):
            unknown = set(value) - {"corollary", "kind", "sigma"}
            if unknown:
                raise ConfigError(f"unknown trigger keys {sorted(unknown)}")
            corollary = value.get("corollary")
            if corollary is not None:
                corollary = int(corollary)
            kind = value.get("kind") or _COROLLARY_KIND.get(corollary, STATE_ERROR_ABS)
            sigma = value.get("sigma", "max")
            sigma = None if sigma in (None, "max") else _as_float(sigma, "sigma")
            return cls(corollary=corollary, kind=kind, sigma=sigma)
        raise ConfigError(f"cannot parse trigger {value!r}")

    def to_dict(self) -> dict:
        return {
            "corollary": self.corollary,
            "kind": self.kind,
            "sigma": "max" if self.sigma is None else self.sigma,
        }

    def resolve_sigma(self, cl: ClosedLoopSystem, r: float) -> float:
        """The numeric threshold; may raise :class:`InfeasibleRadiusError`."""
        if self.sigma is not None:
            return self.sigma
        return SIGMA_RULES[self.corollary](cl, r)

    def policy(self, cl: ClosedLoopSystem, r: float) -> TriggerPolicy:
        gain = cl.k if self.kind in (INPUT_ERROR_ABS, INPUT_ERROR_REL) else None
        return TriggerPolicy(self.kind, self.resolve_sigma(cl, r), gain)


def _as_float(value, name: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None
    if not np.isfinite(out):
        raise ConfigError(f"{name} must be finite")
    return out


def _as_int(value, name: str) -> int:
    try:
        ok = not isinstance(value, bool) and int(value) == value
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return int(value)


def _as_rows(value, name: str) -> list[list[float]]:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of numeric rows") from None
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.size == 0 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a non-empty finite matrix (list of rows)")
    return arr.tolist()


EXAMPLE_SYSTEM = {
    "A": [[1.2, 0.3], [0.0, 0.5]],
    "B": [[1.0], [0.5]],
    "E": [[1.0, 2.0], [0.5, -0.5]],
    "K": [[-0.7, -0.2]],
    "Sigma_w": [[0.5, 0.0], [0.0, 0.25]],
}


@dataclass(frozen=True)
class ExperimentConfig:
    system: dict = field(default_factory=lambda: copy.deepcopy(EXAMPLE_SYSTEM))
    epsilon: float = 0.3
    x0: list = field(default_factory=lambda: [2.0, 3.0])
    horizon: int = 60
    runs: int = 500
    seed: int = 42
    radius: float = 6.0
    trigger: TriggerSpec = field(default_factory=TriggerSpec)
    sampler: str = "gaussian"
    dof: float = 5.0
    baseline_periodic: bool = False
    workers: int = 1
    out: str = "out"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        kwargs = dict(data)
        if "system" in kwargs:
            system = kwargs["system"]
            if not isinstance(system, dict):
                raise ConfigError("system must be a mapping of matrices")
            missing = set(EXAMPLE_SYSTEM) - set(system)
            extra = set(system) - set(EXAMPLE_SYSTEM)
            if missing or extra:
                raise ConfigError(f"system needs exactly {sorted(EXAMPLE_SYSTEM)}")
            kwargs["system"] = {k: _as_rows(v, k) for k, v in system.items()}
        if "trigger" in kwargs:
            kwargs["trigger"] = TriggerSpec.parse(kwargs["trigger"])
        if "sampler" in kwargs:
            kwargs["sampler"] = SAMPLER_ALIASES.get(kwargs["sampler"], kwargs["sampler"])
        return cls(**kwargs).validated()

    def to_dict(self) -> dict:
        return {
            "system": copy.deepcopy(self.system),
            "epsilon": self.epsilon,
            "x0": list(self.x0),
            "horizon": self.horizon,
            "runs": self.runs,
            "seed": self.seed,
            "radius": self.radius,
            "trigger": self.trigger.to_dict(),
            "sampler": self.sampler,
            "dof": self.dof,
            "baseline_periodic": self.baseline_periodic,
            "workers": self.workers,
            "out": self.out,
        }

    def validated(self) -> "ExperimentConfig":
        """Normalize scalar types and check every upstream construction invariant."""
        cfg = replace(
            self,
            epsilon=_as_float(self.epsilon, "epsilon"),
            x0=[float(v) for v in np.asarray(self.x0, dtype=float).reshape(-1)],
            horizon=_as_int(self.horizon, "horizon"),
            runs=_as_int(self.runs, "runs"),
            seed=_as_int(self.seed, "seed"),
            radius=_as_float(self.radius, "radius"),
            dof=_as_float(self.dof, "dof"),
            workers=_as_int(self.workers, "workers"),
            baseline_periodic=bool(self.baseline_periodic),
            out=str(self.out),
        )
        if cfg.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {cfg.horizon}")
        if cfg.runs < 2:
            raise ConfigError(f"runs must be >= 2, got {cfg.runs}")
        if cfg.radius <= 0.0:
            raise ConfigError(f"radius must be positive, got {cfg.radius}")
        if cfg.workers < 1:
            raise ConfigError("workers must be >= 1")
        if cfg.sampler not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler {cfg.sampler!r}")
        try:
            cl = cfg.closed_loop()
            cfg.sampler_for()
        except ConfigError:
            raise
        except RiskCertError as exc:
            raise ConfigError(f"{exc.code}: {exc}") from None
        if len(cfg.x0) != cl.n:
            raise ConfigError(f"x0 has length {len(cfg.x0)}, state dimension is {cl.n}")
        return cfg

    def ambiguity_set(self) -> MomentAmbiguitySet:
        return MomentAmbiguitySet(np.array(self.system["Sigma_w"]), self.epsilon)

    def closed_loop(self) -> ClosedLoopSystem:
        s = self.system
        return ClosedLoopSystem(
            np.array(s["A"]), np.array(s["B"]), np.array(s["E"]), np.array(s["K"]), self.ambiguity_set()
        )

    def sampler_for(self, seed: int | None = None) -> DisturbanceSampler:
        return DisturbanceSampler(
            self.sampler, np.array(self.system["Sigma_w"]), self.seed if seed is None else seed, self.dof
        )

    def with_overrides(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        if "trigger" in changes:
            changes["trigger"] = TriggerSpec.parse(changes["trigger"])
        if "sampler" in changes:
            changes["sampler"] = SAMPLER_ALIASES.get(changes["sampler"], changes["sampler"])
        return replace(self, **changes).validated()


PRESETS = {"paper-example": ExperimentConfig}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name]().validated()


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return ExperimentConfig.from_dict(data or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())
