"""
Campaign configuration, seed discipline and method dispatch.

Each optimization method lives in its own module under `methods/` and is
loaded by dotted name, the same way the entry point loads feature modules.
Every method module exposes `run(oracle, cfg, prefix=()) -> TrialLog`.
"""

from __future__ import annotations

import hashlib
import importlib
import logging
import math
import time
from dataclasses import dataclass, field, fields
from enum import Enum
from types import ModuleType
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

import nn
from core import ConfigError, DesignSpace, OracleError, Source, Trial, TrialLog, as_point
from surrogate import InverseDesignConfig

logger = logging.getLogger(__name__)

DEFAULT_GRID_SHAPES: Dict[int, Tuple[int, ...]] = {
    3: (5, 5, 4),
    4: (3, 3, 3, 4),
    5: (3, 3, 3, 2, 2),
}


class Method(str, Enum):
    EPS_GREEDY = "eps-greedy"
    RANDOM = "random"
    GRID = "grid"
    SNES = "snes"


METHOD_MODULES: Dict[Method, str] = {
    Method.EPS_GREEDY: "methods.eps_greedy",
    Method.RANDOM: "methods.random_search",
    Method.GRID: "methods.grid",
    Method.SNES: "methods.snes",
}


@dataclass(frozen=True)
class CampaignConfig:
    budget: int = 100
    epsilon: float = 0.25
    epsilon_final: Optional[float] = None
    train: nn.TrainConfig = field(default_factory=nn.TrainConfig)
    inverse: InverseDesignConfig = field(default_factory=InverseDesignConfig)
    warm_checkpoint: Optional[str] = None
    method: Method = Method.EPS_GREEDY
    grid_shape: Optional[Tuple[int, ...]] = None
    snes_pop: int = 5
    snes_gens: int = 20
    snes_eta_mu: float = 1.0
    snes_eta_sigma: Optional[float] = None
    master_seed: int = 0
    record_timing: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if self.grid_shape is not None:
            object.__setattr__(self, "grid_shape", tuple(int(n) for n in self.grid_shape))

    def validate(self) -> None:
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")
        for name in ("epsilon", "epsilon_final"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.grid_shape is not None and any(n < 1 for n in self.grid_shape):
            raise ConfigError("grid_shape entries must be >= 1")
        if self.snes_pop < 2 or self.snes_gens < 1:
            raise ConfigError("snes_pop must be >= 2 and snes_gens >= 1")
        if self.method is Method.SNES and self.snes_pop * self.snes_gens != self.budget:
            raise ConfigError(
                f"SNES consumes snes_pop*snes_gens = {self.snes_pop * self.snes_gens} trials, budget is {self.budget}"
            )
        if not self.snes_eta_mu > 0 or (self.snes_eta_sigma is not None and not self.snes_eta_sigma > 0):
            raise ConfigError("SNES learning rates must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        self.train.validate()
        self.inverse.validate()

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name in ("train", "inverse"):
                value = value.to_dict()
            elif isinstance(value, Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            data[f.name] = value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CampaignConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown campaign config keys: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            kwargs["train"] = nn.TrainConfig.from_dict(dict(data.get("train") or {}))
            kwargs["inverse"] = InverseDesignConfig.from_dict(dict(data.get("inverse") or {}))
            if "method" in kwargs:
                kwargs["method"] = Method(kwargs["method"])
            cfg = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid campaign config: {exc}") from exc
        cfg.validate()
        return cfg


# ---------------- Seeds ---------------- #
def derive_seed(master_seed: int, *labels: Any) -> int:
    """64-bit seed hashed from a master seed and labels."""
    payload = ":".join([str(int(master_seed)), *(str(label) for label in labels)])
    return int(hashlib.sha256(payload.encode()).hexdigest()[:16], 16)


def trial_seed(master_seed: int, index: int) -> int:
    return derive_seed(master_seed, "trial", index)


def trial_rngs(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """(proposal stream, oracle noise stream) for one trial."""
    proposal, noise = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(proposal), np.random.default_rng(noise)


def cell_seed(seed: int, method: Method | str) -> int:
    """Master seed of one (method, seed) cell of a comparison."""
    return derive_seed(seed, "cell", Method(method).value)


def epsilon_at(cfg: CampaignConfig, index: int) -> float:
    """ε for trial `index`; linear from `epsilon` to `epsilon_final` when a final value is set."""
    if cfg.epsilon_final is None or cfg.budget <= 1:
        return cfg.epsilon
    frac = (index - 1) / (cfg.budget - 1)
    return cfg.epsilon + (cfg.epsilon_final - cfg.epsilon) * frac


# ---------------- Trial plumbing ---------------- #
Oracle = Callable[..., float]


class TrialClock:
    """Measures wall time per trial, or records zeros when timing is off."""

    def __init__(self, enabled: bool) -> None:
        self.enabled = enabled
        self._start = 0.0

    def start(self) -> None:
        self._start = time.perf_counter()

    def elapsed_ms(self) -> int:
        if not self.enabled:
            return 0
        return int(round((time.perf_counter() - self._start) * 1000))


def new_log(
    oracle: Any,
    space: DesignSpace,
    cfg: CampaignConfig,
    prefix: Sequence[Trial] = (),
    warm_start: Optional[str] = None,
) -> TrialLog:
    return TrialLog(
        space=space,
        oracle_name=getattr(oracle, "name", "custom"),
        method=cfg.method.value,
        master_seed=cfg.master_seed,
        trials=tuple(prefix),
        warm_start=warm_start,
    )


def evaluate(oracle: Oracle, design: np.ndarray, rng: np.random.Generator, log: TrialLog) -> float:
    """Call the oracle; any failure aborts the campaign with the partial log attached."""
    try:
        reward = float(oracle(design, rng))
    except Exception as exc:  # noqa: BLE001
        logger.error("Oracle %s failed at trial %d: %s", log.oracle_name, len(log) + 1, exc)
        raise OracleError(f"oracle {log.oracle_name} failed at trial {len(log) + 1}: {exc}", log) from exc
    if not np.isfinite(reward):
        raise OracleError(f"oracle {log.oracle_name} returned non-finite reward {reward}", log)
    return reward


def record(
    log: TrialLog,
    design: np.ndarray,
    reward: float,
    source: Source,
    seed: int,
    clock: TrialClock,
) -> TrialLog:
    trial = Trial(
        index=len(log) + 1,
        design=tuple(as_point(log.space, design)),
        reward=reward,
        source=source,
        rng_seed=seed,
        wall_ms=clock.elapsed_ms(),
    )
    logger.debug("trial %d [%s] reward=%.6g", trial.index, source.value, reward)
    return log.extended([trial])


# ---------------- Results ---------------- #
def best_trial(log: TrialLog | Sequence[Trial]) -> Trial:
    """Highest-reward trial; the first one wins ties."""
    trials = log.trials if isinstance(log, TrialLog) else tuple(log)
    if not trials:
        raise ValueError("best_trial of an empty log")
    best = trials[0]
    for trial in trials[1:]:
        if trial.reward > best.reward:
            best = trial
    return best


def running_best(log: TrialLog | Sequence[Trial]) -> List[float]:
    trials = log.trials if isinstance(log, TrialLog) else tuple(log)
    return np.maximum.accumulate([t.reward for t in trials]).tolist() if trials else []


def default_grid_shape(dim: int, budget: int) -> Tuple[int, ...]:
    """A grid with at least `budget` points; the run truncates the rest."""
    preset = DEFAULT_GRID_SHAPES.get(dim)
    if preset is not None and int(np.prod(preset)) >= budget:
        return preset
    per_axis = max(1, math.ceil(budget ** (1.0 / dim) - 1e-9))
    while per_axis**dim < budget:
        per_axis += 1
    return (per_axis,) * dim


class CampaignResult(NamedTuple):
    log: TrialLog
    model: Optional[nn.SurrogateModel]
    estimate: Optional[Tuple[float, ...]]
    predicted: Optional[float]


def load_method(method: Method | str) -> ModuleType:
    return importlib.import_module(METHOD_MODULES[Method(method)])


def run_campaign(oracle: Any, cfg: CampaignConfig, prefix: Sequence[Trial] = ()) -> CampaignResult:
    """Run (or continue from `prefix`) one campaign and, for ε-greedy, estimate the final design."""
    cfg.validate()
    module = load_method(cfg.method)
    log = module.run(oracle, cfg, prefix)
    if cfg.method is not Method.EPS_GREEDY:
        return CampaignResult(log, None, None, None)
    model, design, predicted = module.final_estimate(log, oracle, cfg)
    return CampaignResult(log, model, tuple(float(v) for v in design), predicted)


def with_overrides(cfg: CampaignConfig, overrides: Dict[str, Any]) -> CampaignConfig:
    """Apply flat dotted overrides ("train.lr": 0.005) on top of `cfg`."""
    data = cfg.to_dict()
    for key, value in overrides.items():
        head, _, tail = key.partition(".")
        if tail:
            if head not in ("train", "inverse"):
                raise ConfigError(f"unknown config section {head!r}")
            data[head][tail] = value
        else:
            data[head] = value
    return CampaignConfig.from_dict(data)
