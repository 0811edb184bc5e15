"""
Fit the reward surrogate on trial history and invert it by projected gradient ascent.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

import nn
from core import (
    ConfigError,
    DesignSpace,
    DimensionError,
    Source,
    Trial,
    TrialLog,
    project_batch,
    sample_uniform,
)

logger = logging.getLogger(__name__)

History = Union[TrialLog, Sequence[Trial]]


@dataclass(frozen=True)
class InverseDesignConfig:
    steps: int = 100
    step_size: float = 0.01
    restarts: int = 16

    def validate(self) -> None:
        if self.steps < 0 or self.restarts < 1:
            raise ConfigError("inverse.steps must be >= 0 and inverse.restarts >= 1")
        if not self.step_size > 0:
            raise ConfigError("inverse.step_size must be positive")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "InverseDesignConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown inverse config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg


class Proposal(NamedTuple):
    design: np.ndarray
    source: Source
    model: Optional[nn.SurrogateModel]


def _dataset(history: History) -> Tuple[np.ndarray, np.ndarray]:
    trials = history.trials if isinstance(history, TrialLog) else tuple(history)
    if not trials:
        raise ValueError("cannot fit a surrogate on an empty history")
    designs = np.array([t.design for t in trials], dtype=float)
    rewards = np.array([t.reward for t in trials], dtype=float)
    return designs, rewards


def _reward_stats(rewards: np.ndarray) -> Tuple[float, float]:
    std = float(np.std(rewards))
    return float(np.mean(rewards)), std if std > 0 else 1.0


def fit(
    history: History,
    cfg: nn.TrainConfig,
    rng: np.random.Generator,
    warm: Optional[nn.SurrogateModel] = None,
) -> nn.SurrogateModel:
    """Run exactly `cfg.iters` AdamW minibatch steps on the Huber loss.

    Fresh mode draws new weights from `rng`; warm mode starts from `warm`.
    Minibatches are drawn uniformly with replacement.
    """
    designs, rewards = _dataset(history)
    d_in = designs.shape[1]
    if warm is not None:
        if warm.d_in != d_in:
            raise DimensionError(f"warm checkpoint expects dimension {warm.d_in}, history has {d_in}")
        model = warm
    else:
        model = nn.init_model(
            d_in, rng, sigma=cfg.init_sigma, hidden_width=cfg.hidden_width, activation=cfg.activation
        )
    if cfg.standardize_rewards:
        model = nn.with_standardization(model, _reward_stats(rewards))
    if cfg.iters == 0:
        return model

    model = nn.trainable_copy(model)
    state = nn.init_adamw(model)
    loss = float("nan")
    for _ in range(cfg.iters):
        idx = rng.integers(0, designs.shape[0], size=cfg.batch)
        loss, grads = nn.grad_params(model, designs[idx], rewards[idx], cfg)
        nn.adamw_update(model, grads, state, cfg)
    # rebuild to re-run shape and finiteness validation on the final parameters
    model = nn.SurrogateModel(
        model.layer_dims, model.weights, model.biases, model.activation, model.reward_standardization
    )
    logger.debug("Fitted surrogate on %d trials (%d iters, last batch loss %.6g)", designs.shape[0], cfg.iters, loss)
    return model


def training_loss(model: nn.SurrogateModel, history: History, cfg: nn.TrainConfig) -> float:
    """Mean Huber loss of `model` over the full history."""
    designs, rewards = _dataset(history)
    loss, _ = nn.grad_params(model, designs, rewards, cfg)
    return loss


def inverse_design(
    model: nn.SurrogateModel,
    space: DesignSpace,
    cfg: InverseDesignConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Projected gradient ascent on the surrogate from `cfg.restarts` uniform starts.

    Each trajectory keeps its best-seen iterate; the best of those is returned.
    """
    if model.d_in != space.dim:
        raise DimensionError(f"model expects dimension {model.d_in}, space has {space.dim}")
    points = np.stack([sample_uniform(space, rng) for _ in range(cfg.restarts)])
    best = points.copy()
    best_values = nn.forward_batch(model, points)
    for _ in range(cfg.steps):
        points = project_batch(space, points + cfg.step_size * nn.grad_input_batch(model, points))
        values = nn.forward_batch(model, points)
        improved = values > best_values
        best[improved] = points[improved]
        best_values[improved] = values[improved]
    winner = int(np.argmax(best_values))
    return best[winner].copy()


def propose_next(
    history: History,
    space: DesignSpace,
    train_cfg: nn.TrainConfig,
    inv_cfg: InverseDesignConfig,
    epsilon: float,
    rng: np.random.Generator,
    warm: Optional[nn.SurrogateModel] = None,
) -> Proposal:
    """ε-greedy: explore uniformly with probability ε, else exploit the surrogate's argmax."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in [0, 1], got {epsilon}")
    trials = history.trials if isinstance(history, TrialLog) else tuple(history)
    explore = rng.random() < epsilon
    if explore or not trials:
        return Proposal(sample_uniform(space, rng), Source.EXPLORE, None)
    model = fit(trials, train_cfg, rng, warm=warm)
    return Proposal(inverse_design(model, space, inv_cfg, rng), Source.EXPLOIT, model)


def estimate_design(
    history: History,
    space: DesignSpace,
    train_cfg: nn.TrainConfig,
    inv_cfg: InverseDesignConfig,
    rng: np.random.Generator,
    warm: Optional[nn.SurrogateModel] = None,
) -> Tuple[nn.SurrogateModel, np.ndarray, float]:
    """Final design estimate after a campaign: refit on everything, then invert."""
    model = fit(history, train_cfg, rng, warm=warm)
    design = inverse_design(model, space, inv_cfg, rng)
    return model, design, nn.forward(model, design)
