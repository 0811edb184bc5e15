"""
Separable natural evolution strategies baseline.

A diagonal Gaussian search distribution (mu, sigma) is moved by rank-based
natural gradients. Candidates are projected into the feasible region before
evaluation, while the update always uses the unprojected standard-normal draws.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence, Tuple

import numpy as np

from core import DesignSpace, Source, Trial, TrialLog, project_batch
from optimize import (
    CampaignConfig,
    TrialClock,
    derive_seed,
    evaluate,
    new_log,
    record,
    trial_rngs,
    trial_seed,
)

logger = logging.getLogger(__name__)

MIN_SIGMA = 1e-12


def default_eta_sigma(dim: int) -> float:
    return (3.0 + math.log(dim)) / (5.0 * math.sqrt(dim))


@dataclass(frozen=True)
class SnesState:
    mu: np.ndarray
    sigma: np.ndarray
    generation: int = 0
    eta_mu: float = 1.0
    eta_sigma: Optional[float] = None

    def __post_init__(self) -> None:
        mu = np.array(self.mu, dtype=float).reshape(-1)
        sigma = np.array(self.sigma, dtype=float).reshape(-1)
        if mu.shape != sigma.shape:
            raise ValueError(f"mu has shape {mu.shape}, sigma has {sigma.shape}")
        if not np.all(sigma > 0):
            raise ValueError("sigma must be positive in every coordinate")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        if self.eta_sigma is None:
            object.__setattr__(self, "eta_sigma", default_eta_sigma(mu.size))

    @property
    def dim(self) -> int:
        return self.mu.size


def snes_init(space: DesignSpace, eta_mu: float = 1.0, eta_sigma: Optional[float] = None) -> SnesState:
    """Start at the box midpoint with a quarter of each range as spread."""
    sigma = np.maximum((space.upper_array - space.lower_array) / 4.0, MIN_SIGMA)
    return SnesState(mu=space.midpoint, sigma=sigma, eta_mu=eta_mu, eta_sigma=eta_sigma)


def snes_ask(
    state: SnesState, space: DesignSpace, pop: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """(projected candidates, standard-normal draws), one row per population member."""
    if pop < 2:
        raise ValueError(f"population size must be >= 2, got {pop}")
    noise = rng.standard_normal((pop, state.dim))
    return project_batch(space, state.mu + state.sigma * noise), noise


def utilities(rewards: Sequence[float]) -> np.ndarray:
    """Fitness shaping by rank: best gets the largest weight, weights sum to zero.

    Tied rewards share the mean of their rank weights.
    """
    r = np.asarray(rewards, dtype=float)
    n = r.size
    ranks = np.arange(1, n + 1)
    base = np.maximum(0.0, math.log(n / 2.0 + 1.0) - np.log(ranks))
    shaped = base / base.sum() - 1.0 / n

    order = np.argsort(-r, kind="stable")
    sorted_r = r[order]
    start = 0
    while start < n:
        end = start + 1
        while end < n and sorted_r[end] == sorted_r[start]:
            end += 1
        if end - start > 1:
            shaped[start:end] = shaped[start:end].mean()
        start = end

    u = np.empty(n)
    u[order] = shaped
    return u


def snes_tell(state: SnesState, noise: np.ndarray, rewards: Sequence[float]) -> SnesState:
    noise = np.asarray(noise, dtype=float)
    r = np.asarray(rewards, dtype=float)
    if r.shape[0] != noise.shape[0]:
        raise ValueError(f"got {r.shape[0]} rewards for a population of {noise.shape[0]}")
    if np.any(np.isnan(r)):
        raise ValueError("SNES rewards must not be NaN")
    u = utilities(r)[:, None]
    grad_mu = np.sum(u * noise, axis=0)
    grad_sigma = np.sum(u * (noise**2 - 1.0), axis=0)
    return SnesState(
        mu=state.mu + state.eta_mu * state.sigma * grad_mu,
        sigma=np.maximum(state.sigma * np.exp(0.5 * state.eta_sigma * grad_sigma), MIN_SIGMA),
        generation=state.generation + 1,
        eta_mu=state.eta_mu,
        eta_sigma=state.eta_sigma,
    )


def run_snes(
    oracle: Any,
    space: DesignSpace,
    cfg: CampaignConfig,
    prefix: Sequence[Trial] = (),
) -> TrialLog:
    """`snes_gens` generations of ask/tell logged flat as pop*gens trials.

    Generations already covered by `prefix` are replayed from the logged
    rewards, so a resumed run lands in the same search state.
    """
    state = snes_init(space, cfg.snes_eta_mu, cfg.snes_eta_sigma)
    log = new_log(oracle, space, cfg, prefix)
    clock = TrialClock(cfg.record_timing)
    pop = cfg.snes_pop
    for generation in range(cfg.snes_gens):
        rng = np.random.default_rng(derive_seed(cfg.master_seed, "snes-gen", generation))
        candidates, noise = snes_ask(state, space, pop, rng)
        rewards = []
        for i in range(pop):
            t = generation * pop + i + 1
            if t <= len(log):
                rewards.append(log.trials[t - 1].reward)
                continue
            seed = trial_seed(cfg.master_seed, t)
            _, noise_rng = trial_rngs(seed)
            clock.start()
            reward = evaluate(oracle, candidates[i], noise_rng, log)
            log = record(log, candidates[i], reward, Source.SNES, seed, clock)
            rewards.append(reward)
        state = snes_tell(state, noise, rewards)
        logger.debug("SNES generation %d: best %.6g, mean sigma %.4g", generation, max(rewards), state.sigma.mean())
    return log


def run(oracle: Any, cfg: CampaignConfig, prefix: Sequence[Trial] = ()) -> TrialLog:
    return run_snes(oracle, oracle.space, cfg, prefix)
