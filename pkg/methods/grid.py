from __future__ import annotations

import itertools
import logging
from typing import Any, Sequence

import numpy as np

from core import ConfigError, DesignSpace, Source, Trial, TrialLog, project
from optimize import (
    CampaignConfig,
    TrialClock,
    default_grid_shape,
    evaluate,
    new_log,
    record,
    trial_rngs,
    trial_seed,
)

logger = logging.getLogger(__name__)


def grid_points(space: DesignSpace, grid_shape: Sequence[int], limit: int) -> np.ndarray:
    """First `limit` points of the projected grid, last axis fastest.

    Axes include both bounds; an axis of size 1 sits at the midpoint.
    """
    shape = tuple(int(n) for n in grid_shape)
    if len(shape) != space.dim:
        raise ConfigError(f"grid shape {list(shape)} has {len(shape)} axes, space has dimension {space.dim}")
    if any(n < 1 for n in shape):
        raise ConfigError("grid shape entries must be >= 1")
    axes = [
        np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)])
        for lo, hi, n in zip(space.lower, space.upper, shape)
    ]
    points = [project(space, p) for p in itertools.islice(itertools.product(*axes), limit)]
    return np.array(points, dtype=float).reshape(-1, space.dim)


def run_grid(
    oracle: Any,
    space: DesignSpace,
    grid_shape: Sequence[int],
    cfg: CampaignConfig,
    prefix: Sequence[Trial] = (),
) -> TrialLog:
    points = grid_points(space, grid_shape, cfg.budget)
    total = int(np.prod(grid_shape))
    if total > cfg.budget:
        logger.info("Grid %s has %d points; keeping the first %d", list(grid_shape), total, cfg.budget)
    log = new_log(oracle, space, cfg, prefix)
    clock = TrialClock(cfg.record_timing)
    for t in range(len(log) + 1, points.shape[0] + 1):
        seed = trial_seed(cfg.master_seed, t)
        _, noise_rng = trial_rngs(seed)
        clock.start()
        reward = evaluate(oracle, points[t - 1], noise_rng, log)
        log = record(log, points[t - 1], reward, Source.GRID, seed, clock)
    return log


def run(oracle: Any, cfg: CampaignConfig, prefix: Sequence[Trial] = ()) -> TrialLog:
    shape = cfg.grid_shape or default_grid_shape(oracle.space.dim, cfg.budget)
    return run_grid(oracle, oracle.space, shape, cfg, prefix)
