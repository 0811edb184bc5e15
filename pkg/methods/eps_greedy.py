from __future__ import annotations

import logging
from typing import Any, Optional, Sequence, Tuple

import numpy as np

import nn
import persist
from core import DesignSpace, Trial, TrialLog
from optimize import (
    CampaignConfig,
    TrialClock,
    derive_seed,
    epsilon_at,
    evaluate,
    new_log,
    record,
    trial_rngs,
    trial_seed,
)
from surrogate import estimate_design, propose_next

logger = logging.getLogger(__name__)


def load_warm(cfg: CampaignConfig) -> Tuple[Optional[nn.SurrogateModel], Optional[str]]:
    """(model, provenance) for `cfg.warm_checkpoint`, or (None, None) for a cold start."""
    if not cfg.warm_checkpoint:
        return None, None
    model = persist.load_checkpoint(cfg.warm_checkpoint)
    return model, persist.checkpoint_provenance(cfg.warm_checkpoint)


def run_eps_greedy(
    oracle: Any,
    space: DesignSpace,
    cfg: CampaignConfig,
    prefix: Sequence[Trial] = (),
    warm: Optional[nn.SurrogateModel] = None,
    warm_start: Optional[str] = None,
) -> TrialLog:
    """
    ε-greedy surrogate campaign.
    - Trial t draws its proposal and oracle noise from the seed hashed from (master seed, t).
    - Exploit trials refit the surrogate from scratch (or from `warm`) on the t-1 trials so far.
    - Trials already in `prefix` are kept as-is and the campaign continues after them.
    """
    log = new_log(oracle, space, cfg, prefix, warm_start)
    clock = TrialClock(cfg.record_timing)
    for t in range(len(log) + 1, cfg.budget + 1):
        seed = trial_seed(cfg.master_seed, t)
        proposal_rng, noise_rng = trial_rngs(seed)
        clock.start()
        proposal = propose_next(log, space, cfg.train, cfg.inverse, epsilon_at(cfg, t), proposal_rng, warm=warm)
        reward = evaluate(oracle, proposal.design, noise_rng, log)
        log = record(log, proposal.design, reward, proposal.source, seed, clock)
    return log


def run(oracle: Any, cfg: CampaignConfig, prefix: Sequence[Trial] = ()) -> TrialLog:
    warm, provenance = load_warm(cfg)
    if warm is not None:
        logger.info("Warm-starting %s from %s", getattr(oracle, "name", "oracle"), provenance)
    return run_eps_greedy(oracle, oracle.space, cfg, prefix, warm=warm, warm_start=provenance)


def final_estimate(log: TrialLog, oracle: Any, cfg: CampaignConfig) -> Tuple[nn.SurrogateModel, np.ndarray, float]:
    """Refit on the whole log and invert once more for the final design estimate."""
    warm, _ = load_warm(cfg)
    rng = np.random.default_rng(derive_seed(cfg.master_seed, "estimate"))
    return estimate_design(log, log.space, cfg.train, cfg.inverse, rng, warm=warm)
