from __future__ import annotations

from typing import Any, Sequence

from core import DesignSpace, Source, Trial, TrialLog, sample_uniform
from optimize import CampaignConfig, TrialClock, evaluate, new_log, record, trial_rngs, trial_seed


def run_random(
    oracle: Any,
    space: DesignSpace,
    cfg: CampaignConfig,
    prefix: Sequence[Trial] = (),
) -> TrialLog:
    """Uniform feasible samples until the budget is spent."""
    log = new_log(oracle, space, cfg, prefix)
    clock = TrialClock(cfg.record_timing)
    for t in range(len(log) + 1, cfg.budget + 1):
        seed = trial_seed(cfg.master_seed, t)
        proposal_rng, noise_rng = trial_rngs(seed)
        clock.start()
        design = sample_uniform(space, proposal_rng)
        reward = evaluate(oracle, design, noise_rng, log)
        log = record(log, design, reward, Source.RANDOM, seed, clock)
    return log


def run(oracle: Any, cfg: CampaignConfig, prefix: Sequence[Trial] = ()) -> TrialLog:
    return run_random(oracle, oracle.space, cfg, prefix)
