from __future__ import annotations

import json
import os
from dataclasses import replace

import numpy as np
import pytest

import envs
import nn
import persist
from core import ConfigError, DimensionError
from optimize import CampaignConfig, Method, load_method, run_campaign
from persist import (
    BundleCorruptError,
    BundleError,
    BundleInvariantError,
    BundleSchemaError,
    CampaignBundle,
    checkpoint_provenance,
    iter_bundles,
    load_bundle,
    load_checkpoint,
    resume,
    save_bundle,
)
from surrogate import InverseDesignConfig

ORACLE = "sphere?dim=2&noise=0.05"


def _cfg(method: Method = Method.RANDOM, budget: int = 5, **kwargs) -> CampaignConfig:
    return CampaignConfig(
        budget=budget,
        method=method,
        train=nn.TrainConfig(iters=5, batch=4, hidden_width=8),
        inverse=InverseDesignConfig(steps=2, restarts=2),
        master_seed=3,
        record_timing=False,
        **kwargs,
    )


def _bundle(method: Method = Method.RANDOM, budget: int = 5, **kwargs) -> CampaignBundle:
    cfg = _cfg(method, budget, **kwargs)
    result = run_campaign(envs.resolve_oracle(ORACLE), cfg)
    return CampaignBundle(cfg, result.log, result.model, result.estimate, seed=1)


def test_bundle_round_trip_with_checkpoint(tmp_path):
    bundle = _bundle(Method.EPS_GREEDY)
    save_bundle(bundle, tmp_path / "b")
    again = load_bundle(tmp_path / "b")
    assert again.log == bundle.log
    assert again.config == bundle.config
    assert again.estimate == bundle.estimate
    assert again.seed == 1
    for a, b in zip(again.final_checkpoint.weights, bundle.final_checkpoint.weights):
        np.testing.assert_array_equal(a, b)


def test_bundle_without_checkpoint(tmp_path):
    save_bundle(_bundle(), tmp_path / "b")
    assert not (tmp_path / "b" / persist.CHECKPOINT_FILE).exists()
    assert load_bundle(tmp_path / "b").final_checkpoint is None


def test_saving_twice_is_byte_identical(tmp_path):
    bundle = _bundle()
    save_bundle(bundle, tmp_path / "a")
    save_bundle(bundle, tmp_path / "b")
    for name in (persist.CONFIG_FILE, persist.TRIALS_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_failed_save_keeps_the_previous_bundle(tmp_path, monkeypatch):
    target = tmp_path / "b"
    save_bundle(_bundle(budget=3), target)
    before = (target / persist.TRIALS_FILE).read_bytes()

    calls = {"n": 0}
    real_write = persist._write_text

    def failing_write(path, text):
        calls["n"] += 1
        if calls["n"] == 2:
            raise OSError("disk full")
        real_write(path, text)

    monkeypatch.setattr(persist, "_write_text", failing_write)
    with pytest.raises(BundleError):
        save_bundle(_bundle(budget=5), target)
    assert (target / persist.TRIALS_FILE).read_bytes() == before
    assert [p.name for p in tmp_path.iterdir()] == ["b"]


def test_failed_swap_restores_the_previous_bundle(tmp_path, monkeypatch):
    target = tmp_path / "b"
    save_bundle(_bundle(budget=3), target)
    before = (target / persist.TRIALS_FILE).read_bytes()
    real_replace = os.replace

    def failing_replace(src, dst):
        if ".tmp-" in str(src):
            raise OSError("rename failed")
        real_replace(src, dst)

    monkeypatch.setattr(persist.os, "replace", failing_replace)
    with pytest.raises(BundleError):
        save_bundle(_bundle(budget=5), target)
    assert (target / persist.TRIALS_FILE).read_bytes() == before


def test_load_restores_a_bundle_left_only_as_backup(tmp_path):
    target = tmp_path / "b"
    bundle = _bundle(budget=3)
    save_bundle(bundle, target)
    # A crash between moving the old bundle aside and moving the new one in.
    os.replace(target, tmp_path / ".b.old-deadbeef")
    assert load_bundle(target).log == bundle.log
    assert [p.name for p in tmp_path.iterdir()] == ["b"]


def test_save_after_an_interrupted_swap_leaves_no_backup(tmp_path):
    target = tmp_path / "b"
    save_bundle(_bundle(budget=3), target)
    os.replace(target, tmp_path / ".b.old-deadbeef")
    save_bundle(_bundle(budget=5), target)
    assert len(load_bundle(target).log) == 5
    assert [p.name for p in tmp_path.iterdir()] == ["b"]


def test_missing_and_unreadable_files_are_corrupt(tmp_path):
    with pytest.raises(BundleCorruptError):
        load_bundle(tmp_path / "nowhere")
    save_bundle(_bundle(), tmp_path / "b")
    (tmp_path / "b" / persist.CONFIG_FILE).write_text("{not json")
    with pytest.raises(BundleCorruptError):
        load_bundle(tmp_path / "b")


def test_unknown_schema_version(tmp_path):
    save_bundle(_bundle(), tmp_path / "b")
    path = tmp_path / "b" / persist.CONFIG_FILE
    payload = json.loads(path.read_text())
    payload["schema_version"] = 99
    path.write_text(json.dumps(payload))
    with pytest.raises(BundleSchemaError):
        load_bundle(tmp_path / "b")


def test_non_consecutive_trials_break_an_invariant(tmp_path):
    save_bundle(_bundle(), tmp_path / "b")
    path = tmp_path / "b" / persist.TRIALS_FILE
    lines = path.read_text().splitlines()
    del lines[2]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(BundleInvariantError):
        load_bundle(tmp_path / "b")


def test_log_longer_than_budget_breaks_an_invariant():
    bundle = _bundle(budget=5)
    with pytest.raises(BundleInvariantError):
        CampaignBundle(_cfg(budget=4), bundle.log)


def test_checkpoint_of_another_dimension_is_rejected(tmp_path):
    bundle = _bundle()
    with pytest.raises(DimensionError):
        CampaignBundle(bundle.config, bundle.log, nn.init_model(3, np.random.default_rng(0), hidden_width=4))
    save_bundle(bundle, tmp_path / "b")
    checkpoint = nn.to_checkpoint(nn.init_model(3, np.random.default_rng(0), hidden_width=4))
    (tmp_path / "b" / persist.CHECKPOINT_FILE).write_text(json.dumps(checkpoint))
    with pytest.raises(DimensionError):
        load_bundle(tmp_path / "b")


def test_checkpoint_loading_and_provenance(tmp_path):
    save_bundle(_bundle(Method.EPS_GREEDY), tmp_path / "b")
    from_dir = load_checkpoint(tmp_path / "b")
    from_file = load_checkpoint(tmp_path / "b" / persist.CHECKPOINT_FILE)
    assert from_dir.layer_dims == from_file.layer_dims
    tag = checkpoint_provenance(tmp_path / "b")
    assert tag.startswith((tmp_path / "b" / persist.CHECKPOINT_FILE).as_posix() + "@sha256:")
    assert len(tag.rsplit(":", 1)[1]) == 64


def test_iter_bundles_is_sorted_and_skips_staging_dirs(tmp_path):
    bundle = _bundle(budget=2)
    for name in ("random/2", "random/10", "grid/1"):
        save_bundle(bundle, tmp_path / name)
    (tmp_path / ".random.tmp-x").mkdir()
    (tmp_path / ".random.tmp-x" / persist.CONFIG_FILE).write_text("{}")
    found = [p.relative_to(tmp_path).as_posix() for p in iter_bundles(tmp_path)]
    assert found == ["grid/1", "random/10", "random/2"]


@pytest.mark.parametrize("method", [Method.RANDOM, Method.EPS_GREEDY])
def test_resume_from_disk_matches_an_uninterrupted_run(tmp_path, method):
    oracle = envs.resolve_oracle(ORACLE)
    full = load_method(method).run(oracle, _cfg(method, budget=6))
    partial = CampaignBundle(_cfg(method, budget=6), replace(full, trials=full.trials[:3]))
    save_bundle(partial, tmp_path / "b")
    assert resume(load_bundle(tmp_path / "b")) == full


def test_resume_of_a_finished_bundle_returns_its_log():
    bundle = _bundle(budget=4)
    assert resume(bundle) is bundle.log


def test_resume_rejects_another_method():
    with pytest.raises(ConfigError) as info:
        resume(_bundle(), method=Method.GRID)
    assert "random" in str(info.value)
