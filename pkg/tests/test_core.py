from __future__ import annotations

import json

import numpy as np
import pytest

from core import (
    ConfigError,
    DesignSpace,
    DimensionError,
    InfeasibleSpaceError,
    Source,
    Trial,
    TrialLog,
    TrialLogError,
    dumps_exact,
    is_feasible,
    project,
    project_batch,
    sample_uniform,
)

GRIPPER_LIKE = DesignSpace.unit_box(4, margins=((0, 2, 0.1), (1, 3, 0.1)))


def _trial(index: int, design, reward: float = 1.0) -> Trial:
    return Trial(index=index, design=tuple(design), reward=reward, source=Source.RANDOM, rng_seed=index)


# ---------------- Design space ---------------- #
def test_degenerate_axis_is_allowed_and_inverted_is_rejected():
    space = DesignSpace(lower=(0.3, 0.0), upper=(0.3, 1.0))
    assert is_feasible(space, [0.3, 0.5])
    assert not is_feasible(space, [0.31, 0.5])
    with pytest.raises(ConfigError):
        DesignSpace(lower=(0.5,), upper=(0.4,))


def test_mismatched_bounds_raise_dimension_error():
    with pytest.raises(DimensionError):
        DesignSpace(lower=(0.0, 0.0), upper=(1.0,))


def test_invalid_margins_and_ties_are_rejected():
    with pytest.raises(ConfigError):
        DesignSpace.unit_box(2, margins=((0, 0, 0.1),))
    with pytest.raises(ConfigError):
        DesignSpace.unit_box(2, margins=((0, 1, -0.1),))
    with pytest.raises(ConfigError):
        DesignSpace.unit_box(3, ties=((0, 1), (1, 2)))
    with pytest.raises(ConfigError):
        DesignSpace.unit_box(3, ties=((0, 2), (1, 2)))


def test_empty_feasible_region_is_detected():
    with pytest.raises(InfeasibleSpaceError):
        DesignSpace.unit_box(2, margins=((0, 1, 1.5),))


def test_project_clips_to_box():
    space = DesignSpace.unit_box(3)
    np.testing.assert_array_equal(project(space, [-0.5, 0.5, 1.5]), [0.0, 0.5, 1.0])


def test_feasible_point_is_returned_unchanged():
    z = np.array([0.2, 0.3, 0.5, 0.6])
    out = project(GRIPPER_LIKE, z)
    np.testing.assert_array_equal(out, z)
    assert out is not z


def test_project_repairs_margin_violation():
    out = project(GRIPPER_LIKE, [0.6, 0.3, 0.55, 0.6])
    assert is_feasible(GRIPPER_LIKE, out)
    assert out[0] + 0.1 <= out[2] + 1e-9
    # The violation (0.15) is split evenly between both coordinates.
    assert out[0] == pytest.approx(0.525)
    assert out[2] == pytest.approx(0.625)


def test_project_handles_margins_pushed_against_the_box():
    out = project(GRIPPER_LIKE, [1.0, 1.0, 1.0, 1.0])
    assert is_feasible(GRIPPER_LIKE, out)


def test_project_applies_ties():
    space = DesignSpace.unit_box(5, ties=((0, 2), (1, 3)))
    out = project(space, [0.1, 0.2, 0.9, 0.8, 0.5])
    np.testing.assert_array_equal(out, [0.1, 0.2, 0.1, 0.2, 0.5])
    assert is_feasible(space, out)


def test_project_rejects_wrong_dimension():
    with pytest.raises(DimensionError):
        project(DesignSpace.unit_box(3), [0.5, 0.5])


def test_project_batch_matches_rowwise_project():
    rng = np.random.default_rng(0)
    points = rng.uniform(-0.5, 1.5, size=(50, 4))
    batch = project_batch(GRIPPER_LIKE, points)
    for row, expected in zip(batch, points):
        np.testing.assert_array_equal(row, project(GRIPPER_LIKE, expected))


def test_sample_uniform_is_feasible_and_seeded():
    a = [sample_uniform(GRIPPER_LIKE, np.random.default_rng(5)) for _ in range(3)]
    b = [sample_uniform(GRIPPER_LIKE, np.random.default_rng(5)) for _ in range(3)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
        assert is_feasible(GRIPPER_LIKE, x)


def test_sample_uniform_mean_is_centred():
    rng = np.random.default_rng(21)
    draws = np.array([sample_uniform(DesignSpace.unit_box(1), rng)[0] for _ in range(10_000)])
    assert abs(draws.mean() - 0.5) <= 0.02


def test_margin_violation_is_split_symmetrically():
    space = DesignSpace.unit_box(2, margins=((0, 1, 0.2),))
    np.testing.assert_allclose(project(space, [0.6, 0.5]), [0.45, 0.65], atol=1e-12)


@pytest.mark.parametrize(
    "space",
    [GRIPPER_LIKE, DesignSpace.unit_box(5, ties=((0, 2), (1, 3))), DesignSpace((-1.0, 0.5), (2.0, 1.5))],
)
def test_project_is_bitwise_idempotent(space):
    rng = np.random.default_rng(22)
    for z in rng.uniform(-2.0, 3.0, size=(200, space.dim)):
        once = project(space, z)
        np.testing.assert_array_equal(project(space, once), once)


def test_box_projection_is_the_nearest_point():
    space = DesignSpace((0.0, 0.2), (1.0, 0.7))
    xs = np.linspace(0.0, 1.0, 1001)
    ys = np.linspace(0.2, 0.7, 501)
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    for z in ([1.4, 0.1], [-0.3, 0.45], [0.5, 0.9], [-1.0, -1.0], [0.25, 0.3]):
        z = np.asarray(z)
        projected = np.linalg.norm(project(space, z) - z)
        brute = np.min(np.linalg.norm(grid - z, axis=1))
        assert projected <= brute + 1e-12
        assert brute - projected <= 1e-3


def test_space_dict_round_trip():
    space = DesignSpace(lower=(0.0, -1.0, 0.0), upper=(1.0, 1.0, 2.0), margins=((0, 2, 0.25),), ties=((0, 1),))
    assert DesignSpace.from_dict(json.loads(json.dumps(space.to_dict()))) == space


# ---------------- Trials and logs ---------------- #
def test_trial_rejects_non_finite_reward_and_bad_seed():
    with pytest.raises(TrialLogError):
        Trial(index=1, design=(0.5,), reward=float("nan"), source=Source.RANDOM, rng_seed=0)
    with pytest.raises(TrialLogError):
        Trial(index=1, design=(0.5,), reward=1.0, source=Source.RANDOM, rng_seed=2**64)


def test_log_requires_consecutive_indices():
    space = DesignSpace.unit_box(1)
    with pytest.raises(TrialLogError):
        TrialLog(space, "sphere", "random", 0, (_trial(1, [0.5]), _trial(3, [0.5])))


def test_log_rejects_infeasible_and_mismatched_designs():
    space = DesignSpace.unit_box(2)
    with pytest.raises(TrialLogError):
        TrialLog(space, "sphere", "random", 0, (_trial(1, [0.5, 1.5]),))
    with pytest.raises(DimensionError):
        TrialLog(space, "sphere", "random", 0, (_trial(1, [0.5]),))


def test_jsonl_round_trip_is_bit_exact():
    space = DesignSpace.unit_box(2)
    trials = (
        _trial(1, [0.1, 1 / 3], reward=0.1 + 0.2),
        _trial(2, [np.nextafter(0.0, 1.0), 1.0], reward=-1e-300),
    )
    log = TrialLog(space, "sphere?dim=2", "random", 7, trials, warm_start="ckpt.json@sha256:abc")
    text = log.to_jsonl()
    again = TrialLog.from_jsonl(text)
    assert again == log
    assert again.to_jsonl() == text
    assert again.trials[0].reward == 0.1 + 0.2


def test_dumps_exact_writes_17_digits_and_rejects_nan():
    assert dumps_exact({"x": 0.1}) == '{"x": 0.10000000000000001}'
    assert dumps_exact([1, True, None, "a"]) == '[1, true, null, "a"]'
    with pytest.raises(ValueError):
        dumps_exact(float("inf"))


def test_extended_appends_and_validates():
    space = DesignSpace.unit_box(1)
    log = TrialLog(space, "sphere", "random", 0)
    log = log.extended([_trial(1, [0.2])]).extended([_trial(2, [0.4], reward=3.0)])
    assert len(log) == 2
    np.testing.assert_array_equal(log.rewards, [1.0, 3.0])
    assert log.designs.shape == (2, 1)
    with pytest.raises(TrialLogError):
        log.extended([_trial(4, [0.4])])
