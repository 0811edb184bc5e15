from __future__ import annotations

import numpy as np
import pytest

import envs
from core import ConfigError, DimensionError

AIRPLANE_ARGMAX = np.array([0.45, 0.70, 0.42, 0.67, 0.60])


def test_airplane_peak_value():
    assert envs.eval_airplane(AIRPLANE_ARGMAX) == pytest.approx(9.0, abs=1e-9)


def test_symmetric_airplane_is_capped_below_the_asymmetric_peak():
    value = envs.eval_airplane_symmetric(np.array([0.45, 0.70, 0.60]))
    assert value == pytest.approx(envs.SYMMETRIC_AIRPLANE_CEILING)
    assert value == pytest.approx(8.68, abs=5e-3)
    assert value < envs.AIRPLANE_SCALE


def test_airplane_throw_angle_dominates():
    off_angle = AIRPLANE_ARGMAX.copy()
    off_angle[4] = 0.0
    assert envs.eval_airplane(off_angle) < 0.1 * envs.AIRPLANE_SCALE


def test_airplane_rewards_are_never_negative():
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert envs.eval_airplane(np.zeros(5), noise_std=5.0, rng=rng) >= 0.0


def test_noisy_oracle_needs_a_generator_and_is_reproducible():
    oracle = envs.resolve_oracle("airplane5?noise=0.05")
    assert oracle.noise_std == pytest.approx(0.45)
    with pytest.raises(ValueError):
        oracle(AIRPLANE_ARGMAX)
    a = oracle(AIRPLANE_ARGMAX, np.random.default_rng(3))
    b = oracle(AIRPLANE_ARGMAX, np.random.default_rng(3))
    assert a == b


def test_gripper_optimum_moves_with_object_size():
    small = envs.resolve_oracle("gripper?size=5")
    assert small(envs.gripper_center(5.0)) == pytest.approx(small.optimum)
    large = envs.resolve_oracle("gripper?size=8.0")
    assert large(envs.gripper_center(5.0)) == pytest.approx(0.522, abs=2e-3)
    assert large.optimum > large(envs.gripper_center(5.0))


def test_gripper_secondary_bump():
    bump = envs.gripper_center(5.0) + envs.GRIPPER_BUMP_OFFSET
    assert float(envs.gripper_force(bump, 5.0)) == pytest.approx(0.648, abs=1e-3)


def test_gripper_rejects_crossing_cut_lines():
    with pytest.raises(envs.InfeasibleDesignError):
        envs.eval_gripper(np.array([0.7, 0.3, 0.65, 0.5]), envs.GripperContext(5.0))


def test_gripper_size_range_is_enforced():
    with pytest.raises(ConfigError):
        envs.resolve_oracle("gripper?size=12")


def test_trace_measured_gripper_recovers_the_force():
    oracle = envs.resolve_oracle("gripper?size=5&trace=1")
    z = envs.gripper_center(5.0)
    assert oracle(z, np.random.default_rng(1)) == pytest.approx(oracle.optimum, rel=1e-9)


def test_test_functions():
    sphere = envs.resolve_oracle("sphere?dim=3")
    assert sphere(np.full(3, 0.5)) == 0.0
    assert sphere(np.zeros(3)) == pytest.approx(-0.75)
    bumps = envs.resolve_oracle("twobumps?dim=2")
    assert bumps(np.full(2, 0.25)) > bumps(np.full(2, 0.75)) > bumps(np.full(2, 0.5))
    with pytest.raises(DimensionError):
        sphere(np.zeros(2))


@pytest.mark.parametrize(
    "selector",
    ["dragon", "airplane5?noise=-1", "sphere?dim=0", "sphere?depth=3", "airplane5?noise=abc"],
)
def test_bad_selectors_are_config_errors(selector):
    with pytest.raises(ConfigError):
        envs.resolve_oracle(selector)


def test_selectors_pick_the_right_space():
    assert envs.resolve_oracle("airplane3").dim == 3
    tied = envs.resolve_oracle("airplane5sym")
    assert tied.space.ties == ((0, 2), (1, 3))
    assert tied.optimum == envs.SYMMETRIC_AIRPLANE_CEILING
    assert envs.resolve_oracle("gripper").space == envs.GRIPPER_SPACE


def test_grid_scan_finds_the_sphere_centre():
    value, point = envs.grid_scan_max(envs.sphere, 2, 0.1, chunk_rows=7)
    assert value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(point, [0.5, 0.5])
