"""
Self-test checks: surrogate gradients against central finite differences,
oracle maxima against brute-force scans, and the signal pipeline against
naive references.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

import envs
import nn
import signal_utils

logger = logging.getLogger(__name__)

GRAD_PROBES = 100
GRAD_DIMS = (1, 3, 4, 5)
GRAD_WIDTHS = (4, 8)
FD_STEP = 1e-5
GRAD_TOL = 1e-4
FILTER_TRACES = 1000
SOFT_TIME_LIMIT_S = 300.0
SCAN_STEP = 0.01
SCAN_STEP_HIGH_DIM = 0.05


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


# ---------------- Gradient checks ---------------- #
def _probe(rng: np.random.Generator, k: int) -> Tuple[nn.SurrogateModel, nn.TrainConfig]:
    dim = GRAD_DIMS[k % len(GRAD_DIMS)]
    activation = (nn.Activation.TANH, nn.Activation.RELU)[(k // len(GRAD_DIMS)) % 2]
    width = GRAD_WIDTHS[(k // (2 * len(GRAD_DIMS))) % len(GRAD_WIDTHS)]
    model = nn.init_model(dim, rng, hidden_width=width, activation=activation)
    # Random biases so ReLU units are not all switched on at the origin.
    model = nn.SurrogateModel(
        model.layer_dims,
        model.weights,
        tuple(rng.normal(0.0, 0.3, size=b.shape) for b in model.biases),
        model.activation,
        (float(rng.normal()), float(rng.uniform(0.5, 2.0))) if k % 3 == 0 else None,
    )
    return model, nn.TrainConfig(hidden_width=width, activation=activation.value)


def _raw_outputs(m: nn.SurrogateModel, batch: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Network output before de-standardization, plus the ReLU on/off pattern."""
    h = batch
    pattern = [np.zeros(0, dtype=bool)]
    for w, b in zip(m.weights[:-1], m.biases[:-1]):
        pre = h @ w.T + b
        if m.activation is nn.Activation.RELU:
            pattern.append((pre > 0).ravel())
            h = np.maximum(pre, 0.0)
        else:
            h = np.tanh(pre)
    out = h @ m.weights[-1].T + m.biases[-1]
    return out[:, 0], np.concatenate(pattern)


def _loss_and_regime(
    m: nn.SurrogateModel, designs: np.ndarray, rewards: np.ndarray, delta: float
) -> Tuple[float, np.ndarray]:
    mean, std = m.reward_standardization or (0.0, 1.0)
    out, pattern = _raw_outputs(m, designs)
    e = out - (rewards - mean) / std
    quadratic = np.abs(e) <= delta
    loss = np.where(quadratic, 0.5 * e * e, delta * (np.abs(e) - 0.5 * delta))
    return float(np.mean(loss)), np.concatenate([pattern, quadratic])


def _nudged(m: nn.SurrogateModel, group: str, layer: int, idx: Tuple[int, ...], step: float) -> nn.SurrogateModel:
    weights, biases = list(m.weights), list(m.biases)
    target = weights if group == "weights" else biases
    arr = target[layer].copy()
    arr[idx] += step
    target[layer] = arr
    return nn.SurrogateModel(m.layer_dims, tuple(weights), tuple(biases), m.activation, m.reward_standardization)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-5)


def check_param_gradients(seed: int = 0, probes: int = GRAD_PROBES) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, compared = 0.0, 0
    for k in range(probes):
        model, cfg = _probe(rng, k)
        designs = rng.uniform(0.0, 1.0, size=(4, model.d_in))
        rewards = rng.normal(0.0, 1.5, size=4)
        _, grads = nn.grad_params(model, designs, rewards, cfg)
        _, regime = _loss_and_regime(model, designs, rewards, cfg.huber_delta)
        for group in ("weights", "biases"):
            for layer, g in enumerate(getattr(grads, group)):
                for idx in np.ndindex(*g.shape):
                    nudged_plus = _nudged(model, group, layer, idx, FD_STEP)
                    nudged_minus = _nudged(model, group, layer, idx, -FD_STEP)
                    plus, regime_plus = _loss_and_regime(nudged_plus, designs, rewards, cfg.huber_delta)
                    minus, regime_minus = _loss_and_regime(nudged_minus, designs, rewards, cfg.huber_delta)
                    if not (np.array_equal(regime, regime_plus) and np.array_equal(regime, regime_minus)):
                        continue
                    numeric = (plus - minus) / (2 * FD_STEP)
                    worst = max(worst, relative_error(float(g[idx]), numeric))
                    compared += 1
    return CheckResult(
        "nn: parameter gradients",
        worst < GRAD_TOL and compared > 0,
        f"max rel err {worst:.2e} over {compared} coordinates",
    )


def check_input_gradients(seed: int = 1, probes: int = GRAD_PROBES) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst, compared = 0.0, 0
    for k in range(probes):
        model, _ = _probe(rng, k)
        z = rng.uniform(0.0, 1.0, size=model.d_in)
        analytic = nn.grad_input(model, z)
        _, regime = _raw_outputs(model, z[None, :])
        for i in range(model.d_in):
            step = np.zeros_like(z)
            step[i] = FD_STEP
            _, regime_plus = _raw_outputs(model, (z + step)[None, :])
            _, regime_minus = _raw_outputs(model, (z - step)[None, :])
            if not (np.array_equal(regime, regime_plus) and np.array_equal(regime, regime_minus)):
                continue
            numeric = (nn.forward(model, z + step) - nn.forward(model, z - step)) / (2 * FD_STEP)
            worst = max(worst, relative_error(float(analytic[i]), numeric))
            compared += 1
    return CheckResult(
        "nn: input gradients",
        worst < GRAD_TOL and compared > 0,
        f"max rel err {worst:.2e} over {compared} coordinates",
    )


# ---------------- Oracle scans ---------------- #
def scan_step(dim: int) -> float:
    return SCAN_STEP if dim <= 4 else SCAN_STEP_HIGH_DIM


def _scan_check(
    name: str,
    oracle: envs.OracleSpec,
    tol: float,
    mask: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> CheckResult:
    optimum = oracle.optimum
    scan_max, argmax = envs.grid_scan_max(oracle.noise_free(), oracle.dim, scan_step(oracle.dim), mask=mask)
    passed = optimum is not None and abs(scan_max - optimum) <= tol
    detail = f"scan max {scan_max:.6f} at {np.round(argmax, 3).tolist()}, optimum {optimum}"
    return CheckResult(f"envs: {name} maximum", passed, detail)


def _gripper_mask(points: np.ndarray) -> np.ndarray:
    ok = np.ones(points.shape[0], dtype=bool)
    for i, j, m in envs.GRIPPER_SPACE.margins:
        ok &= points[:, i] + m <= points[:, j] + 1e-9
    return ok


def check_oracles() -> List[CheckResult]:
    results = []

    airplane = envs.resolve_oracle("airplane5")
    at_argmax = airplane(np.array([0.45, 0.70, 0.42, 0.67, 0.60]))
    scan_max, _ = envs.grid_scan_max(airplane.noise_free(), 5, scan_step(5))
    results.append(
        CheckResult(
            "envs: airplane5 maximum",
            abs(at_argmax - envs.AIRPLANE_SCALE) < 1e-9 and scan_max <= at_argmax + 1e-12,
            f"value at argmax {at_argmax:.6f}, scan max {scan_max:.6f}",
        )
    )
    results.append(_scan_check("airplane3", envs.resolve_oracle("airplane3"), 1e-9))
    for size in (5.0, 8.0):
        oracle = envs.resolve_oracle(f"gripper?size={size}")
        # The secondary bump nudges the true maximum a little off the stated centre.
        results.append(_scan_check(f"gripper size {size:g}", oracle, 0.01 * (oracle.optimum or 1.0), _gripper_mask))
    results.append(_scan_check("sphere 3-D", envs.resolve_oracle("sphere?dim=3"), 1e-9))
    results.append(_scan_check("twobumps 2-D", envs.resolve_oracle("twobumps?dim=2"), 1e-9))
    return results


# ---------------- Signal pipeline ---------------- #
def check_filters(seed: int = 2, traces: int = FILTER_TRACES) -> CheckResult:
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(traces):
        n = int(rng.integers(signal_utils.AVERAGE_WINDOW, 300))
        x = rng.normal(0.0, 1.0, size=n)
        if rng.random() < 0.3:
            x = np.round(x, 1)  # repeated values exercise median ties
        if not np.array_equal(signal_utils.median_filter(x), signal_utils.naive_median_filter(x)):
            mismatches += 1
        elif not np.array_equal(signal_utils.moving_average(x), signal_utils.naive_moving_average(x)):
            mismatches += 1
    plateau = np.full(240, 0.3)
    plateau[[40, 90, 150]] = 100.0
    spike_ok = signal_utils.grip_force(plateau) == 0.3
    return CheckResult(
        "signal: filters vs naive reference",
        mismatches == 0 and spike_ok,
        f"{mismatches} mismatching traces of {traces}; spike plateau {'ok' if spike_ok else 'FAILED'}",
    )


# ---------------- Runner ---------------- #
def _timed(fn: Callable[[], object]) -> List[CheckResult]:
    start = time.perf_counter()
    try:
        out = fn()
    except Exception as exc:  # noqa: BLE001
        logger.exception("Check %s crashed", getattr(fn, "__name__", fn))
        return [CheckResult(getattr(fn, "__name__", "check"), False, f"crashed: {exc}", time.perf_counter() - start)]
    elapsed = time.perf_counter() - start
    results = out if isinstance(out, list) else [out]
    share = elapsed / max(len(results), 1)
    return [CheckResult(r.name, r.passed, r.detail, share) for r in results]


def run_checks() -> List[CheckResult]:
    start = time.perf_counter()
    results: List[CheckResult] = []
    for fn in (check_param_gradients, check_input_gradients, check_oracles, check_filters):
        results.extend(_timed(fn))
    total = time.perf_counter() - start
    if total > SOFT_TIME_LIMIT_S:
        logger.warning("Self-test took %.0f s (expected under %.0f s)", total, SOFT_TIME_LIMIT_S)
    return results
