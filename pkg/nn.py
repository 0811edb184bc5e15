"""
Fixed-depth MLP reward model with hand-written reverse-mode gradients.

Four affine layers (three hidden activations, no output activation).
Weights are stored (out, in) so a layer computes `x @ W.T + b` on a batch.
Gradients are available both for the parameters (training) and for the
input (inverse design).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from core import ConfigError, DimensionError

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
NUM_LAYERS = 4
DEFAULT_HIDDEN_WIDTH = 512


class Activation(str, Enum):
    TANH = "tanh"
    RELU = "relu"


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 1000
    batch: int = 8
    lr: float = 0.01
    weight_decay: float = 0.1
    huber_delta: float = 1.0
    init_sigma: Optional[float] = None  # None -> 1/sqrt(fan_in) per layer
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden_width: int = DEFAULT_HIDDEN_WIDTH
    activation: str = Activation.TANH.value
    standardize_rewards: bool = False

    def validate(self) -> None:
        if self.iters < 0:
            raise ConfigError("train.iters must be >= 0")
        if self.batch < 1 or self.hidden_width < 1:
            raise ConfigError("train.batch and train.hidden_width must be >= 1")
        for name in ("lr", "huber_delta", "adam_eps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"train.{name} must be positive")
        if self.weight_decay < 0:
            raise ConfigError("train.weight_decay must be >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("train.adam_beta1/adam_beta2 must lie in [0, 1)")
        if self.init_sigma is not None and not self.init_sigma > 0:
            raise ConfigError("train.init_sigma must be positive or null")
        try:
            Activation(self.activation)
        except ValueError as exc:
            raise ConfigError(f"unknown activation {self.activation!r}") from exc

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class SurrogateModel:
    layer_dims: Tuple[int, ...]
    weights: Tuple[np.ndarray, ...]
    biases: Tuple[np.ndarray, ...]
    activation: Activation = Activation.TANH
    reward_standardization: Optional[Tuple[float, float]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        object.__setattr__(self, "weights", tuple(np.asarray(w, dtype=float) for w in self.weights))
        object.__setattr__(self, "biases", tuple(np.asarray(b, dtype=float).reshape(-1) for b in self.biases))
        object.__setattr__(self, "activation", Activation(self.activation))
        if len(self.layer_dims) != NUM_LAYERS + 1 or len(self.weights) != NUM_LAYERS or len(self.biases) != NUM_LAYERS:
            raise DimensionError(f"a surrogate has exactly {NUM_LAYERS} affine layers")
        if self.layer_dims[-1] != 1:
            raise DimensionError("surrogate output must be scalar")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_dims[k + 1], self.layer_dims[k])
            if w.shape != expected or b.shape != (expected[0],):
                raise DimensionError(f"layer {k} has shapes {w.shape}/{b.shape}, expected {expected}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {k} has non-finite parameters")
        if self.reward_standardization is not None:
            mean, std = (float(v) for v in self.reward_standardization)
            if not (np.isfinite(mean) and np.isfinite(std) and std > 0):
                raise ValueError(f"invalid reward standardization {self.reward_standardization}")
            object.__setattr__(self, "reward_standardization", (mean, std))

    @property
    def d_in(self) -> int:
        return self.layer_dims[0]

    @property
    def _scale(self) -> Tuple[float, float]:
        return self.reward_standardization or (0.0, 1.0)


class Gradients(NamedTuple):
    weights: List[np.ndarray]
    biases: List[np.ndarray]


@dataclass
class AdamWState:
    m_weights: List[np.ndarray]
    m_biases: List[np.ndarray]
    v_weights: List[np.ndarray]
    v_biases: List[np.ndarray]
    step: int = 0


# ---------------- Construction ---------------- #
def init_model(
    d_in: int,
    rng: np.random.Generator,
    sigma: Optional[float] = None,
    hidden_width: int = DEFAULT_HIDDEN_WIDTH,
    activation: Activation | str = Activation.TANH,
) -> SurrogateModel:
    """Normal weights (fixed `sigma`, or 1/sqrt(fan_in) when None) and zero biases."""
    if d_in < 1:
        raise DimensionError("d_in must be >= 1")
    dims = (d_in, hidden_width, hidden_width, hidden_width, 1)
    weights = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        std = sigma if sigma is not None else 1.0 / np.sqrt(fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
    biases = [np.zeros(fan_out) for fan_out in dims[1:]]
    return SurrogateModel(layer_dims=dims, weights=tuple(weights), biases=tuple(biases), activation=activation)


def init_adamw(m: SurrogateModel) -> AdamWState:
    return AdamWState(
        m_weights=[np.zeros_like(w) for w in m.weights],
        m_biases=[np.zeros_like(b) for b in m.biases],
        v_weights=[np.zeros_like(w) for w in m.weights],
        v_biases=[np.zeros_like(b) for b in m.biases],
    )


def with_standardization(m: SurrogateModel, stats: Optional[Tuple[float, float]]) -> SurrogateModel:
    return SurrogateModel(m.layer_dims, m.weights, m.biases, m.activation, stats)


def trainable_copy(m: SurrogateModel) -> SurrogateModel:
    """Same model over freshly allocated arrays, safe to update in place."""
    return SurrogateModel(
        m.layer_dims,
        tuple(w.copy() for w in m.weights),
        tuple(b.copy() for b in m.biases),
        m.activation,
        m.reward_standardization,
    )


# ---------------- Forward / backward ---------------- #
def _activate(activation: Activation, h: np.ndarray) -> np.ndarray:
    if activation is Activation.TANH:
        return np.tanh(h)
    return np.maximum(h, 0.0)


def _activation_grad(activation: Activation, h: np.ndarray, a: np.ndarray) -> np.ndarray:
    if activation is Activation.TANH:
        return 1.0 - a * a
    return (h > 0.0).astype(float)


def _as_batch(m: SurrogateModel, z: np.ndarray) -> np.ndarray:
    batch = np.asarray(z, dtype=float)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != m.d_in:
        raise DimensionError(f"model expects inputs of dimension {m.d_in}, got shape {batch.shape}")
    return batch


def _forward_cache(m: SurrogateModel, batch: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    acts = [batch]
    pre = []
    for w, b in zip(m.weights[:-1], m.biases[:-1]):
        h = acts[-1] @ w.T + b
        pre.append(h)
        acts.append(_activate(m.activation, h))
    out = (acts[-1] @ m.weights[-1].T + m.biases[-1])[:, 0]
    return acts, pre, out


def forward_batch(m: SurrogateModel, z: np.ndarray) -> np.ndarray:
    """Predicted rewards (reward units) for a (n, d_in) batch."""
    _, _, out = _forward_cache(m, _as_batch(m, z))
    mean, std = m._scale
    return mean + std * out


def forward(m: SurrogateModel, z: Sequence[float]) -> float:
    return float(forward_batch(m, z)[0])


def huber(pred: Any, target: Any, delta: float) -> Tuple[Any, Any]:
    """Elementwise Huber loss and its derivative with respect to `pred`."""
    if delta <= 0:
        raise ValueError("huber delta must be positive")
    e = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    abs_e = np.abs(e)
    quadratic = abs_e <= delta
    loss = np.where(quadratic, 0.5 * e * e, delta * (abs_e - 0.5 * delta))
    grad = np.where(quadratic, e, delta * np.sign(e))
    if loss.ndim == 0:
        return float(loss), float(grad)
    return loss, grad


def _backward(
    m: SurrogateModel,
    acts: List[np.ndarray],
    pre: List[np.ndarray],
    d_out: np.ndarray,
) -> Tuple[Gradients, np.ndarray]:
    """Backpropagate d(objective)/d(raw output) of shape (n,) through the net."""
    delta = d_out[:, None]
    grad_w: List[np.ndarray] = [np.empty(0)] * NUM_LAYERS
    grad_b: List[np.ndarray] = [np.empty(0)] * NUM_LAYERS
    grad_w[-1] = delta.T @ acts[-1]
    grad_b[-1] = delta.sum(axis=0)
    d_act = delta @ m.weights[-1]
    for k in range(NUM_LAYERS - 2, -1, -1):
        d_pre = d_act * _activation_grad(m.activation, pre[k], acts[k + 1])
        grad_w[k] = d_pre.T @ acts[k]
        grad_b[k] = d_pre.sum(axis=0)
        d_act = d_pre @ m.weights[k]
    return Gradients(grad_w, grad_b), d_act


def grad_params(
    m: SurrogateModel,
    designs: np.ndarray,
    rewards: np.ndarray,
    cfg: TrainConfig,
) -> Tuple[float, Gradients]:
    """Mean Huber loss over the batch and its exact gradient for every parameter.

    With reward standardization set, the loss is measured on standardized
    targets against the raw network output.
    """
    batch = _as_batch(m, designs)
    targets = np.asarray(rewards, dtype=float).reshape(-1)
    if batch.shape[0] == 0 or targets.shape[0] != batch.shape[0]:
        raise ValueError("batch must be non-empty with one reward per design")
    mean, std = m._scale
    targets = (targets - mean) / std

    acts, pre, out = _forward_cache(m, batch)
    losses, d_pred = huber(out, targets, cfg.huber_delta)
    n = batch.shape[0]
    grads, _ = _backward(m, acts, pre, d_pred / n)
    return float(np.mean(losses)), grads


def grad_input_batch(m: SurrogateModel, z: np.ndarray) -> np.ndarray:
    """Row i holds d forward(z_i) / d z_i."""
    batch = _as_batch(m, z)
    acts, pre, _ = _forward_cache(m, batch)
    _, std = m._scale
    _, d_input = _backward(m, acts, pre, np.full(batch.shape[0], std))
    return d_input


def grad_input(m: SurrogateModel, z: Sequence[float]) -> np.ndarray:
    return grad_input_batch(m, z)[0]


def _check_shapes(params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    if len(params) != len(grads):
        raise DimensionError(f"{len(grads)} gradients for {len(params)} parameters")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter {p.shape}")


def adamw_update(m: SurrogateModel, grads: Gradients, state: AdamWState, cfg: TrainConfig) -> None:
    """In-place AdamW update of `m`'s arrays and of `state`.

    Only for a training-local model (see `trainable_copy`); every other
    holder of `m` sees the new parameters.
    """
    params = list(m.weights) + list(m.biases)
    g_all = list(grads.weights) + list(grads.biases)
    m1_all = state.m_weights + state.m_biases
    m2_all = state.v_weights + state.v_biases
    _check_shapes(params, g_all)

    state.step += 1
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    correction1 = 1.0 - b1**state.step
    correction2 = 1.0 - b2**state.step
    shrink = 1.0 - cfg.lr * cfg.weight_decay
    for p, g, m1, m2 in zip(params, g_all, m1_all, m2_all):
        scratch = np.multiply(g, 1.0 - b1)
        m1 *= b1
        m1 += scratch
        np.multiply(g, g, out=scratch)
        scratch *= 1.0 - b2
        m2 *= b2
        m2 += scratch
        # scratch <- lr * m_hat / (sqrt(v_hat) + eps)
        np.divide(m2, correction2, out=scratch)
        np.sqrt(scratch, out=scratch)
        scratch += cfg.adam_eps
        np.divide(m1, scratch, out=scratch)
        scratch *= cfg.lr / correction1
        p *= shrink
        p -= scratch


def adamw_step(
    m: SurrogateModel,
    grads: Gradients,
    state: AdamWState,
    cfg: TrainConfig,
) -> Tuple[SurrogateModel, AdamWState]:
    """One AdamW update with bias-corrected moments and decoupled weight decay.

    Leaves `m` and `state` untouched.
    """
    new_model = trainable_copy(m)
    new_state = AdamWState(
        [a.copy() for a in state.m_weights],
        [a.copy() for a in state.m_biases],
        [a.copy() for a in state.v_weights],
        [a.copy() for a in state.v_biases],
        state.step,
    )
    adamw_update(new_model, grads, new_state, cfg)
    return new_model, new_state


# ---------------- Checkpoints ---------------- #
def to_checkpoint(m: SurrogateModel) -> Dict[str, Any]:
    stats = m.reward_standardization
    return {
        "version": CHECKPOINT_VERSION,
        "layer_dims": list(m.layer_dims),
        "activation": m.activation.value,
        "weights": [w.tolist() for w in m.weights],
        "biases": [b.tolist() for b in m.biases],
        "reward_standardization": None if stats is None else {"mean": stats[0], "std": stats[1]},
    }


def from_checkpoint(data: Dict[str, Any]) -> SurrogateModel:
    version = int(data.get("version", -1))
    if version > CHECKPOINT_VERSION or version < 1:
        raise ValueError(f"unsupported checkpoint version {version}")
    stats = data.get("reward_standardization")
    return SurrogateModel(
        layer_dims=tuple(data["layer_dims"]),
        weights=tuple(np.array(w, dtype=float) for w in data["weights"]),
        biases=tuple(np.array(b, dtype=float) for b in data["biases"]),
        activation=Activation(data.get("activation", Activation.TANH.value)),
        reward_standardization=None if stats is None else (float(stats["mean"]), float(stats["std"])),
    )
