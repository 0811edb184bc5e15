"""
Deterministic synthetic reward oracles standing in for build -> actuate -> perceive.

The airplane oracle rewards a throw angle near 0.6, a slightly asymmetric
fold pair and a fold position near (0.45, 0.70); the gripper oracle has a
size-dependent optimum plus a secondary local bump. Formula functions are
vectorized over the last axis so they can be brute-force scanned.

Oracles are addressed by selector strings such as "airplane5",
"gripper?size=8.0&noise=0.05" or "sphere?dim=3".
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Tuple
from urllib.parse import parse_qsl

import numpy as np

import signal_utils
from core import ConfigError, DesignSpace, DimensionError, SforgeError, is_feasible

logger = logging.getLogger(__name__)

AIRPLANE_SCALE = 9.0
GRIPPER_SCALE = 0.93
GRIPPER_BUMP_HEIGHT = 0.15
GRIPPER_SIZE_RANGE = (1.5, 8.0)
GRIPPER_BASE_CENTER = np.array([0.50, 0.35, 0.65, 0.50])
GRIPPER_SIZE_DIRECTION = np.array([1.0, -1.0, 1.0, 1.0])
GRIPPER_BUMP_OFFSET = np.array([0.25, 0.0, 0.0, 0.0])

SYMMETRIC_AIRPLANE_CEILING = AIRPLANE_SCALE * float(np.exp(-2 * 0.03**2 / 0.05))


class InfeasibleDesignError(SforgeError, ValueError):
    pass


class OracleKind(str, Enum):
    AIRPLANE = "airplane"
    GRIPPER = "gripper"
    SPHERE = "sphere"
    TWO_BUMPS = "twobumps"


AIRPLANE_SPACE = DesignSpace.unit_box(5)
AIRPLANE_SYMMETRIC_SPACE = DesignSpace.unit_box(3)
AIRPLANE_TIED_SPACE = DesignSpace.unit_box(5, ties=((0, 2), (1, 3)))
# Left and right cut lines must not cross.
GRIPPER_SPACE = DesignSpace.unit_box(4, margins=((0, 2, 0.1), (1, 3, 0.1)))


# ---------------- Formulas ---------------- #
def airplane_distance(z: np.ndarray) -> np.ndarray:
    """Noise-free flight distance in meters; z[..., :4] are folds, z[..., 4] the release angle."""
    z = np.asarray(z, dtype=float)
    throw = np.exp(-((z[..., 4] - 0.60) ** 2) / 0.08)
    asymmetry = np.exp(-((z[..., 0] - z[..., 2] - 0.03) ** 2 + (z[..., 1] - z[..., 3] - 0.03) ** 2) / 0.05)
    fold = 0.30 + 0.70 * np.exp(-((z[..., 0] - 0.45) ** 2 + (z[..., 1] - 0.70) ** 2) / 0.06)
    return np.maximum(AIRPLANE_SCALE * throw * asymmetry * fold, 0.0)


def tie_symmetric(z: np.ndarray) -> np.ndarray:
    """(l_pos, l_orient, angle) -> (l_pos, l_orient, l_pos, l_orient, angle)."""
    z = np.asarray(z, dtype=float)
    return np.stack([z[..., 0], z[..., 1], z[..., 0], z[..., 1], z[..., 2]], axis=-1)


def gripper_center(object_size_cm: float) -> np.ndarray:
    return GRIPPER_BASE_CENTER + 0.04 * (object_size_cm - 5.0) * GRIPPER_SIZE_DIRECTION


def gripper_force(z: np.ndarray, object_size_cm: float) -> np.ndarray:
    """Noise-free grip force in newtons, without the feasibility check."""
    offset = np.asarray(z, dtype=float) - gripper_center(object_size_cm)
    main = GRIPPER_SCALE * np.exp(-np.sum(offset**2, axis=-1) / 0.10)
    bump = GRIPPER_BUMP_HEIGHT * np.exp(-np.sum((offset - GRIPPER_BUMP_OFFSET) ** 2, axis=-1) / 0.02)
    return np.maximum(main + bump, 0.0)


def sphere(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return -np.sum((z - 0.5) ** 2, axis=-1)


def two_bumps(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.exp(-np.sum((z - 0.25) ** 2, axis=-1) / 0.02) + 0.6 * np.exp(-np.sum((z - 0.75) ** 2, axis=-1) / 0.02)


def _noise(noise_std: float, rng: Optional[np.random.Generator]) -> float:
    if noise_std <= 0:
        return 0.0
    if rng is None:
        raise ValueError("a seeded generator is required when noise_std > 0")
    return float(rng.normal(0.0, noise_std))


def _check_dim(z: np.ndarray, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(z, dtype=float).reshape(-1)
    if arr.shape[0] != dim:
        raise DimensionError(f"{name} expects {dim} parameters, got {arr.shape[0]}")
    return arr


# ---------------- Oracles ---------------- #
def eval_airplane(z: np.ndarray, noise_std: float = 0.0, rng: Optional[np.random.Generator] = None) -> float:
    arr = _check_dim(z, 5, "airplane")
    return max(0.0, float(airplane_distance(arr)) + _noise(noise_std, rng))


def eval_airplane_symmetric(
    z: np.ndarray, noise_std: float = 0.0, rng: Optional[np.random.Generator] = None
) -> float:
    arr = _check_dim(z, 3, "symmetric airplane")
    return eval_airplane(tie_symmetric(arr), noise_std, rng)


@dataclass(frozen=True)
class GripperContext:
    object_size_cm: float = 5.0

    def __post_init__(self) -> None:
        lo, hi = GRIPPER_SIZE_RANGE
        if not lo <= self.object_size_cm <= hi:
            raise ConfigError(f"object size {self.object_size_cm} cm is outside [{lo}, {hi}]")


def eval_gripper(
    z: np.ndarray,
    ctx: GripperContext,
    noise_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> float:
    arr = _check_dim(z, 4, "gripper")
    if not is_feasible(GRIPPER_SPACE, arr):
        raise InfeasibleDesignError(f"gripper design {arr.tolist()} crosses its cut lines; project it first")
    return max(0.0, float(gripper_force(arr, ctx.object_size_cm)) + _noise(noise_std, rng))


def eval_testfn(
    kind: OracleKind, z: np.ndarray, noise_std: float = 0.0, rng: Optional[np.random.Generator] = None
) -> float:
    arr = np.asarray(z, dtype=float).reshape(-1)
    if kind is OracleKind.SPHERE:
        value = sphere(arr)
    elif kind is OracleKind.TWO_BUMPS:
        value = two_bumps(arr)
    else:
        raise ValueError(f"{kind} is not a test function")
    return float(value) + _noise(noise_std, rng)


@dataclass(frozen=True)
class OracleSpec:
    name: str
    kind: OracleKind
    dim: int
    space: DesignSpace
    noise_std: float = 0.0
    object_size_cm: Optional[float] = None
    symmetric: bool = False
    use_trace: bool = False

    def __post_init__(self) -> None:
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.space.dim != self.dim:
            raise DimensionError(f"oracle {self.name} has dimension {self.dim}, space has {self.space.dim}")
        if self.kind is OracleKind.AIRPLANE and self.dim not in (3, 5):
            raise ConfigError("airplane oracles have 5 or 3 parameters")
        if self.kind is OracleKind.GRIPPER and self.dim != 4:
            raise ConfigError("gripper oracles have 4 parameters")

    def __call__(self, z: np.ndarray, rng: Optional[np.random.Generator] = None) -> float:
        if self.kind is OracleKind.AIRPLANE:
            if self.symmetric:
                return eval_airplane_symmetric(z, self.noise_std, rng)
            return eval_airplane(z, self.noise_std, rng)
        if self.kind is OracleKind.GRIPPER:
            ctx = GripperContext(self.object_size_cm or 5.0)
            if self.use_trace:
                return self._measure_gripper(z, ctx, rng)
            return eval_gripper(z, ctx, self.noise_std, rng)
        return eval_testfn(self.kind, _check_dim(z, self.dim, self.name), self.noise_std, rng)

    def _measure_gripper(self, z: np.ndarray, ctx: GripperContext, rng: Optional[np.random.Generator]) -> float:
        force = eval_gripper(z, ctx)
        if rng is None:
            rng = np.random.default_rng(0)
        recording = signal_utils.synthesize_recording(force, rng, noise_std=self.noise_std)
        return max(0.0, signal_utils.recording_force(recording))

    def noise_free(self) -> Callable[[np.ndarray], np.ndarray]:
        """Vectorized noise-free reward over the last axis (no feasibility check)."""
        if self.kind is OracleKind.AIRPLANE:
            return (lambda z: airplane_distance(tie_symmetric(z))) if self.symmetric else airplane_distance
        if self.kind is OracleKind.GRIPPER:
            size = self.object_size_cm or 5.0
            return lambda z: gripper_force(z, size)
        return sphere if self.kind is OracleKind.SPHERE else two_bumps

    @property
    def optimum(self) -> Optional[float]:
        """Closed-form optimum of the noise-free reward over the feasible set, when known."""
        if self.kind is OracleKind.AIRPLANE:
            return SYMMETRIC_AIRPLANE_CEILING if (self.symmetric or self.space.ties) else AIRPLANE_SCALE
        if self.kind is OracleKind.GRIPPER:
            center = gripper_center(self.object_size_cm or 5.0)
            if np.all((center >= 0) & (center <= 1)) and is_feasible(self.space, center):
                return float(gripper_force(center, self.object_size_cm or 5.0))
            return None
        if self.kind is OracleKind.SPHERE:
            return 0.0
        return float(two_bumps(np.full(self.dim, 0.25)))


# ---------------- Selectors ---------------- #
_RELATIVE_SCALE = {
    OracleKind.AIRPLANE: AIRPLANE_SCALE,
    OracleKind.GRIPPER: GRIPPER_SCALE,
    OracleKind.SPHERE: 1.0,
    OracleKind.TWO_BUMPS: 1.0,
}


def _parse_params(query: str) -> Dict[str, str]:
    params = dict(parse_qsl(query, keep_blank_values=True, strict_parsing=bool(query)))
    allowed = {"noise", "size", "dim", "trace"}
    unknown = set(params) - allowed
    if unknown:
        raise ConfigError(f"unknown oracle parameters {sorted(unknown)}")
    return params


def resolve_oracle(selector: str) -> OracleSpec:
    """Build an oracle from a selector like "gripper?size=5.0&noise=0.05".

    `noise` is relative to the oracle's reward scale (9 m airplane, 0.93 N gripper, 1 otherwise).
    """
    name, _, query = selector.strip().partition("?")
    try:
        params = _parse_params(query)
        noise = float(params.get("noise", 0.0))
        if name == "airplane5":
            kind, dim, space, extra = OracleKind.AIRPLANE, 5, AIRPLANE_SPACE, {}
        elif name == "airplane3":
            kind, dim, space, extra = OracleKind.AIRPLANE, 3, AIRPLANE_SYMMETRIC_SPACE, {"symmetric": True}
        elif name == "airplane5sym":
            kind, dim, space, extra = OracleKind.AIRPLANE, 5, AIRPLANE_TIED_SPACE, {}
        elif name == "gripper":
            size = float(params.get("size", 5.0))
            GripperContext(size)
            extra = {"object_size_cm": size, "use_trace": params.get("trace", "0") in ("1", "true", "yes")}
            kind, dim, space = OracleKind.GRIPPER, 4, GRIPPER_SPACE
        elif name in (OracleKind.SPHERE.value, OracleKind.TWO_BUMPS.value):
            kind = OracleKind(name)
            dim = int(params.get("dim", 2))
            if dim < 1:
                raise ConfigError("dim must be >= 1")
            space, extra = DesignSpace.unit_box(dim), {}
        else:
            raise ConfigError(f"unknown oracle {name!r}")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid oracle selector {selector!r}: {exc}") from exc
    if noise < 0:
        raise ConfigError("noise must be >= 0")
    return OracleSpec(
        name=selector.strip(),
        kind=kind,
        dim=dim,
        space=space,
        noise_std=noise * _RELATIVE_SCALE[kind],
        **extra,
    )


# ---------------- Brute-force scans ---------------- #
def grid_scan_max(
    fn: Callable[[np.ndarray], np.ndarray],
    dim: int,
    step: float,
    lower: float = 0.0,
    upper: float = 1.0,
    chunk_rows: int = 1 << 18,
    mask: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> Tuple[float, np.ndarray]:
    """Maximum of a vectorized `fn` over a regular grid with spacing `step` per axis.

    `mask`, when given, keeps only rows for which it returns True.
    """
    axis = np.linspace(lower, upper, int(round((upper - lower) / step)) + 1)
    n = axis.size
    total = n**dim
    best_value, best_point = -np.inf, np.full(dim, np.nan)
    for start in range(0, total, chunk_rows):
        flat = np.arange(start, min(start + chunk_rows, total))
        idx = np.stack(np.unravel_index(flat, (n,) * dim), axis=-1)
        points = axis[idx]
        if mask is not None:
            points = points[mask(points)]
            if points.shape[0] == 0:
                continue
        values = fn(points)
        k = int(np.argmax(values))
        if values[k] > best_value:
            best_value, best_point = float(values[k]), points[k]
    return best_value, best_point
