"""
Design spaces, trials and trial logs shared by every other module.

A design space is a box with optional ordered-margin constraints
(z[i] + m <= z[j]) and ties (z[dst] mirrors z[src]). Trial logs serialize as
JSON Lines with floats written at 17 significant digits.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9
MAX_PROJECTION_PASSES = 32


# ---------------- Errors ---------------- #
class SforgeError(Exception):
    """Base class for every error raised by sforge."""


class DimensionError(SforgeError, ValueError):
    pass


class InfeasibleSpaceError(SforgeError, ValueError):
    pass


class TrialLogError(SforgeError, ValueError):
    pass


class ConfigError(SforgeError, ValueError):
    pass


class OracleError(SforgeError):
    """An oracle evaluation failed. `partial_log` holds the trials completed before it."""

    def __init__(self, message: str, partial_log: Optional["TrialLog"] = None) -> None:
        super().__init__(message)
        self.partial_log = partial_log


# ---------------- Exact JSON ---------------- #
def format_float(value: float) -> str:
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"Cannot serialize non-finite float {value!r}")
    return format(value, ".17g")


def dumps_exact(obj: Any) -> str:
    """JSON encoding with every float written at 17 significant digits."""
    if obj is None or isinstance(obj, bool):
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Enum):
        return json.dumps(obj.value)
    if isinstance(obj, np.ndarray):
        return dumps_exact(obj.tolist())
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}: {dumps_exact(v)}" for k, v in obj.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps_exact(v) for v in obj) + "]"
    raise TypeError(f"Object of type {type(obj).__name__} is not serializable")


# ---------------- Design space ---------------- #
@dataclass(frozen=True)
class DesignSpace:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    margins: Tuple[Tuple[int, int, float], ...] = ()
    ties: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        margins = tuple((int(i), int(j), float(m)) for i, j, m in self.margins)
        ties = tuple((int(s), int(d)) for s, d in self.ties)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "margins", margins)
        object.__setattr__(self, "ties", ties)

        if not lower or len(lower) != len(upper):
            raise DimensionError("lower and upper must be non-empty and of equal length")
        if not all(np.isfinite(lower)) or not all(np.isfinite(upper)):
            raise ConfigError("bounds must be finite")
        # Degenerate axes (lower == upper) are allowed; inverted ones are not.
        for k, (lo, hi) in enumerate(zip(lower, upper)):
            if lo > hi:
                raise ConfigError(f"lower[{k}]={lo} exceeds upper[{k}]={hi}")

        dim = len(lower)
        for i, j, m in margins:
            if i == j or not (0 <= i < dim and 0 <= j < dim):
                raise ConfigError(f"margin ({i}, {j}, {m}) must reference distinct valid indices")
            if m < 0 or not np.isfinite(m):
                raise ConfigError(f"margin ({i}, {j}, {m}) must be finite and non-negative")

        sources = {s for s, _ in ties}
        destinations = [d for _, d in ties]
        for s, d in ties:
            if s == d or not (0 <= s < dim and 0 <= d < dim):
                raise ConfigError(f"tie ({s}, {d}) must reference distinct valid indices")
        if len(set(destinations)) != len(destinations):
            raise ConfigError("a coordinate can be the destination of at most one tie")
        if sources & set(destinations):
            raise ConfigError("tie sources must not be tie destinations")

        try:
            project(self, self.midpoint)
        except InfeasibleSpaceError as exc:
            raise InfeasibleSpaceError(f"design space has an empty feasible region: {exc}") from exc

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower_array + self.upper_array)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lower": list(self.lower),
            "upper": list(self.upper),
            "margins": [list(m) for m in self.margins],
            "ties": [list(t) for t in self.ties],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DesignSpace":
        return cls(
            lower=tuple(data["lower"]),
            upper=tuple(data["upper"]),
            margins=tuple(tuple(m) for m in data.get("margins", [])),
            ties=tuple(tuple(t) for t in data.get("ties", [])),
        )

    @classmethod
    def unit_box(cls, dim: int, **kwargs: Any) -> "DesignSpace":
        return cls(lower=(0.0,) * dim, upper=(1.0,) * dim, **kwargs)


def as_point(space: DesignSpace, z: Iterable[float]) -> np.ndarray:
    """Validate `z` as a design point of `space` and return a float64 copy."""
    arr = np.array(z, dtype=float).reshape(-1)
    if arr.shape[0] != space.dim:
        raise DimensionError(f"design has dimension {arr.shape[0]}, space has {space.dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"design has non-finite coordinates: {arr.tolist()}")
    return arr


def is_feasible(space: DesignSpace, z: Iterable[float]) -> bool:
    arr = np.asarray(z, dtype=float).reshape(-1)
    if arr.shape[0] != space.dim:
        raise DimensionError(f"design has dimension {arr.shape[0]}, space has {space.dim}")
    if not np.all(np.isfinite(arr)):
        return False
    if np.any(arr < space.lower_array) or np.any(arr > space.upper_array):
        return False
    for i, j, m in space.margins:
        if arr[i] + m > arr[j] + FEASIBILITY_TOL:
            return False
    for src, dst in space.ties:
        if arr[dst] != arr[src]:
            return False
    return True


def _apply_ties(space: DesignSpace, z: np.ndarray) -> None:
    for src, dst in space.ties:
        z[dst] = z[src]


def project(space: DesignSpace, z: Iterable[float]) -> np.ndarray:
    """Map `z` to a feasible point; feasible inputs are returned unchanged."""
    arr = as_point(space, z)
    if is_feasible(space, arr):
        return arr

    lower, upper = space.lower_array, space.upper_array
    for _ in range(MAX_PROJECTION_PASSES):
        _apply_ties(space, arr)
        np.clip(arr, lower, upper, out=arr)
        if is_feasible(space, arr):
            return arr
        # Split each margin violation evenly between both coordinates.
        for i, j, m in space.margins:
            violation = arr[i] + m - arr[j]
            if violation > FEASIBILITY_TOL:
                arr[i] -= violation / 2
                arr[j] += violation / 2
        np.clip(arr, lower, upper, out=arr)
        _apply_ties(space, arr)
        if is_feasible(space, arr):
            return arr
    raise InfeasibleSpaceError(
        f"projection did not converge after {MAX_PROJECTION_PASSES} passes (last point {arr.tolist()})"
    )


def project_batch(space: DesignSpace, points: np.ndarray) -> np.ndarray:
    """Row-wise `project`; box-only spaces take a vectorized clamp."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != space.dim:
        raise DimensionError(f"expected shape (n, {space.dim}), got {points.shape}")
    if not space.margins and not space.ties:
        return np.clip(points, space.lower_array, space.upper_array)
    return np.stack([project(space, row) for row in points])


def sample_uniform(space: DesignSpace, rng: np.random.Generator) -> np.ndarray:
    return project(space, rng.uniform(space.lower_array, space.upper_array))


# ---------------- Trials ---------------- #
class Source(str, Enum):
    EXPLORE = "explore"
    EXPLOIT = "exploit"
    RANDOM = "random"
    GRID = "grid"
    SNES = "snes"


@dataclass(frozen=True)
class Trial:
    index: int
    design: Tuple[float, ...]
    reward: float
    source: Source
    rng_seed: int
    wall_ms: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "design", tuple(float(v) for v in self.design))
        object.__setattr__(self, "reward", float(self.reward))
        object.__setattr__(self, "source", Source(self.source))
        if self.index < 1:
            raise TrialLogError(f"trial index must be >= 1, got {self.index}")
        if not np.isfinite(self.reward):
            raise TrialLogError(f"trial {self.index} has non-finite reward {self.reward}")
        if not all(np.isfinite(self.design)):
            raise TrialLogError(f"trial {self.index} has non-finite design {self.design}")
        if not 0 <= int(self.rng_seed) < 2**64:
            raise TrialLogError(f"trial {self.index} seed {self.rng_seed} is not a 64-bit integer")

    def to_json(self) -> str:
        return dumps_exact(
            {
                "index": self.index,
                "design": list(self.design),
                "reward": self.reward,
                "source": self.source.value,
                "rng_seed": int(self.rng_seed),
                "wall_ms": int(self.wall_ms),
            }
        )

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Trial":
        return cls(
            index=int(data["index"]),
            design=tuple(float(v) for v in data["design"]),
            reward=float(data["reward"]),
            source=Source(data["source"]),
            rng_seed=int(data["rng_seed"]),
            wall_ms=int(data.get("wall_ms", 0)),
        )


@dataclass(frozen=True)
class TrialLog:
    space: DesignSpace
    oracle_name: str
    method: str
    master_seed: int
    trials: Tuple[Trial, ...] = ()
    warm_start: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "trials", tuple(self.trials))
        self.validate()

    def validate(self) -> None:
        for expected, trial in enumerate(self.trials, start=1):
            if trial.index != expected:
                raise TrialLogError(f"trial indices must be consecutive from 1: expected {expected}, got {trial.index}")
            if len(trial.design) != self.space.dim:
                raise DimensionError(f"trial {trial.index} has dimension {len(trial.design)}, space has {self.space.dim}")
            if not is_feasible(self.space, trial.design):
                raise TrialLogError(f"trial {trial.index} design {trial.design} is infeasible")

    def __len__(self) -> int:
        return len(self.trials)

    def extended(self, trials: Sequence[Trial]) -> "TrialLog":
        return TrialLog(
            space=self.space,
            oracle_name=self.oracle_name,
            method=self.method,
            master_seed=self.master_seed,
            trials=self.trials + tuple(trials),
            warm_start=self.warm_start,
        )

    @property
    def designs(self) -> np.ndarray:
        return np.array([t.design for t in self.trials], dtype=float).reshape(-1, self.space.dim)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.trials], dtype=float)

    def header(self) -> Dict[str, Any]:
        return {
            "space": self.space.to_dict(),
            "oracle_name": self.oracle_name,
            "method": self.method,
            "master_seed": int(self.master_seed),
            "warm_start": self.warm_start,
        }

    def to_jsonl(self) -> str:
        lines = [dumps_exact(self.header())]
        lines.extend(trial.to_json() for trial in self.trials)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "TrialLog":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise TrialLogError("empty trial log")
        header = json.loads(lines[0])
        trials: List[Trial] = [Trial.from_dict(json.loads(line)) for line in lines[1:]]
        return cls(
            space=DesignSpace.from_dict(header["space"]),
            oracle_name=str(header["oracle_name"]),
            method=str(header["method"]),
            master_seed=int(header["master_seed"]),
            trials=tuple(trials),
            warm_start=header.get("warm_start"),
        )
