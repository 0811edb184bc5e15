"""
Campaign bundles on disk.

A bundle is a directory holding config.json, trials.jsonl and, when a
surrogate was fitted, checkpoint.json. Every durable read and write of
campaign state goes through this module. Writes land in a temporary sibling
directory that is renamed into place, so an interrupted save leaves the
previous bundle intact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import tempfile
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Tuple

import nn
from core import (
    ConfigError,
    DimensionError,
    SforgeError,
    TrialLog,
    TrialLogError,
    dumps_exact,
)
from envs import resolve_oracle
from optimize import CampaignConfig, Method, load_method

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CONFIG_FILE = "config.json"
TRIALS_FILE = "trials.jsonl"
CHECKPOINT_FILE = "checkpoint.json"

# Output root for run bundles; overridable for sandboxes and CI.
DEFAULT_OUT_DIR = "runs"


def default_out_dir() -> Path:
    return Path(os.environ.get("SFORGE_OUT", DEFAULT_OUT_DIR))


class BundleError(SforgeError):
    pass


class BundleSchemaError(BundleError):
    pass


class BundleCorruptError(BundleError):
    pass


class BundleInvariantError(BundleError):
    pass


@dataclass(frozen=True)
class CampaignBundle:
    config: CampaignConfig
    log: TrialLog
    final_checkpoint: Optional[nn.SurrogateModel] = None
    estimate: Optional[Tuple[float, ...]] = None
    seed: Optional[int] = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if len(self.log) > self.config.budget:
            raise BundleInvariantError(f"log has {len(self.log)} trials, budget is {self.config.budget}")
        if self.log.method != self.config.method.value:
            raise BundleInvariantError(f"log method {self.log.method!r} differs from config {self.config.method.value!r}")
        if self.final_checkpoint is not None and self.final_checkpoint.d_in != self.log.space.dim:
            raise DimensionError(
                f"checkpoint expects dimension {self.final_checkpoint.d_in}, space has {self.log.space.dim}"
            )
        if self.estimate is not None:
            object.__setattr__(self, "estimate", tuple(float(v) for v in self.estimate))
            if len(self.estimate) != self.log.space.dim:
                raise DimensionError(f"estimate has dimension {len(self.estimate)}, space has {self.log.space.dim}")

    @property
    def oracle(self) -> str:
        return self.log.oracle_name


# ---------------- Save ---------------- #
def _write_text(path: Path, text: str) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as fp:
        fp.write(text)
        fp.flush()
        os.fsync(fp.fileno())


def _config_payload(bundle: CampaignBundle) -> Dict[str, Any]:
    return {
        "schema_version": bundle.schema_version,
        "oracle": bundle.oracle,
        "seed": bundle.seed,
        "campaign": bundle.config.to_dict(),
        "estimate": None if bundle.estimate is None else list(bundle.estimate),
    }


def save_bundle(bundle: CampaignBundle, path: Path | str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        _recover_backup(path)
        staging = Path(tempfile.mkdtemp(prefix=f".{path.name}.tmp-", dir=path.parent))
    except OSError as exc:
        raise BundleError(f"{path}: cannot create bundle directory: {exc}") from exc

    try:
        _write_text(staging / CONFIG_FILE, dumps_exact(_config_payload(bundle)) + "\n")
        _write_text(staging / TRIALS_FILE, bundle.log.to_jsonl())
        if bundle.final_checkpoint is not None:
            _write_text(staging / CHECKPOINT_FILE, dumps_exact(nn.to_checkpoint(bundle.final_checkpoint)) + "\n")
        _swap_into_place(staging, path)
    except OSError as exc:
        shutil.rmtree(staging, ignore_errors=True)
        raise BundleError(f"{path}: failed to write bundle: {exc}") from exc
    logger.debug("Saved bundle %s (%d trials)", path, len(bundle.log))


def _swap_into_place(staging: Path, path: Path) -> None:
    if not path.exists():
        os.replace(staging, path)
        return
    backup = path.with_name(f".{path.name}.old-{uuid.uuid4().hex}")
    os.replace(path, backup)
    try:
        os.replace(staging, path)
    except OSError:
        os.replace(backup, path)
        raise
    shutil.rmtree(backup, ignore_errors=True)


def _recover_backup(path: Path) -> None:
    """Put back the bundle a crash left only under its `.old-*` backup name."""
    if path.exists():
        return
    backups = sorted(path.parent.glob(f".{path.name}.old-*"), key=lambda p: p.stat().st_mtime)
    if not backups:
        return
    logger.warning("Restoring %s from interrupted save backup %s", path, backups[-1].name)
    os.replace(backups[-1], path)


# ---------------- Load ---------------- #
def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise BundleCorruptError(f"{path}: missing") from exc
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleCorruptError(f"{path}: unreadable JSON: {exc}") from exc


def load_bundle(path: Path | str) -> CampaignBundle:
    """Read and re-validate a bundle written by `save_bundle`."""
    path = Path(path)
    try:
        _recover_backup(path)
    except OSError as exc:
        raise BundleCorruptError(f"{path}: cannot restore interrupted save: {exc}") from exc
    if not path.is_dir():
        raise BundleCorruptError(f"{path}: not a bundle directory")

    payload = _read_json(path / CONFIG_FILE)
    if not isinstance(payload, dict):
        raise BundleCorruptError(f"{path / CONFIG_FILE}: expected a JSON object")
    version = payload.get("schema_version")
    if not isinstance(version, int) or not 1 <= version <= SCHEMA_VERSION:
        raise BundleSchemaError(f"{path}: unsupported schema_version {version!r}")

    try:
        config = CampaignConfig.from_dict(payload["campaign"])
    except KeyError as exc:
        raise BundleCorruptError(f"{path / CONFIG_FILE}: missing key {exc}") from exc
    except ConfigError as exc:
        raise BundleInvariantError(f"{path / CONFIG_FILE}: {exc}") from exc

    try:
        log = TrialLog.from_jsonl((path / TRIALS_FILE).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise BundleCorruptError(f"{path / TRIALS_FILE}: missing") from exc
    except (json.JSONDecodeError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise BundleCorruptError(f"{path / TRIALS_FILE}: {exc}") from exc
    except DimensionError:
        raise
    except (TrialLogError, ValueError) as exc:
        raise BundleInvariantError(f"{path / TRIALS_FILE}: {exc}") from exc

    checkpoint = None
    if (path / CHECKPOINT_FILE).exists():
        checkpoint = _model_from(path / CHECKPOINT_FILE)

    if log.oracle_name != payload.get("oracle", log.oracle_name):
        raise BundleInvariantError(f"{path}: config oracle {payload['oracle']!r} differs from log {log.oracle_name!r}")
    try:
        return CampaignBundle(
            config=config,
            log=log,
            final_checkpoint=checkpoint,
            estimate=payload.get("estimate"),
            seed=payload.get("seed"),
            schema_version=version,
        )
    except DimensionError:
        raise
    except (TypeError, ValueError) as exc:
        raise BundleInvariantError(f"{path}: {exc}") from exc


def _model_from(path: Path) -> nn.SurrogateModel:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise BundleCorruptError(f"{path}: expected a JSON object")
    version = data.get("version")
    if not isinstance(version, int) or not 1 <= version <= nn.CHECKPOINT_VERSION:
        raise BundleSchemaError(f"{path}: unsupported checkpoint version {version!r}")
    try:
        return nn.from_checkpoint(data)
    except DimensionError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleCorruptError(f"{path}: {exc}") from exc


def _checkpoint_path(path: Path | str) -> Path:
    path = Path(path)
    return path / CHECKPOINT_FILE if path.is_dir() else path


def load_checkpoint(path: Path | str) -> nn.SurrogateModel:
    """Surrogate from a checkpoint file, or from the checkpoint of a bundle directory."""
    return _model_from(_checkpoint_path(path))


def checkpoint_provenance(path: Path | str) -> str:
    """Provenance tag `<path>@sha256:<digest>` of the checkpoint a warm start came from."""
    file = _checkpoint_path(path)
    try:
        digest = hashlib.sha256(file.read_bytes()).hexdigest()
    except OSError as exc:
        raise BundleCorruptError(f"{file}: {exc}") from exc
    return f"{file.as_posix()}@sha256:{digest}"


def iter_bundles(root: Path | str) -> Iterator[Path]:
    """Bundle directories under `root`, in sorted path order."""
    root = Path(root)
    if (root / CONFIG_FILE).is_file():
        yield root
        return
    for config_path in sorted(root.rglob(CONFIG_FILE)):
        if not any(part.startswith(".") for part in config_path.relative_to(root).parts):
            yield config_path.parent


# ---------------- Resume ---------------- #
def resume(bundle: CampaignBundle, oracle: Any = None, method: Optional[Method | str] = None) -> TrialLog:
    """Continue a saved campaign up to its budget; the result matches an uninterrupted run."""
    cfg = bundle.config
    if method is not None and Method(method) is not cfg.method:
        raise ConfigError(f"bundle was run with {cfg.method.value}, not {Method(method).value}")
    if oracle is None:
        oracle = resolve_oracle(bundle.oracle)
    elif getattr(oracle, "name", bundle.oracle) != bundle.oracle:
        logger.warning("Resuming %s bundle with oracle %s", bundle.oracle, getattr(oracle, "name", "?"))
    if len(bundle.log) >= cfg.budget:
        return bundle.log
    logger.info("Resuming %s campaign at trial %d of %d", cfg.method.value, len(bundle.log) + 1, cfg.budget)
    return load_method(cfg.method).run(oracle, cfg, bundle.log.trials)
