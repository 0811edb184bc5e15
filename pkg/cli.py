"""
Command-line front door: run, compare, adapt, resume, verify, replay.

Every campaign flag mirrors a CampaignConfig field in kebab-case
(`--budget`, `--epsilon-final`, `--train-lr`, `--inverse-restarts`, ...).
A config file may supply any subset of the settings; flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

import nn
import persist
import reporting
import verify
from core import ConfigError, DimensionError, OracleError, SforgeError, TrialLog
from envs import resolve_oracle
from optimize import (
    CampaignConfig,
    Method,
    best_trial,
    cell_seed,
    default_grid_shape,
    load_method,
    run_campaign,
    with_overrides,
)
from surrogate import InverseDesignConfig

logger = logging.getLogger(__name__)

CONFIG_PATH = Path("sforge.json")
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_ORACLE = 3

ADAPT_BUDGET = 50
MAX_SEED = 2**64


# ---------------- Configuration ---------------- #
def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Load settings with fallbacks.

    Order of precedence:
    1) `--config` file when given
    2) `CONFIG_JSON` environment variable containing JSON
    3) `sforge.json` in the working directory if present
    4) built-in defaults
    """
    if path:
        return _read_config_file(Path(path))

    env_cfg = os.environ.get("CONFIG_JSON")
    if env_cfg:
        try:
            logger.warning("CONFIG_JSON env detected; using environment-provided configuration")
            return _ensure_mapping(json.loads(env_cfg), "CONFIG_JSON")
        except json.JSONDecodeError as exc:
            logger.error("Failed to parse CONFIG_JSON env: %s", exc)

    if CONFIG_PATH.exists():
        return _read_config_file(CONFIG_PATH)
    return {}


def _read_config_file(path: Path) -> Dict[str, Any]:
    try:
        with path.open(encoding="utf-8") as fp:
            return _ensure_mapping(json.load(fp), str(path))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _ensure_mapping(data: Any, source: str) -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a JSON object")
    return data


def log_level(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> str:
    if getattr(args, "log_level", None):
        return args.log_level
    env_level = os.environ.get("SFORGE_LOG_LEVEL")
    if env_level:
        return env_level
    return str((file_cfg.get("logging") or {}).get("level", "INFO"))


def setup_logging(level: str) -> None:
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level {level!r}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT)
    logging.getLogger().setLevel(numeric)


def parse_seeds(text: str | Sequence[int]) -> Tuple[int, ...]:
    """Seeds from `1..5` (inclusive), `1,4,9` or a mix such as `1..3,7`."""
    if not isinstance(text, str):
        seeds = tuple(int(s) for s in text)
    else:
        seeds_list: List[int] = []
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            lo, sep, hi = part.partition("..")
            try:
                if sep:
                    a, b = int(lo), int(hi)
                    if b < a:
                        raise ConfigError(f"empty seed range {part!r}")
                    seeds_list.extend(range(a, b + 1))
                else:
                    seeds_list.append(int(part))
            except ValueError as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"invalid seed {part!r}") from exc
        seeds = tuple(seeds_list)
    if not seeds:
        raise ConfigError("at least one seed is required")
    for seed in seeds:
        if not 0 <= seed < MAX_SEED:
            raise ConfigError(f"seed {seed} is not a 64-bit unsigned integer")
    return seeds


def parse_override(text: str) -> Tuple[str, Any]:
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {text!r} must look like key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def parse_shape(text: str) -> List[int]:
    try:
        return [int(v) for v in text.replace("-", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid grid shape {text!r}") from exc


@dataclass(frozen=True)
class RunManifest:
    oracle: str
    method: str
    overrides: Dict[str, Any]
    out_dir: Path
    seeds: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigError("manifest needs at least one seed")
        try:
            Method(self.method)
        except ValueError as exc:
            raise ConfigError(f"unknown method {self.method!r}") from exc
        resolve_oracle(self.oracle)

    def campaign(self, base: CampaignConfig, method: Optional[str] = None) -> CampaignConfig:
        return with_overrides(base, {**self.overrides, "method": method or self.method})


# ---------------- Flags ---------------- #
def _flag_type(annotation: str) -> Callable[[str], Any]:
    if "Tuple" in annotation:
        return parse_shape
    if "bool" in annotation:
        return bool
    if "int" in annotation:
        return int
    if "float" in annotation:
        return float
    return str


def _add_config_flags(parser: argparse.ArgumentParser, cls: type, prefix: str, skip: Sequence[str] = ()) -> None:
    for f in fields(cls):
        if f.name in skip or f.name in ("train", "inverse"):
            continue
        key = f"{prefix}{f.name}"
        flag = "--" + key.replace(".", "-").replace("_", "-")
        kind = _flag_type(str(f.type))
        if kind is bool:
            parser.add_argument(flag, dest=f"cfg:{key}", action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS)
        else:
            parser.add_argument(flag, dest=f"cfg:{key}", type=kind, default=argparse.SUPPRESS, metavar=f.name.upper())


def _add_campaign_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("campaign")
    _add_config_flags(group, CampaignConfig, "", skip=("method", "master_seed"))
    _add_config_flags(group, nn.TrainConfig, "train.")
    _add_config_flags(group, InverseDesignConfig, "inverse.")
    group.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="Extra dotted override, e.g. train.lr=0.005")


def _flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = dict(parse_override(item) for item in getattr(args, "overrides", []))
    overrides.update({k[len("cfg:"):]: v for k, v in vars(args).items() if k.startswith("cfg:")})
    return overrides


def _add_cell_flags(parser: argparse.ArgumentParser, oracle_required: bool = False) -> None:
    parser.add_argument("--oracle", required=oracle_required, help='Oracle selector, e.g. "airplane5" or "gripper?size=8"')
    parser.add_argument("--seeds", help='Seeds as "a..b" (inclusive) or a comma list')
    parser.add_argument("--out-dir", help="Output directory (default: $SFORGE_OUT or ./runs)")
    parser.add_argument("--jobs", type=int, help="Campaign cells to run in parallel")
    parser.add_argument("--force", action="store_true", help="Overwrite existing bundles")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(prog="sforge", description="Surrogate-driven design optimization campaigns")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="Run one method over several seeds")
    run.add_argument("--method", choices=[m.value for m in Method])
    _add_cell_flags(run)
    _add_campaign_flags(run)
    run.set_defaults(handler=cmd_run)

    compare = sub.add_parser("compare", parents=[common], help="Compare methods under equal budgets")
    compare.add_argument("--methods", help="Comma list of methods (default: all four)")
    _add_cell_flags(compare)
    _add_campaign_flags(compare)
    compare.set_defaults(handler=cmd_compare)

    adapt = sub.add_parser("adapt", parents=[common], help="Warm- vs cold-started campaigns on a new oracle")
    adapt.add_argument("base", help="Bundle whose checkpoint seeds the warm runs")
    _add_cell_flags(adapt, oracle_required=True)
    _add_campaign_flags(adapt)
    adapt.set_defaults(handler=cmd_adapt)

    resume = sub.add_parser("resume", parents=[common], help="Continue a saved campaign to its budget")
    resume.add_argument("bundle")
    resume.add_argument("--method", choices=[m.value for m in Method], help="Fail unless the bundle used this method")
    resume.set_defaults(handler=cmd_resume)

    check = sub.add_parser("verify", parents=[common], help="Gradient, oracle and signal self-test")
    check.set_defaults(handler=cmd_verify)

    replay = sub.add_parser("replay", parents=[common], help="Print saved curves as CSV")
    replay.add_argument("path", help="Bundle or directory of bundles")
    replay.set_defaults(handler=cmd_replay)
    return parser


# ---------------- Cells ---------------- #
@dataclass(frozen=True)
class Cell:
    label: str
    seed: int
    oracle: str
    cfg: CampaignConfig
    bundle_dir: Optional[Path] = None


@dataclass(frozen=True)
class CellOutcome:
    label: str
    seed: int
    log: TrialLog
    estimate: Optional[Tuple[float, ...]]
    predicted: Optional[float]


def run_cell(cell: Cell) -> CellOutcome:
    """Run one campaign and save its bundle; a failing oracle still flushes the partial log."""
    oracle = resolve_oracle(cell.oracle)
    try:
        result = run_campaign(oracle, cell.cfg)
    except OracleError as exc:
        if cell.bundle_dir is not None and exc.partial_log is not None:
            persist.save_bundle(persist.CampaignBundle(cell.cfg, exc.partial_log, seed=cell.seed), cell.bundle_dir)
            logger.error("Saved partial log (%d trials) to %s", len(exc.partial_log), cell.bundle_dir)
        raise
    if cell.bundle_dir is not None:
        bundle = persist.CampaignBundle(cell.cfg, result.log, result.model, result.estimate, seed=cell.seed)
        persist.save_bundle(bundle, cell.bundle_dir)
    logger.info("Finished %s seed %d: best %.4f", cell.label, cell.seed, best_trial(result.log).reward)
    return CellOutcome(cell.label, cell.seed, result.log, result.estimate, result.predicted)


def execute(cells: Sequence[Cell], jobs: int) -> List[CellOutcome]:
    """Run cells (deduplicated) and return outcomes in input order."""
    unique: Dict[Tuple[str, int, Optional[Path], CampaignConfig], Cell] = {}
    for cell in cells:
        unique.setdefault(_cell_key(cell), cell)
    outcomes: Dict[Any, CellOutcome] = {}
    with reporting.progress() as bar:
        task = bar.add_task("campaigns", total=len(unique))
        if jobs <= 1 or len(unique) == 1:
            for key, cell in unique.items():
                outcomes[key] = run_cell(cell)
                bar.advance(task)
        else:
            with ProcessPoolExecutor(max_workers=jobs) as executor:
                futures = {key: executor.submit(run_cell, cell) for key, cell in unique.items()}
                for key, future in futures.items():
                    outcomes[key] = future.result()
                    bar.advance(task)
    return [outcomes[_cell_key(cell)] for cell in cells]


def _cell_key(cell: Cell) -> Tuple[str, int, Optional[Path], CampaignConfig]:
    return (cell.label, cell.seed, cell.bundle_dir, cell.cfg)


def _claim(paths: Sequence[Path], force: bool) -> None:
    existing = [p for p in paths if p.exists()]
    if existing and not force:
        raise ConfigError(f"{existing[0]} already exists; pass --force to overwrite or use `resume`")


# ---------------- Manifest helpers ---------------- #
def _manifest(args: argparse.Namespace, file_cfg: Dict[str, Any], method: Optional[str] = None) -> RunManifest:
    oracle = args.oracle or file_cfg.get("oracle")
    if not oracle:
        raise ConfigError("no oracle given (use --oracle or the config key 'oracle')")
    seeds = parse_seeds(args.seeds if args.seeds else file_cfg.get("seeds", "0"))
    out_dir = Path(args.out_dir or file_cfg.get("out_dir") or persist.default_out_dir())
    return RunManifest(
        oracle=oracle,
        method=method or getattr(args, "method", None) or file_cfg.get("method", Method.EPS_GREEDY.value),
        overrides=_flag_overrides(args),
        out_dir=out_dir,
        seeds=seeds,
    )


def _base_config(file_cfg: Dict[str, Any]) -> CampaignConfig:
    return CampaignConfig.from_dict(dict(file_cfg.get("campaign") or {}))


def _jobs(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> int:
    jobs = args.jobs if args.jobs is not None else int(file_cfg.get("jobs", 1))
    if jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return jobs


def _method_cells(manifest: RunManifest, cfg: CampaignConfig, label: str, root: Path) -> List[Cell]:
    return [
        Cell(label, seed, manifest.oracle, replace(cfg, master_seed=cell_seed(seed, cfg.method)), root / str(seed))
        for seed in manifest.seeds
    ]


def _trials_consumed(cfg: CampaignConfig, dim: int) -> int:
    if cfg.method is Method.SNES:
        return cfg.snes_pop * cfg.snes_gens
    if cfg.method is Method.GRID:
        shape = cfg.grid_shape or default_grid_shape(dim, cfg.budget)
        return min(int(np.prod(shape)), cfg.budget)
    return cfg.budget


# ---------------- Commands ---------------- #
def cmd_run(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> int:
    manifest = _manifest(args, file_cfg)
    cfg = manifest.campaign(_base_config(file_cfg))
    root = manifest.out_dir / cfg.method.value
    cells = _method_cells(manifest, cfg, cfg.method.value, root)
    _claim([c.bundle_dir for c in cells if c.bundle_dir], args.force)

    outcomes = execute(cells, _jobs(args, file_cfg))
    best = {}
    for outcome in outcomes:
        trial = best_trial(outcome.log)
        best[outcome.seed] = (trial.reward, trial.index, trial.design)
    reporting.console.print(reporting.best_table(f"{cfg.method.value} on {manifest.oracle}", best))
    for outcome in outcomes:
        if outcome.estimate is not None:
            reporting.console.print(
                f"seed {outcome.seed}: estimated optimum {reporting.format_point(outcome.estimate)} "
                f"(predicted {outcome.predicted:.4f})"
            )
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> int:
    manifest = _manifest(args, file_cfg)
    methods = [m.strip() for m in (args.methods or ",".join(m.value for m in Method)).split(",") if m.strip()]
    base = _base_config(file_cfg)
    dim = resolve_oracle(manifest.oracle).dim
    configs = [manifest.campaign(base, method) for method in methods]

    consumed = {cfg.method.value: _trials_consumed(cfg, dim) for cfg in configs}
    if len(set(consumed.values())) != 1:
        raise ConfigError(f"methods must consume equal budgets, got {consumed}")

    cells: List[Cell] = []
    for cfg in configs:
        cells.extend(_method_cells(manifest, cfg, cfg.method.value, manifest.out_dir / cfg.method.value))
    _claim(sorted({c.bundle_dir for c in cells if c.bundle_dir}), args.force)
    outcomes = execute(cells, _jobs(args, file_cfg))

    curve, best_by_method, rewards_by_method = [], {}, {}
    seen = set()
    for outcome in outcomes:
        curve.extend(reporting.curve_rows(outcome.label, outcome.seed, outcome.log))
        if (outcome.label, outcome.seed) in seen:
            continue
        seen.add((outcome.label, outcome.seed))
        best_by_method.setdefault(outcome.label, []).append(best_trial(outcome.log).reward)
        rewards_by_method.setdefault(outcome.label, []).extend(outcome.log.rewards.tolist())

    summary = sorted(reporting.summary_rows(best_by_method), key=lambda row: -row[1])
    reporting.write_csv(manifest.out_dir / "compare.csv", reporting.CURVE_HEADER, curve)
    reporting.write_csv(manifest.out_dir / "summary.csv", reporting.SUMMARY_HEADER, summary)
    reporting.write_csv(
        manifest.out_dir / "distribution.csv",
        reporting.DISTRIBUTION_HEADER,
        reporting.distribution_rows(rewards_by_method),
    )
    reporting.console.print(reporting.summary_table(f"Best reward on {manifest.oracle}", "Method", summary))
    return EXIT_OK


def cmd_adapt(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> int:
    base_bundle = persist.load_bundle(args.base)
    if base_bundle.final_checkpoint is None:
        raise ConfigError(f"{args.base} has no checkpoint to warm-start from")
    manifest = _manifest(args, file_cfg, method=Method.EPS_GREEDY.value)
    oracle = resolve_oracle(manifest.oracle)
    if oracle.dim != base_bundle.log.space.dim:
        raise ConfigError(f"{manifest.oracle} has dimension {oracle.dim}, base bundle has {base_bundle.log.space.dim}")

    base = replace(base_bundle.config, budget=ADAPT_BUDGET, warm_checkpoint=None, epsilon_final=None)
    cold = manifest.campaign(base)
    warm = replace(cold, warm_checkpoint=str(Path(args.base) / persist.CHECKPOINT_FILE))
    cells = _method_cells(manifest, warm, "warm", manifest.out_dir / "warm")
    cells += _method_cells(manifest, cold, "cold", manifest.out_dir / "cold")
    _claim([c.bundle_dir for c in cells if c.bundle_dir], args.force)
    outcomes = execute(cells, _jobs(args, file_cfg))

    curve, best_by_variant = [], {}
    for outcome in outcomes:
        curve.extend(reporting.curve_rows(outcome.label, outcome.seed, outcome.log))
        best_by_variant.setdefault(outcome.label, []).append(best_trial(outcome.log).reward)
    base_design = np.asarray(best_trial(base_bundle.log).design)
    base_value = float(oracle.noise_free()(base_design))
    summary = reporting.summary_rows(best_by_variant) + [["base-best", base_value, 0.0]]

    reporting.write_csv(manifest.out_dir / "adapt.csv", reporting.ADAPT_HEADER, curve)
    reporting.write_csv(manifest.out_dir / "adapt_summary.csv", reporting.ADAPT_SUMMARY_HEADER, summary)
    reporting.console.print(reporting.summary_table(f"Adaptation to {manifest.oracle}", "Variant", summary))
    return EXIT_OK


def cmd_resume(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> int:
    bundle = persist.load_bundle(args.bundle)
    oracle = resolve_oracle(bundle.oracle)
    log = persist.resume(bundle, oracle, method=args.method)
    if len(log) == len(bundle.log):
        reporting.console.print(f"{args.bundle} already holds {len(log)} trials; nothing to do")
        return EXIT_OK
    model, estimate = bundle.final_checkpoint, bundle.estimate
    if bundle.config.method is Method.EPS_GREEDY:
        model, design, _ = load_method(Method.EPS_GREEDY).final_estimate(log, oracle, bundle.config)
        estimate = tuple(float(v) for v in design)
    persist.save_bundle(replace(bundle, log=log, final_checkpoint=model, estimate=estimate), args.bundle)
    trial = best_trial(log)
    reporting.console.print(f"Resumed to {len(log)} trials; best {trial.reward:.4f} at trial {trial.index}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> int:
    results = verify.run_checks()
    reporting.console.print(reporting.checks_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def cmd_replay(args: argparse.Namespace, file_cfg: Dict[str, Any]) -> int:
    rows = []
    for path in persist.iter_bundles(args.path):
        bundle = persist.load_bundle(path)
        seed = bundle.seed if bundle.seed is not None else bundle.log.master_seed
        rows.extend(reporting.curve_rows(bundle.config.method.value, seed, bundle.log))
    if not rows:
        raise ConfigError(f"no bundles found under {args.path}")
    sys.stdout.write(reporting.csv_text(reporting.CURVE_HEADER, rows))
    return EXIT_OK


# ---------------- Entry ---------------- #
def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = load_config(args.config)
        setup_logging(log_level(args, file_cfg))
        return args.handler(args, file_cfg)
    except (ConfigError, DimensionError, persist.BundleError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except OracleError as exc:
        logger.error("Oracle failure: %s", exc)
        return EXIT_ORACLE
    except SforgeError as exc:
        logger.error("%s", exc)
        return EXIT_FAILED
    except Exception:  # noqa: BLE001
        logger.exception("Unexpected error running %s", args.command)
        return EXIT_FAILED
