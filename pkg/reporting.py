"""
CSV writers and console tables for campaign results.

CSV files use '.' decimals, LF line endings and a header row; floats are
written with repr so reruns produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np
from rich import box
from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from core import TrialLog
from optimize import running_best
from verify import CheckResult

logger = logging.getLogger(__name__)

console = Console()

CURVE_HEADER = ["method", "seed", "trial_index", "reward", "running_best"]
SUMMARY_HEADER = ["method", "median_best", "iqr"]
DISTRIBUTION_HEADER = ["method", "bin_lo", "bin_hi", "count"]
ADAPT_HEADER = ["variant", "seed", "trial_index", "reward", "running_best"]
ADAPT_SUMMARY_HEADER = ["variant", "median_best", "iqr"]
DISTRIBUTION_BINS = 20

Row = Sequence[object]


def _cell(value: object) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Row]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Row]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows), encoding="utf-8", newline="")
    logger.info("Wrote %s", path)
    return path


# ---------------- Rows ---------------- #
def curve_rows(label: str, seed: int, log: TrialLog) -> List[Row]:
    best = running_best(log)
    return [[label, seed, t.index, t.reward, b] for t, b in zip(log.trials, best)]


def median_iqr(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    q25, q50, q75 = np.percentile(arr, [25, 50, 75])
    return float(q50), float(q75 - q25)


def summary_rows(best_by_label: Mapping[str, Sequence[float]]) -> List[Row]:
    rows = []
    for label, values in best_by_label.items():
        median, iqr = median_iqr(values)
        rows.append([label, median, iqr])
    return rows


def distribution_rows(rewards_by_label: Mapping[str, Sequence[float]], bins: int = DISTRIBUTION_BINS) -> List[Row]:
    """Reward histogram per label on bin edges shared by every label."""
    pooled = np.concatenate([np.asarray(v, dtype=float) for v in rewards_by_label.values()] or [np.zeros(0)])
    if pooled.size == 0:
        return []
    edges = np.histogram_bin_edges(pooled, bins=bins)
    rows: List[Row] = []
    for label, values in rewards_by_label.items():
        counts, _ = np.histogram(np.asarray(values, dtype=float), bins=edges)
        rows.extend([label, float(lo), float(hi), int(c)] for lo, hi, c in zip(edges[:-1], edges[1:], counts))
    return rows


# ---------------- Console ---------------- #
def summary_table(title: str, first_column: str, rows: Sequence[Row]) -> Table:
    table = Table(title=title, box=box.ROUNDED, show_lines=False)
    table.add_column(first_column, style="bold")
    table.add_column("Median best", justify="right")
    table.add_column("IQR", justify="right")
    for label, median, iqr in rows:
        table.add_row(str(label), f"{median:.4f}", f"{iqr:.4f}")
    return table


def best_table(title: str, results: Dict[int, Tuple[float, int, Sequence[float]]]) -> Table:
    """Best trial per seed: seed -> (reward, trial index, design)."""
    table = Table(title=title, box=box.ROUNDED)
    table.add_column("Seed", style="bold")
    table.add_column("Best reward", justify="right")
    table.add_column("Trial", justify="right")
    table.add_column("Design")
    for seed, (reward, index, design) in results.items():
        table.add_row(str(seed), f"{reward:.4f}", str(index), format_point(design))
    return table


def format_point(design: Sequence[float]) -> str:
    return "[" + ", ".join(f"{v:.3f}" for v in design) + "]"


def progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=Console(stderr=True),
        transient=True,
    )


def checks_table(results: Sequence[CheckResult]) -> Table:
    table = Table(title="Self-test", box=box.ROUNDED)
    table.add_column("Check", style="bold")
    table.add_column("Result")
    table.add_column("Detail")
    table.add_column("Time", justify="right")
    for r in results:
        verdict = "[green]pass[/green]" if r.passed else "[red]FAIL[/red]"
        table.add_row(r.name, verdict, r.detail, f"{r.seconds:.1f}s")
    return table
