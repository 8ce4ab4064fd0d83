"""Grid orchestration: seeded trials per cell, result CSVs, rank aggregation.

Output layout under ``out_dir``::

    summary.csv                      one row per cell x AF x trial
    ranks.csv                        per-cell mean AUCs and ranks
    <cell_id>/<af>/trace_t###.csv    per-cycle estimates and errors
    <cell_id>/<af>/selections_t###.csv
    <cell_id>/<af>/test_pct.csv      share of each test per cycle, over trials
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import Cell, ExperimentGrid
from .dataset import fmt
from .metrics import LearningCurve, auc, rank_table
from .simulator import TEST_PCT_HEADER, RunTrace, run_experiment

log = logging.getLogger(__name__)

SUMMARY_HEADER = (
    "config_id", "af", "trial", "seed", "auc_ateer", "auc_mse",
    "auc_se_alpha", "auc_se_k", "alpha_hat", "k_hat",
)  # fmt: skip
RANKS_HEADER = ("config_id", "af", "auc_ateer", "auc_mse", "rank_ateer", "rank_mse")
THREADS_ENV = "PARTIAL_AL_THREADS"


def trial_seed(base_seed: int, cell_index: int, trial: int) -> int:
    """World seed for one trial; independent of the AF so AFs share random numbers."""
    state = np.random.SeedSequence(base_seed, spawn_key=(cell_index, trial)).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def resolve_threads(requested: int | None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    if requested:
        return max(1, requested)
    return os.cpu_count() or 1


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def _curve_auc(values) -> float:
    if len(values) < 2:
        return math.nan
    return auc(LearningCurve.from_values(values))


def summarize(trace: RunTrace) -> dict[str, float]:
    last = trace.cycles[-1].estimate if trace.cycles else None
    return {
        "auc_ateer": _curve_auc(trace.curve("ateer")),
        "auc_mse": _curve_auc(trace.curve("mse")),
        "auc_se_alpha": _curve_auc(trace.curve("se_alpha")),
        "auc_se_k": _curve_auc(trace.curve("se_k")),
        "alpha_hat": last.alpha if last else math.nan,
        "k_hat": last.k if last else math.nan,
    }


def test_pct_csv(counts: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TEST_PCT_HEADER)
    totals = counts.sum(axis=1, keepdims=True)
    pct = np.divide(100.0 * counts, totals, out=np.zeros(counts.shape), where=totals > 0)
    for n, row in enumerate(pct, start=1):
        w.writerow([n, *map(fmt, row)])
    return buf.getvalue()


def write_chart(trace: RunTrace, path: Path) -> None:
    """Two-panel SVG of the ATEER and MSE learning curves."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cycles = [c.cycle for c in trace.cycles]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for ax, name in zip(axes, ("ateer", "mse")):
        ax.plot(cycles, trace.curve(name))
        ax.set_yscale("log")
        ax.set_xlabel("maintenance cycle")
        ax.set_ylabel(name.upper())
    fig.suptitle(f"{trace.af}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def run_cell(grid: ExperimentGrid, cell: Cell, out_dir, charts: bool = False) -> list[dict]:
    """All AFs x trials of one cell. Writes per-run files, returns summary rows."""
    out_dir = Path(out_dir)
    rows = []
    for af in grid.afs:
        af_dir = out_dir / cell.cell_id / af
        af_dir.mkdir(parents=True, exist_ok=True)
        counts = np.zeros((grid.cycles, 3), dtype=int)
        for trial in range(grid.trials):
            seed = trial_seed(grid.base_seed, cell.index, trial)
            trace = run_experiment(cell.world(grid, seed), af)
            _write(af_dir / f"trace_t{trial:03d}.csv", trace.trace_csv())
            _write(af_dir / f"selections_t{trial:03d}.csv", trace.selection_csv())
            if charts:
                write_chart(trace, af_dir / f"trace_t{trial:03d}.svg")
            counts += trace.test_counts()
            rows.append({"config_id": cell.cell_id, "af": af, "trial": trial, "seed": seed, **summarize(trace)})
        _write(af_dir / "test_pct.csv", test_pct_csv(counts))
    return rows


def _run_cell_job(args):
    grid_json, cell, out_dir, charts = args
    grid = ExperimentGrid.model_validate_json(grid_json)
    return run_cell(grid, cell, out_dir, charts)


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in rows:
        w.writerow([
            r["config_id"], r["af"], r["trial"], r["seed"],
            *(fmt(r[k]) for k in SUMMARY_HEADER[4:]),
        ])  # fmt: skip
    return buf.getvalue()


def read_summary(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for r in reader:
            row = {"config_id": r["config_id"], "af": r["af"], "trial": int(r["trial"]), "seed": int(r["seed"])}
            row.update({k: float(r[k]) for k in SUMMARY_HEADER[4:]})
            rows.append(row)
    return rows


def aggregate(rows) -> dict[str, dict[str, dict[str, float]]]:
    """Trial-mean AUCs: ``{metric: {config_id: {af: mean}}}``."""
    acc: dict = defaultdict(lambda: defaultdict(lambda: defaultdict(list)))
    for r in rows:
        for metric in ("auc_ateer", "auc_mse"):
            acc[metric][r["config_id"]][r["af"]].append(r[metric])
    return {
        metric: {cfg: {af: float(np.mean(v)) for af, v in afs.items()} for cfg, afs in table.items()}
        for metric, table in acc.items()
    }


def ranks_csv(rows) -> str:
    agg = aggregate(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RANKS_HEADER)
    if not agg:
        return buf.getvalue()
    r_ateer, r_mse = rank_table(agg["auc_ateer"]), rank_table(agg["auc_mse"])
    for cfg, afs in agg["auc_ateer"].items():
        for af in afs:
            w.writerow([
                cfg, af, fmt(afs[af]), fmt(agg["auc_mse"][cfg][af]),
                fmt(r_ateer[cfg][af]), fmt(r_mse[cfg][af]),
            ])  # fmt: skip
    return buf.getvalue()


def run_grid(grid: ExperimentGrid, out_dir, threads: int | None = None, charts: bool = False) -> int:
    """Run every cell; returns the number of cells that failed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = grid.cells()
    threads = min(resolve_threads(threads), len(cells))
    results: dict[int, list[dict]] = {}
    failed = 0
    if threads <= 1:
        for cell in cells:
            try:
                results[cell.index] = run_cell(grid, cell, out_dir, charts)
            except Exception:
                log.exception("cell %s failed", cell.cell_id)
                failed += 1
    else:
        payload = grid.model_dump_json()
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {cell.index: pool.submit(_run_cell_job, (payload, cell, out_dir, charts)) for cell in cells}
            for idx, fut in futures.items():
                try:
                    results[idx] = fut.result()
                except Exception:
                    log.exception("cell %s failed", cells[idx].cell_id)
                    failed += 1
    rows = [r for idx in sorted(results) for r in results[idx]]
    _write(out_dir / "summary.csv", summary_csv(rows))
    _write(out_dir / "ranks.csv", ranks_csv(rows))
    return failed
