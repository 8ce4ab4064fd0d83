"""Command-line entry point: ``partial-al {run,simulate,rank}``.

Exit codes: 0 on success, 1 for configuration errors, 2 when at least one
grid cell (or the single simulated cell) fails at runtime.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .acquisition import normalize_af
from .config import ConfigError, ExperimentGrid, load_config
from .metrics import average_ranks
from .runner import (
    aggregate,
    ranks_csv,
    read_summary,
    run_grid,
    summarize,
    trial_seed,
    write_chart,
)
from .simulator import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("partial_al")


def _grid_from_args(args) -> ExperimentGrid:
    grid = load_config(args.config) if args.config else ExperimentGrid()
    updates = {}
    if args.seed is not None:
        updates["base_seed"] = args.seed
    if getattr(args, "af", None):
        updates["afs"] = args.af
    if updates:
        try:
            grid = ExperimentGrid.model_validate({**grid.model_dump(), **updates})
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return grid


def cmd_run(args) -> int:
    grid = _grid_from_args(args)
    n_cells = len(grid.cells())
    log.info("running %d cells x %d AFs x %d trials into %s", n_cells, len(grid.afs), grid.trials, args.out)
    failed = run_grid(grid, args.out, threads=args.threads, charts=args.charts)
    if failed:
        log.error("%d of %d cells failed", failed, n_cells)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_simulate(args) -> int:
    grid = _grid_from_args(args)
    cells = grid.cells()
    if not 0 <= args.cell < len(cells):
        raise ConfigError(f"--cell {args.cell} out of range (grid has {len(cells)} cells)")
    cell = cells[args.cell]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = trial_seed(grid.base_seed, cell.index, args.trial)
    print(f"# {cell.cell_id} trial={args.trial} seed={seed}")
    for af in grid.afs:
        trace = run_experiment(cell.world(grid, seed), af)
        stem = f"{cell.cell_id}_{af}_t{args.trial:03d}"
        (out / f"{stem}_trace.csv").write_text(trace.trace_csv(), encoding="utf-8", newline="")
        (out / f"{stem}_selections.csv").write_text(trace.selection_csv(), encoding="utf-8", newline="")
        if args.charts:
            write_chart(trace, out / f"{stem}_trace.svg")
        print(f"## af={af}")
        for c in trace.cycles:
            tests = ",".join(f"{sid}:{t.label}:{y}" for sid, t, y, _ in c.selections)
            print(
                f"cycle={c.cycle:3d} alpha_hat={c.estimate.alpha:.6g} k_hat={c.estimate.k:.6g} "
                f"ateer={c.ateer:.6g} mse={c.mse:.6g} n={c.dataset_size} tests=[{tests}]"
            )
        s = summarize(trace)
        print(f"auc_ateer={s['auc_ateer']:.6g} auc_mse={s['auc_mse']:.6g}")
    return EXIT_OK


def cmd_rank(args) -> int:
    rows = []
    for path in args.summaries:
        try:
            rows += read_summary(path)
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"{path}: cannot read summary ({exc})") from None
    if args.af:
        keep = {normalize_af(a) for a in args.af}
        rows = [r for r in rows if r["af"] in keep]
    text = ranks_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
    agg = aggregate(rows)
    for metric, table in agg.items():
        mean_ranks = average_ranks(table)
        ordered = sorted(mean_ranks.items(), key=lambda kv: kv[1])
        print(f"# mean rank {metric}: " + ", ".join(f"{af}={r:.3f}" for af, r in ordered), file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partial-al",
        description="Active learning of reliability-model parameters under partial-coverage diagnostic tests.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", help="JSON experiment grid (all fields optional)")
        p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed", type=int, help="override base_seed")
        p.add_argument("--af", nargs="+", help="restrict to these acquisition functions")
        p.add_argument("--charts", action="store_true", help="also write SVG learning-curve charts")

    run = sub.add_parser("run", help="run the full experiment grid")
    common(run, "results")
    run.add_argument("--threads", type=int, help="worker processes (env PARTIAL_AL_THREADS overrides)")
    run.set_defaults(func=cmd_run)

    sim = sub.add_parser("simulate", help="run one grid cell and print a per-cycle trace")
    common(sim, "simulate_out")
    sim.add_argument("--cell", type=int, default=0, help="cell index in grid order")
    sim.add_argument("--trial", type=int, default=0, help="trial index (selects the seed)")
    sim.set_defaults(func=cmd_simulate)

    rank = sub.add_parser("rank", help="aggregate summary.csv files into a rank table")
    rank.add_argument("summaries", nargs="+", help="summary.csv files")
    rank.add_argument("--out", help="write ranks CSV here instead of stdout")
    rank.add_argument("--af", nargs="+", help="restrict to these acquisition functions")
    rank.set_defaults(func=cmd_rank)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        log.exception("runtime failure")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
