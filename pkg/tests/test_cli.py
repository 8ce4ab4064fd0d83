import csv
import json

import pytest

from partial_al.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from partial_al.config import (
    OVERLAP_DC,
    SUBSET_DC,
    ConfigError,
    ExperimentGrid,
    load_config,
    parse_config,
    write_config,
)
from partial_al.coverage import Mode
from partial_al.runner import RANKS_HEADER, SUMMARY_HEADER, read_summary, run_grid, trial_seed

TINY = {
    "modes": ["subset"],
    "dc_settings": [[0.2, 0.6]],
    "param_settings": [[0.1, 1.3]],
    "J_values": [6],
    "budgets": [2],
    "delta_t_values": [5.0],
    "trials": 1,
    "cycles": 3,
}


def write_json(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


class TestConfig:
    def test_subset_defaults(self, tmp_path):
        grid = load_config(write_json(tmp_path / "g.json", {"modes": ["Subset"]}))
        assert grid.modes == [Mode.SUBSET]
        assert grid.dc_for(Mode.SUBSET) == list(SUBSET_DC)
        assert len(SUBSET_DC) == 13
        assert {(c.c1, c.c2) for c in grid.cells()} == set(SUBSET_DC)

    def test_paper_table_defaults(self):
        grid = ExperimentGrid()
        assert grid.param_settings == [(0.1, 1.3), (0.5, 0.5), (0.25, 2.0)]
        assert grid.J_values == [50, 100]
        assert grid.budgets == [5.0, 10.0, 25.0]
        assert grid.delta_t_values == [2.5, 5.0]
        assert grid.trials == 100
        assert len(OVERLAP_DC) == 12

    def test_overlap_validation(self):
        parse_config(json.dumps({"modes": ["overlap"], "dc_settings": [[0.3, 0.8]]}))
        with pytest.raises(ConfigError, match="c1 \\+ c2"):
            parse_config(json.dumps({"modes": ["overlap"], "dc_settings": [[0.1, 0.5]]}))

    def test_problems_listed_together(self):
        text = json.dumps({"modes": ["overlap"], "dc_settings": [[0.1, 0.5], [0.2, 0.3]], "J_values": [0]})
        with pytest.raises(ConfigError) as exc:
            parse_config(text)
        msg = str(exc.value)
        assert "(0.1, 0.5)" in msg and "(0.2, 0.3)" in msg and "J_values" in msg

    def test_parse_error_location(self):
        with pytest.raises(ConfigError, match=r"g\.json:2:"):
            parse_config('{"trials": 3,\n  oops}', "g.json")

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="trails"):
            parse_config('{"trails": 3}')

    def test_roundtrip(self, tmp_path):
        grid = parse_config(json.dumps({**TINY, "afs": ["ours", "random"], "costs": {"proof": 2.5}}))
        write_config(grid, tmp_path / "out.json")
        assert load_config(tmp_path / "out.json") == grid

    def test_grid_size(self):
        grid = ExperimentGrid(modes=["overlap", "subset"], trials=3)
        n_cells = (12 + 13) * 3 * 2 * 3 * 2
        assert len(grid.cells()) == n_cells
        assert grid.size() == n_cells * 5 * 3

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")


class TestRunner:
    def test_one_trace_file(self, tmp_path):
        grid = ExperimentGrid(**{**TINY, "afs": ["random"]})
        assert run_grid(grid, tmp_path, threads=1) == 0
        traces = list(tmp_path.rglob("trace_*.csv"))
        assert len(traces) == 1

    def test_summary_rows_and_headers(self, tmp_path):
        grid = ExperimentGrid(**{**TINY, "budgets": [1, 2], "trials": 2, "afs": ["random", "oldest", "fim"]})
        run_grid(grid, tmp_path, threads=1)
        rows = read_summary(tmp_path / "summary.csv")
        assert len(rows) == 2 * 3 * 2
        with open(tmp_path / "summary.csv", newline="") as fh:
            assert tuple(next(csv.reader(fh))) == SUMMARY_HEADER
        with open(tmp_path / "ranks.csv", newline="") as fh:
            ranks = list(csv.reader(fh))
        assert tuple(ranks[0]) == RANKS_HEADER
        assert len(ranks) == 1 + 2 * 3
        pct = next(tmp_path.rglob("test_pct.csv")).read_text().splitlines()
        assert pct[0] == "cycle,pct_partial1,pct_partial2,pct_proof"
        assert len(pct) == 1 + grid.cycles

    def test_byte_identical_rerun(self, tmp_path):
        grid = ExperimentGrid(**{**TINY, "trials": 2})
        run_grid(grid, tmp_path / "a", threads=1)
        run_grid(grid, tmp_path / "b", threads=1)
        files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
        files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*.csv"))
        assert files_a == files_b
        for rel in files_a:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()
            assert b"\r" not in (tmp_path / "a" / rel).read_bytes()

    def test_parallel_matches_serial(self, tmp_path):
        grid = ExperimentGrid(**{**TINY, "budgets": [1, 2], "afs": ["random", "entropy"]})
        run_grid(grid, tmp_path / "s", threads=1)
        run_grid(grid, tmp_path / "p", threads=2)
        assert (tmp_path / "s" / "summary.csv").read_bytes() == (tmp_path / "p" / "summary.csv").read_bytes()

    def test_seed_independent_of_af(self):
        assert trial_seed(0, 3, 7) == trial_seed(0, 3, 7)
        assert trial_seed(0, 3, 7) != trial_seed(0, 3, 8)
        assert trial_seed(0, 3, 7) != trial_seed(1, 3, 7)

    def test_summary_roundtrip(self, tmp_path):
        grid = ExperimentGrid(**TINY)
        run_grid(grid, tmp_path, threads=1)
        rows = read_summary(tmp_path / "summary.csv")
        from partial_al.runner import summary_csv

        assert summary_csv(rows) == (tmp_path / "summary.csv").read_text()

    def test_cell_failure_is_counted(self, tmp_path, monkeypatch):
        import partial_al.runner as runner

        def boom(*a, **k):
            raise RuntimeError("injected")

        monkeypatch.setattr(runner, "run_experiment", boom)
        grid = ExperimentGrid(**TINY)
        assert run_grid(grid, tmp_path, threads=1) == 1
        assert (tmp_path / "summary.csv").read_text().strip() == ",".join(SUMMARY_HEADER)


class TestCommandLine:
    def test_run_and_rank(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "g.json", TINY)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out", str(out), "--threads", "1", "--af", "random", "fim"]) == EXIT_OK
        assert main(["rank", str(out / "summary.csv")]) == EXIT_OK
        printed = capsys.readouterr().out
        assert printed.splitlines()[0] == ",".join(RANKS_HEADER)

    def test_config_error_exit(self, tmp_path):
        cfg = write_json(tmp_path / "bad.json", {"modes": ["overlap"], "dc_settings": [[0.1, 0.5]]})
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
        assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
        assert main(["run", "--config", str(write_json(tmp_path / "g.json", TINY)), "--af", "nonsense"]) == EXIT_CONFIG

    def test_runtime_failure_exit(self, tmp_path, monkeypatch):
        import partial_al.runner as runner

        monkeypatch.setattr(runner, "run_experiment", lambda *a, **k: 1 / 0)
        cfg = write_json(tmp_path / "g.json", TINY)
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1"]) == EXIT_RUNTIME

    def test_threads_env_override(self, tmp_path, monkeypatch):
        from partial_al.runner import resolve_threads

        monkeypatch.setenv("PARTIAL_AL_THREADS", "3")
        assert resolve_threads(8) == 3
        monkeypatch.delenv("PARTIAL_AL_THREADS")
        assert resolve_threads(2) == 2

    def test_simulate_prints_trace(self, tmp_path, capsys):
        cfg = write_json(tmp_path / "g.json", TINY)
        code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s"), "--af", "entropy", "--seed", "4"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert out.count("cycle=") == 3
        assert len(list((tmp_path / "s").glob("*_trace.csv"))) == 1

    def test_simulate_bad_cell(self, tmp_path):
        cfg = write_json(tmp_path / "g.json", TINY)
        assert main(["simulate", "--config", str(cfg), "--cell", "5", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_charts(self, tmp_path):
        cfg = write_json(tmp_path / "g.json", TINY)
        main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--threads", "1", "--af", "random", "--charts"])
        svg = next((tmp_path / "o").rglob("*.svg")).read_text()
        assert svg.lstrip().startswith("<?xml") and "<svg" in svg
