from types import SimpleNamespace as NS

import pytest

from gcon.report import AGGREGATE, COLUMNS, across_seeds, graph_counts, read_csv, render_table, run_rows, write_csv


def results(objs, t=2.0):
    return [NS(graph=i, objective=o, time_ms=t) for i, o in enumerate(objs)]


def test_run_rows_and_round_trip(tmp_path):
    rows = run_rows("ba-mini", "mcut", "greedy", 0, results([3, 5]))
    assert len(rows) == 3 and rows[-1].graph == AGGREGATE
    assert rows[-1].mean_objective == 4.0 and rows[-1].std == pytest.approx(2 ** 0.5)
    path = write_csv(tmp_path / "r.csv", rows)
    assert path.read_text().splitlines()[0] == ",".join(COLUMNS)
    assert read_csv(path) == rows


def test_read_rejects_unknown_columns(tmp_path):
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(tmp_path / "bad.csv")


def test_across_seeds_and_table():
    rows = run_rows("d", "mcut", "a", 0, results([1, 3])) + run_rows("d", "mcut", "a", 1, results([3, 5]))
    rows += run_rows("d", "mcut", "b", 0, results([2, 2], t=60_000.0))
    summary = {r.method: r for r in across_seeds(rows)}
    assert summary["a"].mean_objective == 3.0 and summary["a"].seed == "0+1"
    assert summary["b"].std == 0.0
    assert graph_counts(rows) == {("mcut", "d"): 2}
    table = render_table(rows, graph_counts(rows)).splitlines()
    assert table[0].split() == ["method", "mcut", "d", "time", "mcut", "d"]
    assert table[2].startswith("a") and "3.00 ± 1.41" in table[2]
    assert table[3].endswith("2:00")
