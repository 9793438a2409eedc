"""Report rows, CSV files and the plain-text results table."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

COLUMNS = ("dataset", "problem", "method", "seed", "graph", "mean_objective", "std", "mean_time_ms")
AGGREGATE = "ALL"


@dataclass(frozen=True)
class Row:
    """One CSV line.  Per-graph rows carry the graph index and an empty std;
    the aggregate row of a run has graph == "ALL"."""

    dataset: str
    problem: str
    method: str
    seed: str
    graph: str
    mean_objective: float
    std: float | str
    mean_time_ms: float


def sample_std(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(v.std(ddof=1)) if v.size > 1 else 0.0


def run_rows(dataset: str, problem: str, method: str, seed, results: Sequence) -> list[Row]:
    """Per-graph rows plus the aggregate row for one (method, seed) run.

    ``results`` items need ``graph``, ``objective`` and ``time_ms`` attributes.
    """
    rows = [
        Row(dataset, problem, method, str(seed), str(r.graph), float(r.objective), "", float(r.time_ms))
        for r in results
    ]
    objs = [r.objective for r in results]
    times = [r.time_ms for r in results]
    rows.append(Row(dataset, problem, method, str(seed), AGGREGATE, float(np.mean(objs)), sample_std(objs), float(np.mean(times))))
    return rows


def across_seeds(rows: Iterable[Row]) -> list[Row]:
    """Collapse aggregate rows of several seeds into one row per (dataset, problem, method):
    mean of the seed means and sample std across seeds."""
    groups: dict[tuple[str, str, str], list[Row]] = {}
    for r in rows:
        if r.graph == AGGREGATE:
            groups.setdefault((r.dataset, r.problem, r.method), []).append(r)
    out = []
    for (ds, pb, m), rs in groups.items():
        means = [r.mean_objective for r in rs]
        seeds = "+".join(r.seed for r in rs)
        out.append(Row(ds, pb, m, seeds, AGGREGATE, float(np.mean(means)), sample_std(means), float(np.mean([r.mean_time_ms for r in rs]))))
    return out


def write_csv(path: str | Path, rows: Iterable[Row]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
    return path


def read_csv(path: str | Path) -> list[Row]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        if tuple(rd.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path}: unexpected columns {rd.fieldnames}")
        return [
            Row(d["dataset"], d["problem"], d["method"], d["seed"], d["graph"], float(d["mean_objective"]),
                float(d["std"]) if d["std"] else "", float(d["mean_time_ms"]))
            for d in rd
        ]


def _clock(ms: float) -> str:
    s = int(round(ms / 1000.0))
    return f"{s // 60}:{s % 60:02d}"


def render_table(rows: Iterable[Row], count: dict | None = None) -> str:
    """Methods as rows, one objective/time column pair per (problem, dataset).

    Time is the per-graph mean multiplied by the number of test graphs, shown as m:ss.
    """
    summary = across_seeds(rows)
    cols = sorted({(r.problem, r.dataset) for r in summary})
    methods = list(dict.fromkeys(r.method for r in summary))
    cell = {(r.method, r.problem, r.dataset): r for r in summary}
    count = count or {}
    head = ["method"] + [f"{p} {d}" for p, d in cols] + [f"time {p} {d}" for p, d in cols]
    body = []
    for m in methods:
        line = [m]
        for p, d in cols:
            r = cell.get((m, p, d))
            line.append(f"{r.mean_objective:.2f} ± {float(r.std or 0):.2f}" if r else "-")
        for p, d in cols:
            r = cell.get((m, p, d))
            line.append(_clock(r.mean_time_ms * count.get((p, d), 1)) if r else "-")
        body.append(line)
    widths = [max(len(str(x)) for x in col) for col in zip(head, *body)]

    def fmt(cells):
        return "  ".join(str(c).ljust(w) for c, w in zip(cells, widths)).rstrip()

    lines = [fmt(head), fmt(["-" * w for w in widths])] + [fmt(b) for b in body]
    return "\n".join(lines) + "\n"


def graph_counts(rows: Iterable[Row]) -> dict[tuple[str, str], int]:
    """Number of distinct graphs per (problem, dataset) among per-graph rows."""
    seen: dict[tuple[str, str], set] = {}
    for r in rows:
        if r.graph != AGGREGATE:
            seen.setdefault((r.problem, r.dataset), set()).add(r.graph)
    return {k: len(v) for k, v in seen.items()}
