"""Experiment harness shared by the CLI and the acceptance suite."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import exact_solve, greedy, mfa
from .config import RunConfig
from .data import Dataset
from .report import Row, run_rows
from .training import evaluate, train

log = logging.getLogger(__name__)

BASELINES = ("greedy", "mfa", "exact")

# non-decoupled keeps the learned filter transform so the variant differs from
# the full layer only in how attention is normalised
ABLATION_VARIANTS: dict[str, dict] = {
    "gcon-decoupled": {"layer_type": "gcon", "mode": "decoupled"},
    "gcon-non-decoupled": {"layer_type": "gcon", "mode": "non-decoupled", "learned_filters": True},
    "gcn": {"layer_type": "gcn"},
}


@dataclass(frozen=True)
class BaselineResult:
    graph: int
    n: int
    objective: int
    valid: bool
    time_ms: float


def run_baseline(method: str, dataset: Dataset, problem: str, split: str = "test", seed: int = 0) -> list[BaselineResult]:
    if method not in BASELINES:
        raise ValueError(f"unknown baseline {method!r}; choose from {BASELINES}")
    out = []
    for i in dataset.indices(split):
        g = dataset.graphs[i]
        t0 = time.perf_counter()
        if method == "greedy":
            sol = greedy(g, problem, seed=seed + i)
        elif method == "mfa":
            sol = mfa(g, problem, seed=seed + i)
        else:
            sol = exact_solve(g, problem)
        out.append(BaselineResult(i, g.n, sol.objective, sol.valid, (time.perf_counter() - t0) * 1e3))
    return out


def train_and_evaluate(config: RunConfig, dataset: Dataset, out_dir: Path | None = None, split: str = "test"):
    state = train(config, dataset, out_dir=out_dir)
    model = state.use_best()
    return state, evaluate(model, dataset, split=split)


def ablation(base: RunConfig, dataset: Dataset, seeds: Sequence[int], out_dir: Path | None = None) -> list[Row]:
    """Train every variant on the same data with the same seeds; aggregate rows per (variant, seed)."""
    rows: list[Row] = []
    for seed in seeds:
        for name, overrides in ABLATION_VARIANTS.items():
            cfg = base.replace(seed=seed, **overrides)
            log.info("ablation variant %s seed %d", name, seed)
            sub = out_dir / name / f"seed{seed}" if out_dir is not None else None
            _, results = train_and_evaluate(cfg, dataset, sub)
            rows.extend(r for r in run_rows(dataset.name, cfg.problem, name, seed, results) if r.graph == "ALL")
    return rows


def ordering_holds(rows: Sequence[Row], order: Sequence[str], maximize: bool = True) -> dict[str, bool]:
    """Per seed: does the mean objective follow ``order`` (best first, ties allowed)?"""
    by_seed: dict[str, dict[str, float]] = {}
    for r in rows:
        by_seed.setdefault(r.seed, {})[r.method] = r.mean_objective
    sign = 1.0 if maximize else -1.0
    return {
        s: all(sign * (m[a] - m[b]) >= 0 for a, b in zip(order, order[1:]))
        for s, m in by_seed.items()
    }


def mean_objective(results) -> float:
    return float(np.mean([r.objective for r in results]))
