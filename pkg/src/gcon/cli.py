"""Command-line entry point: gen, train, eval, baseline, ablate, theory, report."""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import bench, theory
from .config import PRESET_DATASETS, RunConfig, apply_overrides, load_config, preset
from .data import DATASET_PRESETS, Dataset, load_or_generate
from .errors import BudgetError, ConfigError, GconError
from .graph import generate_ba
from .report import across_seeds, graph_counts, read_csv, render_table, run_rows, write_csv
from .training import evaluate, load_checkpoint

log = logging.getLogger("gcon")

OUT_ENV = "GCON_OUT"


def out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def parse_seeds(args) -> list[int]:
    if args.seeds:
        try:
            return [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--seeds must be a comma-separated list of integers, got {args.seeds!r}") from None
    return [args.seed]


def prepare_out(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise FileExistsError(f"{path} exists and is not empty; pass --force to overwrite")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset)
        if not cfg.dataset:
            cfg = cfg.replace(dataset=PRESET_DATASETS[args.preset])
    else:
        raise ConfigError("pass --config or --preset")
    return apply_overrides(cfg, args.override or [])


def load_data(source: str | None, cfg: RunConfig | None, seed: int) -> Dataset:
    source = source or (cfg.dataset if cfg is not None else None)
    if not source:
        raise ConfigError("no dataset given (use --data)")
    return load_or_generate(source, seed=seed)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    out = Path(args.out) if args.out else out_root() / "datasets" / f"{args.preset}-s{args.seed}"
    if out.exists() and any(out.iterdir()) and not args.force:
        raise FileExistsError(f"{out} exists and is not empty; pass --force to overwrite")
    ds = Dataset.generate(args.preset, count=args.count, seed=args.seed)
    ds.save(out, force=True)
    print(f"wrote {len(ds.graphs)} graphs to {out} (splits {ds.sizes})")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    data = load_data(args.data, cfg, args.data_seed)
    out = prepare_out(Path(args.out) if args.out else out_root() / "train" / f"{cfg.problem}-{data.name}", args.force)
    cfg.save(out / "config.json")
    rows = []
    for seed in parse_seeds(args):
        run_cfg = cfg.replace(seed=seed)
        state, results = bench.train_and_evaluate(run_cfg, data, out / f"seed{seed}")
        rows += run_rows(data.name, cfg.problem, "gcon" if cfg.layer_type == "gcon" else cfg.layer_type, seed, results)
        print(f"seed {seed}: best val {state.best_objective:.3f} at epoch {state.best_epoch}")
    write_csv(out / "report.csv", rows)
    print(render_table(rows, graph_counts(rows)), end="")
    return 0


def cmd_eval(args) -> int:
    rows = []
    data = None
    for ckpt in args.checkpoint:
        state = load_checkpoint(ckpt)
        model = state.use_best() if not args.last else state.model
        data = data or load_data(args.data, model.config, args.data_seed)
        results = evaluate(model, data, split=args.split)
        rows += run_rows(data.name, model.config.problem, args.method, state.seed, results)
    out = Path(args.out) if args.out else out_root() / "eval"
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "report.csv", rows)
    print(render_table(rows, graph_counts(rows)), end="")
    return 0


def cmd_baseline(args) -> int:
    data = load_data(args.data, None, args.data_seed)
    out = prepare_out(Path(args.out) if args.out else out_root() / "baseline" / f"{args.problem}-{data.name}", args.force)
    rows = []
    for method in args.method:
        for seed in parse_seeds(args):
            results = bench.run_baseline(method, data, args.problem, split=args.split, seed=seed)
            rows += run_rows(data.name, args.problem, method, seed, results)
            if method == "exact":
                break  # deterministic
    write_csv(out / "report.csv", rows)
    print(render_table(rows, graph_counts(rows)), end="")
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    data = load_data(args.data, cfg, args.data_seed)
    out = prepare_out(Path(args.out) if args.out else out_root() / "ablate" / f"{cfg.problem}-{data.name}", args.force)
    cfg.save(out / "config.json")
    seeds = parse_seeds(args)
    log.info("ablation seeds %s shared by all variants", seeds)
    rows = bench.ablation(cfg, data, seeds, out)
    write_csv(out / "ablation_seeds.csv", rows)
    summary = across_seeds(rows)
    write_csv(out / "ablation.csv", summary)
    print(render_table(rows), end="")
    return 0


def cmd_theory(args) -> int:
    out = prepare_out(Path(args.out) if args.out else out_root() / "theory", args.force)
    scales = [int(k) for k in args.scales.split(",")]
    rng = np.random.default_rng(args.seed)
    lo, hi = DATASET_PRESETS["ba-mini"]["n_range"]
    reports = []
    decreasing = total = 0
    stationary_ok = 0
    for gi in range(args.graphs):
        g = generate_ba(int(rng.integers(lo, hi + 1)), 4, int(rng.integers(2**31)))
        x = rng.uniform(0.1, 1.0, size=g.n)
        rs = theory.trend(g, x, args.c, scales, graph_id=f"g{gi}")
        reports += rs
        first = [r for r in rs if r.K == scales[0]]
        last = [r for r in rs if r.K == scales[-1]]
        decreasing += sum(b.ratio < a.ratio for a, b in zip(first, last))
        total += len(first)
        stationary_ok += theory.stationary_distance(g, x, 64) < theory.stationary_distance(g, x, 8)
    theory.write_reports(out / "theory.csv", reports)
    print(f"ratio(K={scales[-1]}) < ratio(K={scales[0]}) at {decreasing}/{total} nodes")
    print(f"stationary distance shrinks from K=8 to K=64 on {stationary_ok}/{args.graphs} graphs")
    return 0


def cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        rows += read_csv(path)
    print(render_table(rows, graph_counts(rows)), end="")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcon", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=False, seeds=True, data=True):
        sp.add_argument("--out", help=f"output directory (default under ${OUT_ENV} or ./runs)")
        sp.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        sp.add_argument("--seed", type=int, default=0)
        if seeds:
            sp.add_argument("--seeds", help="comma-separated seed list (overrides --seed)")
        if data:
            sp.add_argument("--data", help="dataset directory or dataset preset name")
            sp.add_argument("--data-seed", type=int, default=0, help="seed when --data names a preset")
        if config:
            sp.add_argument("--config", help="RunConfig JSON file")
            sp.add_argument("--preset", help="named run preset")
            sp.add_argument("--override", action="append", metavar="KEY=VALUE")

    sp = sub.add_parser("gen", help="generate a dataset")
    sp.add_argument("--preset", required=True, choices=sorted(DATASET_PRESETS))
    sp.add_argument("--count", type=int)
    common(sp, seeds=False, data=False)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("train", help="train and evaluate on the test split")
    common(sp, config=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate checkpoints")
    sp.add_argument("--checkpoint", nargs="+", required=True)
    sp.add_argument("--split", default="test")
    sp.add_argument("--method", default="gcon")
    sp.add_argument("--last", action="store_true", help="use the final rather than the best weights")
    common(sp, seeds=False)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("baseline", help="run greedy / mfa / exact baselines")
    sp.add_argument("--problem", required=True, choices=["mcut", "mclique", "mds"])
    sp.add_argument("--method", nargs="+", default=["greedy"], choices=list(bench.BASELINES))
    sp.add_argument("--split", default="test")
    common(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("ablate", help="decoupled vs non-decoupled vs GCN")
    common(sp, config=True)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("theory", help="dominance ratio and stationary-limit checks")
    sp.add_argument("--graphs", type=int, default=20)
    sp.add_argument("--c", type=float, default=2.0)
    sp.add_argument("--scales", default=",".join(map(str, theory.SCALES)))
    common(sp, seeds=False, data=False)
    sp.set_defaults(func=cmd_theory)

    sp = sub.add_parser("report", help="render report CSVs as a table")
    sp.add_argument("inputs", nargs="+")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GconError, FileExistsError, FileNotFoundError) as exc:
        kind = "budget exceeded" if isinstance(exc, BudgetError) else "error"
        print(f"gcon: {kind}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
