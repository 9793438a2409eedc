"""Unsupervised training loop, evaluation and checkpoints."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .config import RunConfig, from_dict
from .data import Dataset
from .decoders import Solution, decode
from .errors import ConfigError, TrainingError
from .graph import Graph, GraphBatch
from .losses import problem_loss, resolve_beta
from .model import GconModel

log = logging.getLogger(__name__)

MAXIMIZE = {"mcut": True, "mclique": True, "mds": False}


def better(problem: str, a: float, b: float | None) -> bool:
    if b is None:
        return True
    return a > b if MAXIMIZE[problem] else a < b


@dataclass
class TrainState:
    model: GconModel
    seed: int
    epoch: int = 0  # epochs completed
    best_objective: float | None = None
    best_epoch: int = -1
    history: list[float] = field(default_factory=list)  # mean train loss per epoch
    val_history: list[float] = field(default_factory=list)
    best_arrays: dict[str, np.ndarray] | None = field(default=None, repr=False)

    @property
    def config(self) -> RunConfig:
        return self.model.config

    def use_best(self) -> GconModel:
        """Load the best-validation weights into the model (if any were recorded)."""
        if self.best_arrays is not None:
            self.model.store.load_arrays(self.best_arrays)
        return self.model


def _feature_block(dataset: Dataset, idx: Sequence[int], names) -> np.ndarray:
    return np.vstack([dataset.features(i, names) for i in idx])


def probabilities(model: GconModel, graphs: Sequence[Graph], x: np.ndarray) -> list[np.ndarray]:
    """Eval-mode probabilities for a list of graphs, split per graph."""
    batch = GraphBatch.from_graphs(graphs)
    p = model.forward(batch, x, train=False).value[:, 0]
    return [q.copy() for q in batch.split(p)]


def validation_objective(model: GconModel, dataset: Dataset, split: str = "val") -> float:
    c = model.config
    idx = list(dataset.indices(split))
    graphs = [dataset.graphs[i] for i in idx]
    probs = probabilities(model, graphs, _feature_block(dataset, idx, c.features))
    return float(np.mean([decode(c.problem, p, g, c.decoder_k).objective for p, g in zip(probs, graphs)]))


def _dump_batch(out_dir: Path | None, epoch: int, batch_id: int, idx: Sequence[int], loss: float) -> None:
    if out_dir is None:
        return
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "nan_batch.json").write_text(
        json.dumps({"epoch": epoch, "batch": batch_id, "graphs": list(map(int, idx)), "loss": repr(loss)}, indent=2)
    )


def train_epoch(state: TrainState, dataset: Dataset, out_dir: Path | None = None) -> float:
    model = state.model
    c = model.config
    epoch = state.epoch
    # each epoch owns its generator so a resumed run replays the same shuffles and masks
    rng = np.random.default_rng([state.seed, epoch])
    lr = ad.cosine_lr(epoch, c.epochs, c.warmup, c.lr)
    order = rng.permutation(list(dataset.indices("train")))
    params = model.store.params
    losses = []
    for b, start in enumerate(range(0, len(order), c.batch_size)):
        idx = order[start:start + c.batch_size].tolist()
        batch = GraphBatch.from_graphs([dataset.graphs[i] for i in idx])
        x = _feature_block(dataset, idx, c.features)
        with ad.Tape() as tape:
            p = model.forward(batch, x, train=True, rng=rng)
            loss = problem_loss(c.problem, p, batch, c.beta)
        value = loss.item()
        if not np.isfinite(value):
            _dump_batch(out_dir, epoch, b, idx, value)
            raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {b} (graphs {idx})")
        grads = tape.gradients(loss, params)
        ad.adam_step(model.store, grads, lr, (c.adam_beta1, c.adam_beta2), c.adam_eps)
        losses.append(value)
    state.epoch += 1
    return float(np.mean(losses))


def train(
    config: RunConfig,
    dataset: Dataset,
    out_dir: str | Path | None = None,
    state: TrainState | None = None,
    stop_after: int | None = None,
    validate: bool = True,
) -> TrainState:
    """Train (or resume) a model.  ``stop_after`` ends the run early after that
    many total epochs, which is how interrupted runs are simulated.

    The returned state holds the last weights; ``state.use_best()`` switches to
    the best-validation ones.
    """
    config.validate()
    if config.dataset and config.dataset != dataset.name:
        raise ConfigError(f"config expects dataset {config.dataset!r}, got {dataset.name!r}")
    out = Path(out_dir) if out_dir is not None else None
    if config.beta is None:
        config = config.replace(beta=resolve_beta(config.problem, None, dataset.split("train")))
        log.info("%s beta resolved to %.4f", config.problem, config.beta)
    if state is None:
        in_dim = _feature_block(dataset, [0], config.features).shape[1]
        state = TrainState(GconModel(config, in_dim, seed=config.seed), seed=config.seed)
    last = config.epochs if stop_after is None else min(stop_after, config.epochs)
    while state.epoch < last:
        t0 = time.perf_counter()
        loss = train_epoch(state, dataset, out)
        state.history.append(loss)
        msg = f"epoch {state.epoch}/{config.epochs} loss {loss:.5f}"
        if validate and dataset.sizes.get("val", 0) > 0:
            obj = validation_objective(state.model, dataset)
            state.val_history.append(obj)
            if better(config.problem, obj, state.best_objective):
                state.best_objective, state.best_epoch = obj, state.epoch
                state.best_arrays = {k: v.copy() for k, v in state.model.store.state_arrays().items()}
                if out is not None:
                    save_checkpoint(out / "best.npz", state)
            msg += f" val {obj:.3f}"
        log.info("%s (%.1fs)", msg, time.perf_counter() - t0)
    if out is not None:
        save_checkpoint(out / "last.npz", state)
        config.save(out / "config.json")
        (out / "history.json").write_text(json.dumps({"loss": state.history, "val": state.val_history}) + "\n")
    return state


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, state: TrainState) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {
        "config": state.config.to_dict(),
        "config_hash": state.config.hash(),
        "in_dim": state.model.in_dim,
        "seed": state.seed,
        "epoch": state.epoch,
        "best_objective": state.best_objective,
        "best_epoch": state.best_epoch,
        "history": state.history,
        "val_history": state.val_history,
    }
    arrays = dict(state.model.store.state_arrays())
    if state.best_arrays is not None:
        arrays.update({f"best/{k}": v for k, v in state.best_arrays.items()})
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str | Path) -> TrainState:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint at {path}")
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    config = from_dict(meta["config"])
    if config.hash() != meta["config_hash"]:
        raise ConfigError(f"{path}: stored config does not match its hash")
    model = GconModel(config, meta["in_dim"], seed=meta["seed"])
    model.store.load_arrays({k: v for k, v in arrays.items() if not k.startswith("best/")})
    best = {k[5:]: v for k, v in arrays.items() if k.startswith("best/")} or None
    return TrainState(
        model, meta["seed"], meta["epoch"], meta["best_objective"], meta["best_epoch"],
        list(meta["history"]), list(meta["val_history"]), best,
    )


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class GraphResult:
    graph: int
    n: int
    objective: int
    valid: bool
    forward_ms: float
    decode_ms: float

    @property
    def time_ms(self) -> float:
        return self.forward_ms + self.decode_ms


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (0 for a single value)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values")
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def evaluate(
    model: GconModel,
    dataset: Dataset,
    problem: str | None = None,
    split: str = "test",
    K: int | None = None,
) -> list[GraphResult]:
    """Decode every graph of ``split`` one at a time (batch size 1) and time it."""
    c = model.config
    problem = problem or c.problem
    if problem != c.problem:
        raise ConfigError(f"model was trained for {c.problem!r}, asked to evaluate {problem!r}")
    if c.dataset and c.dataset != dataset.name:
        raise ConfigError(f"model was trained on {c.dataset!r}, dataset is {dataset.name!r}")
    K = c.decoder_k if K is None else K
    out = []
    for i in dataset.indices(split):
        g = dataset.graphs[i]
        x = dataset.features(i, c.features)
        t0 = time.perf_counter()
        p = model.forward(GraphBatch.from_graphs([g]), x, train=False).value[:, 0]
        t1 = time.perf_counter()
        sol: Solution = decode(problem, p, g, K)
        t2 = time.perf_counter()
        out.append(GraphResult(i, g.n, sol.objective, sol.valid, (t1 - t0) * 1e3, (t2 - t1) * 1e3))
    return out
