"""Generated datasets: presets, train/val/test splits, on-disk layout and a
per-graph feature cache."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, GraphError
from .graph import (
    FeatureMatrix,
    Graph,
    RBParams,
    extract_features,
    generate_ba,
    generate_rb,
    read_edgelist,
    write_edgelist,
    write_manifest,
)

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")

# split sizes are the defaults for the preset's full count; other counts keep the ratios
DATASET_PRESETS: dict[str, dict[str, Any]] = {
    "ba-small": dict(generator="ba", n_range=[200, 300], m=4, splits=[1000, 100, 500]),
    "ba-large": dict(generator="ba", n_range=[800, 1200], m=4, splits=[1000, 100, 500]),
    "ba-mini": dict(generator="ba", n_range=[60, 100], m=4, splits=[80, 20, 20]),
    "rb-small": dict(generator="rb", blocks=[20, 25], block_size=[5, 12], p=[0.3, 1.0], splits=[1000, 100, 500]),
    "rb-large": dict(generator="rb", blocks=[40, 55], block_size=[20, 25], p=[0.3, 1.0], splits=[1000, 100, 500]),
    "rb-mini": dict(generator="rb", blocks=[6, 10], block_size=[4, 8], p=[0.3, 1.0], splits=[80, 20, 20]),
}


def split_sizes(default: Sequence[int], count: int | None) -> list[int]:
    """Scale the default split sizes to ``count`` graphs; train takes the remainder."""
    if count is None:
        return list(default)
    if count < 3:
        raise ConfigError("a dataset needs at least 3 graphs (one per split)")
    total = sum(default)
    val = max(1, round(count * default[1] / total))
    test = max(1, round(count * default[2] / total))
    return [count - val - test, val, test]


def _draw(params: dict, rng: np.random.Generator) -> tuple[str, dict]:
    """Sample one graph's generator arguments from the preset's ranges."""
    if params["generator"] == "ba":
        lo, hi = params["n_range"]
        return "ba", {"n": int(rng.integers(lo, hi + 1)), "m": int(params["m"])}
    if params["generator"] == "rb":
        nb = int(rng.integers(params["blocks"][0], params["blocks"][1] + 1))
        k = int(rng.integers(params["block_size"][0], params["block_size"][1] + 1))
        p = float(rng.uniform(*params["p"]))
        return "rb", {"num_blocks": nb, "block_size": k, "p": p}
    raise ConfigError(f"unknown generator {params['generator']!r}")


def _build(kind: str, args: dict, seed: int) -> Graph:
    if kind == "ba":
        return generate_ba(args["n"], args["m"], seed)
    return generate_rb(RBParams(**args), seed)


@dataclass
class Dataset:
    name: str
    params: dict
    seed: int
    graphs: list[Graph]
    sizes: dict[str, int]
    _features: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if sum(self.sizes.values()) != len(self.graphs):
            raise ConfigError(f"split sizes {self.sizes} do not cover {len(self.graphs)} graphs")

    @classmethod
    def generate(cls, preset: str, count: int | None = None, seed: int = 0, **overrides) -> "Dataset":
        if preset not in DATASET_PRESETS:
            raise ConfigError(f"unknown dataset preset {preset!r}; available: {', '.join(sorted(DATASET_PRESETS))}")
        params = {**DATASET_PRESETS[preset], **overrides}
        sizes = split_sizes(params["splits"], count)
        params["splits"] = sizes
        rng = np.random.default_rng(seed)
        graphs = []
        for _ in range(sum(sizes)):
            kind, args = _draw(params, rng)
            graphs.append(_build(kind, args, int(rng.integers(2**31))))
        log.info("generated %s: %d graphs (seed %d)", preset, len(graphs), seed)
        return cls(preset, params, seed, graphs, dict(zip(SPLITS, sizes)))

    def indices(self, split: str) -> range:
        if split not in self.sizes:
            raise ConfigError(f"unknown split {split!r}")
        start = 0
        for s in SPLITS:
            if s == split:
                return range(start, start + self.sizes[s])
            start += self.sizes[s]
        raise AssertionError

    def split(self, split: str) -> list[Graph]:
        return [self.graphs[i] for i in self.indices(split)]

    def features(self, i: int, names: Sequence[str]) -> np.ndarray:
        key = (i, tuple(names))
        if key not in self._features:
            self._features[key] = np.asarray(extract_features(self.graphs[i], names))
        return self._features[key]

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "generator": self.params["generator"],
            "params": self.params,
            "seed": self.seed,
            "splits": self.sizes,
            "files": [f"g{i:05d}.txt" for i in range(len(self.graphs))],
        }

    def save(self, directory: str | Path, force: bool = False) -> Path:
        d = Path(directory)
        if d.exists() and any(d.iterdir()) and not force:
            raise FileExistsError(f"{d} exists and is not empty; pass --force to overwrite")
        d.mkdir(parents=True, exist_ok=True)
        man = self.manifest()
        for g, fname in zip(self.graphs, man["files"]):
            write_edgelist(g, d / fname)
        write_manifest(d / "manifest.json", man)
        return d

    @classmethod
    def load(cls, directory: str | Path) -> "Dataset":
        d = Path(directory)
        mpath = d / "manifest.json"
        if not mpath.exists():
            raise FileNotFoundError(f"no dataset at {d} (missing manifest.json)")
        man = json.loads(mpath.read_text())
        graphs = [read_edgelist(d / f) for f in man["files"]]
        return cls(man["name"], man["params"], int(man["seed"]), graphs, dict(man["splits"]))


def features_for(graphs: Sequence[Graph], names: Sequence[str]) -> list[FeatureMatrix]:
    return [extract_features(g, names) for g in graphs]


def load_or_generate(source: str, seed: int = 0, count: int | None = None) -> Dataset:
    """``source`` is either a dataset directory or a preset name."""
    if Path(source).is_dir():
        return Dataset.load(source)
    if source in DATASET_PRESETS:
        return Dataset.generate(source, count=count, seed=seed)
    raise GraphError(f"dataset {source!r} is neither a directory nor a preset")
