"""Run configuration and per-task presets."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import ConfigError

PROBLEMS = ("mcut", "mclique", "mds")
LAYER_TYPES = ("gcon", "gcn")
SKIPS = ("skipsum", "stack-concat")
OUTPUTS = ("sigmoid", "minmax")


@dataclass
class RunConfig:
    problem: str = "mcut"
    dataset: str = ""
    seed: int = 0
    features: tuple[str, ...] = ("degree", "eccentricity", "clustering", "triangles")
    # architecture
    layer_type: str = "gcon"
    mode: str = "decoupled"
    pre_layers: int = 1
    layers: int = 16
    post_layers: int = 1
    width: int = 32
    normalization: str = "none"
    hybrid_act: str = "elu"
    mlp_act: str = "lrelu:0.3"
    skip: str = "stack-concat"
    inner_skip: bool = True
    batch_norm: bool = True
    dropout: float = 0.3
    output: str = "sigmoid"
    score_slope: float = 0.2
    mlp_depth: int = 1
    learned_filters: bool | None = None  # None: learned m only in decoupled mode
    bank_aggregations: tuple[int, ...] = (1, 2, 3)
    bank_comparisons: tuple[tuple[int, int], ...] = ((1, 2), (2, 4), (4, 8))
    # optimization
    lr: float = 1e-3
    epochs: int = 200
    warmup: int = 5
    batch_size: int = 256
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # task
    beta: float | None = None  # None: 1 for mclique, calibrated for mds
    decoder_k: int = 1

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.problem in PROBLEMS, f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        need(self.layer_type in LAYER_TYPES, f"layer_type must be one of {LAYER_TYPES}")
        need(self.mode in ("decoupled", "non-decoupled"), f"unknown mode {self.mode!r}")
        need(self.normalization in ("none", "l2", "gsn"), f"unknown normalization {self.normalization!r}")
        need(self.skip in SKIPS, f"skip must be one of {SKIPS}")
        need(self.output in OUTPUTS, f"output must be one of {OUTPUTS}")
        need(self.pre_layers >= 1 and self.layers >= 1 and self.post_layers >= 1, "layer counts must be >= 1")
        need(self.width >= 1, "width must be >= 1")
        need(0.0 <= self.dropout < 1.0, "dropout must lie in [0, 1)")
        need(self.lr >= 0, "learning rate must be nonnegative")
        need(self.epochs >= 1 and 0 <= self.warmup < self.epochs, "need 0 <= warmup < epochs")
        need(self.batch_size >= 1, "batch_size must be >= 1")
        need(self.beta is None or self.beta >= 0, "beta must be nonnegative")
        need(self.decoder_k >= 1, "decoder_k must be >= 1")
        for act in (self.hybrid_act, self.mlp_act):
            from .autodiff import activation

            try:
                activation(act)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        return self

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["features"] = list(self.features)
        d["bank_aggregations"] = list(self.bank_aggregations)
        d["bank_comparisons"] = [list(p) for p in self.bank_comparisons]
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **kw) -> "RunConfig":
        return from_dict({**self.to_dict(), **kw})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value: Any) -> Any:
    default = _FIELDS[name].default
    if name == "bank_comparisons":
        return tuple((int(a), int(b)) for a, b in value)
    if isinstance(default, tuple):
        return tuple(value)
    if isinstance(default, bool) or name == "learned_filters":
        if value is None:
            return None
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{name}: cannot parse {value!r} as a boolean")
        return bool(value)
    if isinstance(default, int):
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float) or name == "beta":
        return None if value is None else float(value)
    return value


def from_dict(d: dict[str, Any]) -> RunConfig:
    unknown = sorted(set(d) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    return RunConfig(**{k: _coerce(k, v) for k, v in d.items()}).validate()


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    key = key.strip()
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    if isinstance(_FIELDS[key].default, tuple) and isinstance(value, str):
        value = [v for v in value.split(",") if v]
    return key, value


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    d = cfg.to_dict()
    for ov in overrides:
        k, v = parse_override(ov)
        d[k] = v
    return from_dict(d)


_BA_FEATURES = ("degree", "eccentricity", "clustering", "triangles")
_RB_FEATURES = ("degree", "clustering", "triangles")

PRESETS: dict[str, dict[str, Any]] = {
    "mcut-ba-small": dict(
        problem="mcut", features=_BA_FEATURES, pre_layers=1, layers=16, post_layers=1, width=32,
        normalization="none", hybrid_act="elu", mlp_act="lrelu:0.3", skip="stack-concat",
        inner_skip=True, lr=1e-3, epochs=200, batch_size=256, decoder_k=1,
    ),
    "mcut-ba-large": dict(
        problem="mcut", features=_BA_FEATURES, pre_layers=4, layers=16, post_layers=1, width=32,
        normalization="l2", hybrid_act="elu", mlp_act="lrelu:0.3", skip="skipsum",
        inner_skip=True, lr=3e-3, epochs=400, batch_size=256, decoder_k=1,
    ),
    "mclique-rb-small": dict(
        problem="mclique", features=_RB_FEATURES, pre_layers=1, layers=20, post_layers=2, width=32,
        normalization="gsn", hybrid_act="gelu", mlp_act="lrelu:0.01", skip="stack-concat",
        inner_skip=True, lr=1e-3, epochs=100, batch_size=8, decoder_k=10,
    ),
    "mclique-rb-large": dict(
        problem="mclique", features=_RB_FEATURES, pre_layers=1, layers=20, post_layers=2, width=32,
        normalization="gsn", hybrid_act="gelu", mlp_act="lrelu:0.01", skip="stack-concat",
        inner_skip=True, lr=1e-3, epochs=100, batch_size=8, decoder_k=10,
    ),
    "mds-ba-small": dict(
        problem="mds", features=_BA_FEATURES, pre_layers=1, layers=16, post_layers=1, width=256,
        normalization="l2", hybrid_act="gelu", mlp_act="lrelu:0.3", skip="stack-concat",
        inner_skip=False, lr=3e-3, epochs=200, batch_size=256, decoder_k=1,
    ),
    "mds-ba-large": dict(
        problem="mds", features=_BA_FEATURES, pre_layers=1, layers=16, post_layers=1, width=256,
        normalization="l2", hybrid_act="gelu", mlp_act="gelu", skip="skipsum",
        inner_skip=False, lr=3e-3, epochs=200, batch_size=256, decoder_k=1,
    ),
}

# Desk-scale variants: same recipe, fewer layers/epochs so a CPU run takes minutes.
PRESETS["mcut-ba-mini"] = {**PRESETS["mcut-ba-small"], "layers": 8, "epochs": 60, "batch_size": 16, "lr": 3e-3}
PRESETS["mclique-rb-mini"] = {**PRESETS["mclique-rb-small"], "layers": 6, "epochs": 40}
PRESETS["mds-ba-mini"] = {**PRESETS["mds-ba-small"], "layers": 6, "width": 32, "epochs": 60, "batch_size": 16}

PRESET_DATASETS = {
    "mcut-ba-small": "ba-small",
    "mcut-ba-large": "ba-large",
    "mclique-rb-small": "rb-small",
    "mclique-rb-large": "rb-large",
    "mds-ba-small": "ba-small",
    "mds-ba-large": "ba-large",
    "mcut-ba-mini": "ba-mini",
    "mclique-rb-mini": "rb-mini",
    "mds-ba-mini": "ba-mini",
}


def preset(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return from_dict({**PRESETS[name], **overrides})


def load_config(path: str | Path) -> RunConfig:
    return from_dict(json.loads(Path(path).read_text()))
