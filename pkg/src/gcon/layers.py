"""Hybrid filter-bank layer with localized attention, plus the GCN baseline layer."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .errors import ConfigError, ShapeError
from .filters import Aggregation, DiffusionCache, FilterBank, apply_filter
from .graph import GraphBatch

MODES = ("decoupled", "non-decoupled")
NORMALIZATIONS = ("none", "l2", "gsn")


class Linear:
    def __init__(self, store: ParameterStore, name: str, fan_in: int, fan_out: int, rng: np.random.Generator, bias: bool = True):
        self.W = store.add(f"{name}.W", ad.uniform_init(rng, fan_in, (fan_in, fan_out)))
        self.b = store.add(f"{name}.b", ad.uniform_init(rng, fan_in, (1, fan_out))) if bias else None
        self.fan_in = fan_in
        self.fan_out = fan_out

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.fan_in:
            raise ShapeError(f"linear layer expects width {self.fan_in}, got {x.shape[1]}")
        out = ad.matmul(x, self.W)
        return ad.add(out, self.b) if self.b is not None else out


class MLP:
    """Stack of Linear + activation blocks of constant width."""

    def __init__(self, store, name, width, depth, act, rng, final_act: bool = True):
        self.linears = [Linear(store, f"{name}.{i}", width, width, rng) for i in range(depth)]
        self.act = ad.activation(act)
        self.final_act = final_act

    def __call__(self, x: Tensor) -> Tensor:
        for i, lin in enumerate(self.linears):
            x = lin(x)
            if self.final_act or i < len(self.linears) - 1:
                x = self.act(x)
        return x


class Dense:
    """Linear map followed by an activation: the learnable filter transform m."""

    def __init__(self, store, name, width, act, rng):
        self.lin = Linear(store, name, width, width, rng)
        self.act = ad.activation(act)

    def __call__(self, x: Tensor) -> Tensor:
        return self.act(self.lin(x))


def normalize_features(x: Tensor, kind: str, batch: GraphBatch) -> Tensor:
    if kind == "none":
        return x
    if kind == "l2":
        return ad.l2_normalize_rows(x)
    if kind == "gsn":
        return ad.mul(x, 1.0 / batch.node_graph_size)
    raise ConfigError(f"unknown normalization {kind!r}")


class HybridLayer:
    """One filter-bank layer.

    decoupled: H = m(X), H_f = m_f(filter_f(X)), raw scores
    s_f = sigma([H | H_f] a_group) with a separate attention vector for the
    aggregation and the comparison group, softmax within each group per node,
    output MLP(X + H_FA + H_FC) (or MLP(H_FA + H_FC) without inner skip).

    non-decoupled: m is only the activation, scores use [X | H_f] with one
    attention vector, one softmax over the whole bank, output MLP(H_F).
    """

    def __init__(
        self,
        store: ParameterStore,
        name: str,
        width: int,
        rng: np.random.Generator,
        bank: FilterBank | None = None,
        mode: str = "decoupled",
        normalization: str = "none",
        inner_skip: bool = True,
        hybrid_act: str = "elu",
        mlp_act: str = "lrelu:0.3",
        score_slope: float = 0.2,
        mlp_depth: int = 1,
        learned_filters: bool | None = None,
    ):
        if mode not in MODES:
            raise ConfigError(f"unknown layer mode {mode!r}")
        if normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {normalization!r}")
        self.bank = bank or FilterBank()
        if mode == "decoupled" and (not self.bank.aggregations or not self.bank.comparisons):
            raise ConfigError("decoupled attention needs both aggregation and comparison filters")
        self.width = width
        self.mode = mode
        self.normalization = normalization
        self.inner_skip = inner_skip
        self.score_slope = score_slope
        self.act = ad.activation(hybrid_act)
        d = width
        # by default only the decoupled layer learns m; the non-decoupled one applies the bare activation
        self.learned_filters = mode == "decoupled" if learned_filters is None else learned_filters
        if self.learned_filters:
            self.m_h = Dense(store, f"{name}.m_h", d, hybrid_act, rng)
            self.m_f = [Dense(store, f"{name}.m_{f.label}", d, hybrid_act, rng) for f in self.bank.filters]
        else:
            self.m_h = None
            self.m_f = [self.act] * len(self.bank.filters)
        if mode == "decoupled":
            self.a_agg = store.add(f"{name}.a_agg", ad.uniform_init(rng, 2 * d, (2 * d, 1)))
            self.a_cmp = store.add(f"{name}.a_cmp", ad.uniform_init(rng, 2 * d, (2 * d, 1)))
        else:
            self.a = store.add(f"{name}.a", ad.uniform_init(rng, 2 * d, (2 * d, 1)))
        self.mlp = MLP(store, f"{name}.mlp", d, mlp_depth, mlp_act, rng)

    def attention_vector(self, f) -> Tensor:
        if self.mode == "non-decoupled":
            return self.a
        return self.a_agg if isinstance(f, Aggregation) else self.a_cmp

    def responses(self, x: Tensor, batch: GraphBatch) -> list[Tensor]:
        cache = DiffusionCache(batch.P, x)
        return [apply_filter(f, x, batch.P, m, cache) for f, m in zip(self.bank.filters, self.m_f)]

    def attention_scores(self, x_prev: Tensor, responses: Sequence[Tensor]) -> list[Tensor]:
        """Raw per-node score column for every filter."""
        if len(responses) != len(self.bank.filters):
            raise ShapeError(f"expected {len(self.bank.filters)} responses, got {len(responses)}")
        for r in responses:
            if r.shape != x_prev.shape:
                raise ShapeError(f"response shape {r.shape} vs input {x_prev.shape}")
        H = self.m_h(x_prev) if self.m_h is not None else x_prev
        out = []
        for f, Hf in zip(self.bank.filters, responses):
            z = ad.matmul(ad.concat([H, Hf], axis=1), self.attention_vector(f))
            out.append(ad.leaky_relu(z, self.score_slope))
        return out

    def groups(self) -> list[list[int]]:
        nA = len(self.bank.aggregations)
        nF = len(self.bank.filters)
        if self.mode == "decoupled":
            return [list(range(nA)), list(range(nA, nF))]
        return [list(range(nF))]

    def normalize_scores(self, raw: Sequence[Tensor]) -> list[Tensor]:
        """Per-node softmax within each group (two groups when decoupled, one otherwise)."""
        out: list[Tensor | None] = [None] * len(raw)
        for grp in self.groups():
            if not grp:
                raise ConfigError("empty attention group")
            s = ad.softmax(ad.concat([raw[i] for i in grp], axis=1), axis=1)
            for j, i in enumerate(grp):
                out[i] = ad.columns(s, j, j + 1)
        return out

    def combine(self, scores: Sequence[Tensor], responses: Sequence[Tensor], idx: Sequence[int]) -> Tensor:
        terms = [ad.mul(scores[i], responses[i]) for i in idx]
        acc = terms[0]
        for t in terms[1:]:
            acc = ad.add(acc, t)
        return acc

    def forward(self, x_prev: Tensor, batch: GraphBatch) -> Tensor:
        if x_prev.shape[1] != self.width:
            raise ShapeError(f"layer width {self.width}, input width {x_prev.shape[1]}")
        resp = self.responses(x_prev, batch)
        scores = self.normalize_scores(self.attention_scores(x_prev, resp))
        if self.mode == "decoupled":
            ga, gc = self.groups()
            h = ad.add(self.combine(scores, resp, ga), self.combine(scores, resp, gc))
            if self.inner_skip:
                h = ad.add(x_prev, h)
        else:
            h = self.combine(scores, resp, self.groups()[0])
        return normalize_features(self.mlp(h), self.normalization, batch)

    __call__ = forward


class GCNLayer:
    """Single one-step aggregation: act(W P x + b); no attention, no band-pass."""

    def __init__(self, store, name, width, rng, act: str = "elu", normalization: str = "none"):
        self.lin = Linear(store, f"{name}.lin", width, width, rng)
        self.act = ad.activation(act)
        self.width = width
        self.normalization = normalization

    def forward(self, x_prev: Tensor, batch: GraphBatch) -> Tensor:
        if x_prev.shape[1] != self.width:
            raise ShapeError(f"layer width {self.width}, input width {x_prev.shape[1]}")
        return normalize_features(self.act(self.lin(ad.spmm(batch.P, x_prev))), self.normalization, batch)

    __call__ = forward


def gcn_baseline_forward(layer: GCNLayer, x_prev: Tensor, batch: GraphBatch) -> Tensor:
    return layer.forward(x_prev, batch)
