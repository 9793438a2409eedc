"""Full network: pre-layers, stacked hybrid layers with an outer skip strategy,
post-layers and a sigmoid output giving per-node membership probabilities."""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .config import RunConfig
from .errors import ConfigError, ShapeError
from .filters import FilterBank
from .graph import FeatureMatrix, Graph, GraphBatch
from .layers import GCNLayer, HybridLayer, Linear

log = logging.getLogger(__name__)


def assemble_skip(strategy: str, outputs: Sequence[Tensor]) -> Tensor:
    """Combine layer outputs before the post-layers.

    For ``skipsum`` the residual sums were already applied layer by layer, so
    the last output is returned; ``stack-concat`` concatenates all of them.
    """
    if not outputs:
        raise ShapeError("no layer outputs to assemble")
    if strategy == "skipsum":
        return outputs[-1]
    if strategy == "stack-concat":
        return outputs[0] if len(outputs) == 1 else ad.concat(list(outputs), axis=1)
    raise ConfigError(f"unknown skip strategy {strategy!r}")


def skipsum(prev: Tensor, out: Tensor) -> Tensor:
    if prev.shape != out.shape:
        raise ShapeError(f"skipsum width mismatch {prev.shape} vs {out.shape}")
    return ad.add(prev, out)


def _segment_minmax(logits: Tensor, batch: GraphBatch) -> Tensor:
    """Per-graph rescale of logits to [0, 1]."""
    v = logits.value[:, 0]
    lo_idx = np.empty(batch.num_graphs, dtype=np.int64)
    hi_idx = np.empty(batch.num_graphs, dtype=np.int64)
    for g in range(batch.num_graphs):
        a, b = batch.offsets[g], batch.offsets[g + 1]
        lo_idx[g] = a + int(np.argmin(v[a:b]))
        hi_idx[g] = a + int(np.argmax(v[a:b]))
    node_lo = lo_idx[batch.graph_of_node]
    node_hi = hi_idx[batch.graph_of_node]
    gather_lo = _gather_rows(logits, node_lo)
    gather_hi = _gather_rows(logits, node_hi)
    span = ad.add_scalar(ad.sub(gather_hi, gather_lo), 1e-12)
    return ad.mul(ad.sub(logits, gather_lo), _reciprocal(span))


def _gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    shape = x.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return ad._record(x.value[idx], (x,), back)


def _reciprocal(x: Tensor) -> Tensor:
    r = 1.0 / x.value
    return ad._record(r, (x,), lambda g: (-g * r * r,))


class GconModel:
    def __init__(self, config: RunConfig, in_dim: int, seed: int | None = None):
        self.config = config
        self.in_dim = in_dim
        rng = np.random.default_rng(config.seed if seed is None else seed)
        self.store = ParameterStore()
        c = config
        d = c.width
        self.mlp_act = ad.activation(c.mlp_act)
        self.pre = [Linear(self.store, "pre.0", in_dim, d, rng)]
        self.pre += [Linear(self.store, f"pre.{i}", d, d, rng) for i in range(1, c.pre_layers)]
        self.input_bn = self._bn("input_bn", in_dim) if c.batch_norm else None
        self.pre_bn = [self._bn(f"pre_bn.{i}", d) for i in range(c.pre_layers)] if c.batch_norm else []
        bank = FilterBank.from_config(c.bank_aggregations, c.bank_comparisons)
        self.layers = []
        for i in range(c.layers):
            if c.layer_type == "gcn":
                layer = GCNLayer(self.store, f"gnn.{i}", d, rng, act=c.hybrid_act, normalization=c.normalization)
            else:
                layer = HybridLayer(
                    self.store, f"gnn.{i}", d, rng, bank=bank, mode=c.mode, normalization=c.normalization,
                    inner_skip=c.inner_skip, hybrid_act=c.hybrid_act, mlp_act=c.mlp_act,
                    score_slope=c.score_slope, mlp_depth=c.mlp_depth, learned_filters=c.learned_filters,
                )
            self.layers.append(layer)
        self.layer_bn = [self._bn(f"gnn_bn.{i}", d) for i in range(c.layers)] if c.batch_norm else []
        head_in = d * c.layers if c.skip == "stack-concat" else d
        self.post = []
        for i in range(c.post_layers - 1):
            self.post.append(Linear(self.store, f"post.{i}", head_in if i == 0 else d, d, rng))
        self.head = Linear(self.store, "head", head_in if c.post_layers == 1 else d, 1, rng)
        log.info("model %s/%s: %d parameters", c.layer_type, c.mode, self.store.num_parameters())

    def _bn(self, name: str, width: int):
        gamma = self.store.add(f"{name}.gamma", np.ones((1, width)))
        beta = self.store.add(f"{name}.beta", np.zeros((1, width)))
        return gamma, beta, self.store.add_buffer(name, width)

    @property
    def num_parameters(self) -> int:
        return self.store.num_parameters()

    def logits(self, batch: GraphBatch, x, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        c = self.config
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
        if x.shape != (batch.num_nodes, self.in_dim):
            raise ShapeError(f"features {x.shape}, expected ({batch.num_nodes}, {self.in_dim})")
        h = x
        if self.input_bn is not None:
            h = ad.batch_norm(h, *self.input_bn, train=train)
        for i, lin in enumerate(self.pre):
            h = lin(h)
            if self.pre_bn:
                h = ad.batch_norm(h, *self.pre_bn[i], train=train)
            h = self.mlp_act(h)
        outputs = []
        for i, layer in enumerate(self.layers):
            z = layer(h, batch)
            if self.layer_bn:
                z = ad.batch_norm(z, *self.layer_bn[i], train=train)
            z = ad.dropout(z, c.dropout, rng, train)
            if c.skip == "skipsum":
                z = skipsum(h, z)
            outputs.append(z)
            h = z
        h = assemble_skip(c.skip, outputs)
        for lin in self.post:
            h = self.mlp_act(lin(h))
        return self.head(h)

    def forward(self, batch: GraphBatch, x, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        z = self.logits(batch, x, train=train, rng=rng)
        if self.config.output == "minmax":
            z = _segment_minmax(z, batch)
        return ad.sigmoid(z)

    __call__ = forward

    def predict(self, graph: Graph, features) -> np.ndarray:
        """Eval-mode probabilities for a single graph, as a flat array."""
        x = features.values if isinstance(features, FeatureMatrix) else np.asarray(features)
        return self.forward(GraphBatch.from_graphs([graph]), x, train=False).value[:, 0].copy()
