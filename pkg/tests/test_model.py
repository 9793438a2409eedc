import numpy as np
import pytest

from conftest import cycle, numeric_grad, rel_error
from gcon import autodiff as ad
from gcon.autodiff import Tape, Tensor
from gcon.config import RunConfig, preset
from gcon.errors import ConfigError, ShapeError
from gcon.graph import GraphBatch, extract_features, generate_ba
from gcon.model import GconModel, assemble_skip, skipsum

FEATS = ("degree", "clustering", "triangles")


def small_config(**kw):
    base = dict(problem="mcut", features=FEATS, layers=2, width=6, epochs=10)
    return RunConfig(**{**base, **kw}).validate()


def inputs(g):
    return GraphBatch.from_graphs([g]), extract_features(g, FEATS).values


def test_zero_head_gives_half():
    g = generate_ba(20, 2, 0)
    m = GconModel(small_config(), 3, seed=1)
    m.head.W.value[:] = 0.0
    m.head.b.value[:] = 0.0
    assert np.allclose(m.forward(*inputs(g)).value, 0.5)


def test_seeded_model_is_reproducible():
    g = generate_ba(20, 2, 0)
    a = GconModel(small_config(), 3, seed=4).forward(*inputs(g)).value
    b = GconModel(small_config(), 3, seed=4).forward(*inputs(g)).value
    assert np.array_equal(a, b)
    assert a.min() > 0 and a.max() < 1


def test_assemble_skip():
    t = Tensor(np.ones((4, 3)))
    for s in ("skipsum", "stack-concat"):
        assert assemble_skip(s, [t]) is t
    parts = [Tensor(np.full((4, 32), i)) for i in range(3)]
    assert assemble_skip("stack-concat", parts).shape == (4, 96)
    with pytest.raises(ShapeError):
        assemble_skip("skipsum", [])
    with pytest.raises(ConfigError):
        assemble_skip("ladder", [t])
    # a layer that contributes nothing leaves the residual stream untouched
    assert np.array_equal(skipsum(t, Tensor(np.zeros((4, 3)))).value, t.value)


def test_stack_concat_head_width():
    m = GconModel(small_config(layers=3, width=32, skip="stack-concat"), 3)
    assert m.head.W.shape == (96, 1)
    m = GconModel(small_config(layers=3, width=32, skip="skipsum"), 3)
    assert m.head.W.shape == (32, 1)


@pytest.mark.parametrize("name", ["mcut-ba-small", "mclique-rb-small", "mds-ba-small", "mcut-ba-large"])
def test_full_presets_build_and_run(name):
    c = preset(name)
    g = generate_ba(15, 3, 0)
    x = extract_features(g, c.features).values
    m = GconModel(c, x.shape[1])
    p = m.forward(GraphBatch.from_graphs([g]), x).value
    assert p.shape == (15, 1) and np.all(np.isfinite(p))


def test_minmax_output_spans_unit_interval_per_graph():
    gs = [generate_ba(12, 2, 1), generate_ba(9, 2, 2)]
    b = GraphBatch.from_graphs(gs)
    x = np.vstack([extract_features(g, FEATS).values for g in gs])
    m = GconModel(small_config(output="minmax"), 3)
    p = m.forward(b, x).value[:, 0]
    for q in b.split(p):
        assert np.isclose(q.min(), 0.5) and np.isclose(q.max(), 1 / (1 + np.exp(-1)))


def test_feature_shape_checked():
    m = GconModel(small_config(), 3)
    with pytest.raises(ShapeError):
        m.forward(GraphBatch.from_graphs([cycle(4)]), np.ones((4, 2)))


@pytest.mark.parametrize("layer_type", ["gcon", "gcn"])
def test_model_permutation_equivariance(layer_type, rng):
    g = generate_ba(18, 2, 3)
    perm = rng.permutation(g.n)
    h = g.relabel(perm)
    m = GconModel(small_config(layer_type=layer_type), 3)
    p = m.predict(g, extract_features(g, FEATS))
    q = m.predict(h, extract_features(h, FEATS))
    assert np.allclose(q[perm], p, atol=1e-10)


def test_eval_mode_batch_invariance():
    gs = [generate_ba(n, 2, n) for n in (10, 14, 11)]
    m = GconModel(small_config(), 3)
    x = np.vstack([extract_features(g, FEATS).values for g in gs])
    joint = m.forward(GraphBatch.from_graphs(gs), x).value[:, 0]
    alone = np.concatenate([m.predict(g, extract_features(g, FEATS)) for g in gs])
    assert np.allclose(joint, alone, atol=1e-12)


def test_model_gradient_matches_finite_differences(rng):
    g = generate_ba(9, 2, 5)
    b, x = inputs(g)
    m = GconModel(small_config(hybrid_act="gelu", mlp_act="gelu", dropout=0.0), 3, seed=2)
    w = rng.normal(size=(g.n, 1))

    def f():
        # train-mode batch norm exercises the batch statistics path too
        return ad.sum_(ad.mul(m.forward(b, x, train=True), Tensor(w)))

    with Tape() as tape:
        out = f()
    params = m.store.params
    grads = tape.gradients(out, params)
    for name in ("pre.0.W", "gnn.0.a_agg", "gnn.1.a_cmp", "head.W", "input_bn.gamma"):
        num = numeric_grad(lambda: f().item(), params[name].value, h=1e-5)
        assert rel_error(grads[name], num) < 1e-4, name
