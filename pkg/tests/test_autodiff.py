import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from conftest import numeric_grad, rel_error
from gcon import autodiff as ad
from gcon.autodiff import BatchNormState, ParameterStore, Tape, Tensor
from gcon.errors import ContractError, ShapeError


def grad_of(fn, *values):
    ts = [Tensor(v, requires_grad=True) for v in values]
    with Tape() as tape:
        out = fn(*ts)
    return out, tape.gradients(out, ts)


def test_sigmoid_and_softmax_values():
    out, g = grad_of(lambda x: ad.sum_(ad.sigmoid(x)), np.zeros((1, 1)))
    assert out.item() == 0.5 and g[0].item() == 0.25
    s = ad.softmax(Tensor(np.full((1, 3), 7.0)), axis=1).value
    assert np.allclose(s, 1 / 3)


def test_square_derivative():
    _, g = grad_of(lambda x: ad.sum_(ad.mul(x, x)), np.array([[3.0]]))
    assert g[0].item() == 6.0


def test_linear_map_gradient():
    x = np.array([[1.0, 2.0]])
    _, g = grad_of(lambda W: ad.sum_(ad.matmul(Tensor(x), W)), np.zeros((2, 3)))
    assert np.array_equal(g[0], np.repeat(x.T, 3, axis=1))


def test_backward_needs_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        y = ad.scale(x, 2.0)
    with pytest.raises(ContractError):
        tape.backward(y)


def test_unreached_parameters_get_zero_gradient():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((3, 1)), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_(a)
    g = tape.gradients(loss, {"a": a, "b": b})
    assert np.array_equal(g["b"], np.zeros((3, 1)))


def test_shape_errors():
    with pytest.raises(ShapeError):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


UNARY = {
    "sigmoid": ad.sigmoid,
    "elu": ad.elu,
    "gelu": ad.gelu,
    "lrelu": lambda x: ad.leaky_relu(x, 0.3),
    "exp": ad.exp,
    "softmax0": lambda x: ad.softmax(x, axis=0),
    "softmax1": lambda x: ad.softmax(x, axis=1),
    "l2rows": ad.l2_normalize_rows,
    "abs": ad.abs_,
    "mean": lambda x: ad.mean(x, axis=0),
    "l1": ad.l1_norm,
    "clamp": lambda x: ad.clamp(x, -0.5, 0.5),
    "log": lambda x: ad.log(ad.add_scalar(ad.mul(x, x), 1.0)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
@given(seed=st.integers(0, 2**31))
def test_unary_ops_match_finite_differences(name, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 3))
    # keep away from kinks where the one-sided slopes differ
    x[np.abs(x) < 1e-2] = 0.1
    x[np.abs(np.abs(x) - 0.5) < 1e-2] = 0.3
    w = rng.normal(size=UNARY[name](Tensor(x)).shape)
    fn = lambda t: ad.sum_(ad.mul(UNARY[name](t), Tensor(w)))
    _, g = grad_of(fn, x)
    num = numeric_grad(lambda: fn(Tensor(x)).item(), x)
    assert rel_error(g[0], num) < 1e-4


@given(seed=st.integers(0, 2**31))
def test_binary_ops_and_sparse_product(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(5, 3)), rng.normal(size=(1, 3))
    W = rng.normal(size=(3, 2))
    M = sp.random(5, 5, density=0.4, random_state=int(rng.integers(2**31)), format="csr")

    def fn(ta, tb, tW):
        h = ad.mul(ad.sub(ta, tb), ad.add(ta, tb))
        h = ad.concat([ad.spmm(M, h), ad.columns(h, 0, 2)], axis=1)
        z = ad.matmul(ad.columns(h, 1, 4), tW)
        return ad.sum_(ad.mul(z, z))

    _, g = grad_of(fn, a, b, W)
    for i, arr in enumerate((a, b, W)):
        num = numeric_grad(lambda: fn(Tensor(a), Tensor(b), Tensor(W)).item(), arr)
        assert rel_error(g[i], num) < 1e-4


def test_batch_norm_train_gradient_and_eval_is_affine(rng):
    x = rng.normal(size=(6, 3))
    gamma, beta = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    w = rng.normal(size=(6, 3))

    def fn(tx, tg, tb):
        st = BatchNormState(np.zeros((1, 3)), np.ones((1, 3)))
        return ad.sum_(ad.mul(ad.batch_norm(tx, tg, tb, st, train=True), Tensor(w)))

    _, g = grad_of(fn, x, gamma, beta)
    for i, arr in enumerate((x, gamma, beta)):
        num = numeric_grad(lambda: fn(Tensor(x), Tensor(gamma), Tensor(beta)).item(), arr)
        assert rel_error(g[i], num) < 1e-4

    st = BatchNormState(rng.normal(size=(1, 3)), rng.random((1, 3)) + 0.5)
    y1 = ad.batch_norm(Tensor(x), Tensor(gamma), Tensor(beta), st, train=False).value
    y2 = ad.batch_norm(Tensor(x[:2]), Tensor(gamma), Tensor(beta), st, train=False).value
    assert np.array_equal(y1[:2], y2)  # no batch statistics in eval mode
    scale = gamma / np.sqrt(st.running_var + 1e-5)
    assert np.allclose(y1, x * scale + (beta - st.running_mean * scale))


def test_batch_norm_updates_running_stats(rng):
    st = BatchNormState(np.zeros((1, 2)), np.ones((1, 2)))
    x = rng.normal(3.0, 2.0, size=(50, 2))
    ad.batch_norm(Tensor(x), Tensor(np.ones((1, 2))), Tensor(np.zeros((1, 2))), st, train=True)
    assert np.all(st.running_mean > 0) and not np.allclose(st.running_var, 1.0)


def test_dropout_masks_gradient(rng):
    x = Tensor(np.ones((200, 4)), requires_grad=True)
    with Tape() as tape:
        y = ad.dropout(x, 0.3, np.random.default_rng(0), train=True)
        loss = ad.sum_(y)
    g = tape.gradients(loss, [x])[0]
    dropped = y.value == 0
    assert 0.2 < dropped.mean() < 0.4
    assert np.all(g[dropped] == 0)
    assert np.allclose(g[~dropped], 1 / 0.7)
    assert ad.dropout(x, 0.3, None, train=False) is x


def test_adam_step_examples():
    store = ParameterStore()
    p = store.add("w", np.array([[1.0, -2.0]]))
    ad.adam_step(store, {"w": np.zeros((1, 2))}, lr=0.1)
    assert np.array_equal(p.value, [[1.0, -2.0]]) and store.step == 1

    store = ParameterStore()
    p = store.add("w", np.zeros((1, 3)))
    ad.adam_step(store, {"w": np.array([[2.0, -0.5, 1e-3]])}, lr=0.01, eps=1e-12)
    assert np.allclose(p.value, [[-0.01, 0.01, -0.01]], rtol=1e-6)


def test_adam_matches_reference_over_steps(rng):
    store = ParameterStore()
    p = store.add("w", rng.normal(size=(2, 2)))
    ref = p.value.copy()
    m = np.zeros_like(ref)
    v = np.zeros_like(ref)
    for t in range(1, 6):
        g = rng.normal(size=(2, 2))
        ad.adam_step(store, {"w": g}, lr=0.05)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert np.allclose(p.value, ref, rtol=1e-12)


def test_cosine_lr_schedule():
    assert ad.cosine_lr(0, 25, 5, 1.0) == pytest.approx(0.2)
    assert ad.cosine_lr(4, 25, 5, 1.0) == pytest.approx(1.0)
    assert ad.cosine_lr(15, 25, 5, 1.0) == pytest.approx(0.5)
    assert ad.cosine_lr(24, 25, 5, 1.0) < 0.01
    with pytest.raises(ValueError):
        ad.cosine_lr(0, 5, 5, 1.0)
    with pytest.raises(ValueError):
        ad.cosine_lr(5, 5, 0, 1.0)


def test_activation_names():
    x = Tensor(np.array([[-1.0, 2.0]]))
    assert np.allclose(ad.activation("lrelu:0.3")(x).value, [[-0.3, 2.0]])
    assert ad.activation("identity")(x) is x
    with pytest.raises(ValueError):
        ad.activation("swish")


def test_parameter_store_round_trip(rng):
    store = ParameterStore()
    store.add("a", rng.normal(size=(2, 3)))
    store.add_buffer("bn", 3)
    ad.adam_step(store, {"a": np.ones((2, 3))}, lr=0.1)
    arrays = {k: v.copy() for k, v in store.state_arrays().items()}
    other = ParameterStore()
    other.add("a", np.zeros((2, 3)))
    other.add_buffer("bn", 3)
    other.load_arrays(arrays)
    assert np.array_equal(other.params["a"].value, store.params["a"].value)
    assert other.step == 1 and np.array_equal(other.m["a"], store.m["a"])
    assert math.isclose(store.num_parameters(), 6)


def test_tape_replay_is_deterministic(rng):
    x = rng.normal(size=(8, 3))

    def run():
        store = ParameterStore()
        W = store.add("W", ad.uniform_init(np.random.default_rng(0), 3, (3, 1)))
        losses = []
        for step in range(10):
            with Tape() as tape:
                y = ad.dropout(ad.elu(ad.matmul(Tensor(x), W)), 0.3, np.random.default_rng(step), True)
                loss = ad.mean(ad.mul(y, y))
            ad.adam_step(store, tape.gradients(loss, store), 0.01)
            losses.append(loss.item())
        return losses

    assert run() == run()
