import math

import numpy as np
import pytest

import gradcheck as G
from fedimb.diffnet import (
    SGD,
    Adam,
    BatchNorm,
    BlobError,
    Dense,
    GaussianNoise,
    Network,
    NonFiniteError,
    RMSprop,
    Tape,
    Tensor,
    bce_loss,
    deserialize_weights,
    make_optimizer,
    mlp,
    no_record,
    serialize_weights,
)
from fedimb.diffnet import tape as T
from fedimb.fedsim import build_classifier

LISTING1_PARAMS = 13 * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64 + 64 * 32 + 32 + 32 * 1 + 1


def dense(weights, bias, act="linear"):
    w = np.asarray(weights, dtype=float)
    layer = Dense(w.shape[0], w.shape[1], act)
    layer.weights.value = w
    layer.bias.value = np.asarray(bias, dtype=float).reshape(1, -1)
    return layer


# --- forward -----------------------------------------------------------------------


def test_identity_dense_layer():
    net = Network([dense(np.eye(2), [0, 0])])
    assert net.predict([[3.0, -2.0]]).tolist() == [[3.0, -2.0]]


def test_sigmoid_at_zero():
    net = Network([dense([[1.0]], [0.0], "sigmoid")])
    assert net.predict([[0.0]])[0, 0] == 0.5


def test_relu_definition():
    net = Network([dense(np.eye(2), [0, 0], "relu")])
    assert net.predict([[-1.0, 2.0]]).tolist() == [[0.0, 2.0]]


def test_batch_shape_mismatch_raises():
    net = Network([dense(np.eye(2), [0, 0])])
    with pytest.raises(ValueError):
        net.predict([[1.0, 2.0, 3.0]])


def test_layer_chain_mismatch_raises():
    with pytest.raises(ValueError):
        Network([Dense(3, 4), Dense(5, 1)])


# --- backprop ----------------------------------------------------------------------


def test_zero_upstream_gradient_gives_zero_parameter_gradients():
    rng = np.random.default_rng(0)
    net = mlp(3, [(8, "relu"), (4, "sigmoid"), (1, "linear")], rng)
    net.forward(rng.normal(size=(5, 3)))
    for g in net.backward(np.zeros((5, 1))):
        assert not g.any()


def test_linear_unit_chain_rule():
    net = Network([dense([[0.7]], [0.0])])
    net.forward([[2.0]])
    gw, gb = net.backward(np.array([[3.0]]))
    assert gw[0, 0] == 2.0 * 3.0
    assert gb[0, 0] == 3.0


@pytest.mark.parametrize("hidden", ["relu", "sigmoid", "linear"])
def test_three_layer_net_matches_finite_differences(hidden):
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 5:
        net = mlp(4, [(6, hidden), (5, hidden), (1, "sigmoid")], rng)
        x = rng.normal(size=(6, 4))
        y = rng.integers(0, 2, size=6).astype(float)
        with Tape() as tape:
            loss = bce_loss(net(x), y)
        grads = [g.value for g in tape.gradient(loss, net.parameters())]

        def value():
            with no_record():
                return float(bce_loss(net(x), y).value)

        err = G.check_gradients(net, value, grads, rng, x if hidden == "relu" else None)
        if err is None:
            continue
        checked += 1
        assert err < 1e-4


def test_unrelated_source_gets_zero_gradient():
    x = Tensor(np.ones((1, 1)), requires_grad=True)
    u = Tensor(np.full((2, 2), 5.0), requires_grad=True)
    with Tape() as tape:
        y = T.mul(x, 2.0)
    gx, gu = tape.gradient(y, [x, u])
    assert gx.value[0, 0] == 2.0
    assert gu.value.shape == (2, 2) and not gu.value.any()


def test_affine_matches_matmul_plus_bias():
    rng = np.random.default_rng(4)
    x, w, b = (Tensor(rng.normal(size=s), requires_grad=True) for s in ((5, 3), (3, 4), (1, 4)))
    with Tape() as t1:
        fused = T.sum(T.mul(T.affine(x, w, b), T.affine(x, w, b)))
    with Tape() as t2:
        z = T.add(T.matmul(x, w), b)
        plain = T.sum(T.mul(z, z))
    assert fused.value == plain.value
    for a, c in zip(t1.gradient(fused, [x, w, b]), t2.gradient(plain, [x, w, b])):
        assert np.allclose(a.value, c.value, rtol=1e-13, atol=0)


def test_non_finite_forward_raises():
    with np.errstate(invalid="ignore"), pytest.raises(NonFiniteError):
        T.log(Tensor(np.array([[-1.0]])))


# --- input gradient ----------------------------------------------------------------


def test_linear_critic_input_gradient_is_weight_vector():
    w = np.array([[0.5], [-2.0], [3.0]])
    net = Network([dense(w, [0.1])])
    gx = net.input_gradient(np.random.default_rng(0).normal(size=(4, 3))).value
    assert np.array_equal(gx, np.tile(w.T, (4, 1)))


def test_constant_critic_has_zero_input_gradient():
    net = Network([dense(np.zeros((2, 1)), [1.5])])
    assert not net.input_gradient(np.ones((3, 2))).value.any()


def test_relu_critic_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    net = mlp(3, [(8, "relu"), (1, "linear")], rng)
    x = rng.uniform(size=(5, 3))
    gx = net.input_gradient(x).value
    h = 1e-6
    num = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            num[i, j] = (net.predict(xp)[i, 0] - net.predict(xm)[i, 0]) / (2 * h)
    assert np.linalg.norm(gx - num) / np.linalg.norm(num) < 1e-4


# --- losses ------------------------------------------------------------------------


def test_bce_perfect_prediction():
    assert float(bce_loss([[1 - 1e-7]], [[1.0]]).value) < 1e-6


def test_bce_half():
    assert float(bce_loss([[0.5]], [[1.0]]).value) == pytest.approx(math.log(2), abs=1e-12)
    assert float(bce_loss([[0.5], [0.5]], [0.0, 1.0]).value) == pytest.approx(math.log(2), abs=1e-12)


def test_bce_clamps_extremes():
    assert math.isfinite(float(bce_loss([[0.0], [1.0]], [1.0, 0.0]).value))


# --- layers --------------------------------------------------------------------------


def test_batchnorm_training_normalizes():
    bn = BatchNorm(3)
    x = np.random.default_rng(0).normal(5.0, 2.0, size=(64, 3))
    out = bn.forward(Tensor(x), training=True).value
    assert np.allclose(out.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(out.var(axis=0), x.var(axis=0) / (x.var(axis=0) + bn.epsilon), atol=1e-12)


def test_batchnorm_frozen_keeps_running_stats():
    net = Network([Dense(2, 2, rng=np.random.default_rng(0)), BatchNorm(2)])
    bn = net.layers[1]
    with net.frozen():
        net(np.ones((4, 2)) * np.arange(4)[:, None])
    assert np.array_equal(bn.running_mean, np.zeros((1, 2)))
    assert not bn.frozen


def test_frozen_weights_leave_upstream_gradients_unchanged():
    rng = np.random.default_rng(1)
    gen = mlp(3, [(8, "relu"), (2, "sigmoid")], rng)
    disc = mlp(2, [(8, "relu"), "batchnorm", (1, "sigmoid")], rng)
    z = rng.normal(size=(6, 3))
    grads = []
    for weights in (False, True):
        with disc.frozen(weights=weights), Tape() as tape:
            loss = T.mean(disc(gen(z)))
        grads.append([g.value for g in tape.gradient(loss, gen.parameters())])
    assert all(np.array_equal(a, b) for a, b in zip(*grads))
    assert all(p.requires_grad for p in disc.parameters())


def test_gaussian_noise_statistics_and_eval_identity():
    layer = GaussianNoise(0.5, rng=np.random.default_rng(0))
    x = Tensor(np.zeros((20000, 1)))
    noisy = layer.forward(x, training=True).value
    assert abs(noisy.mean()) < 0.02 and abs(noisy.std() - 0.5) < 0.02
    assert layer.forward(x, training=False) is x


# --- optimizers ----------------------------------------------------------------------


def _step(opt, grads, w0=0.0):
    p = Tensor(np.array([[w0]]), requires_grad=True)
    for g in grads:
        opt.step([p], [np.array([[g]])])
    return p.value[0, 0] - w0


def test_plain_sgd_step():
    assert _step(SGD(0.1, 0.0), [2.0]) == pytest.approx(-0.2, abs=1e-15)


def test_momentum_sgd_two_steps():
    assert _step(SGD(0.1, 0.9), [1.0, 1.0]) == pytest.approx(-0.29, abs=1e-15)


@pytest.mark.parametrize("g", [3.0, -0.02, 1e-3])
def test_adam_first_step_magnitude(g):
    assert abs(_step(Adam(0.001), [g])) == pytest.approx(0.001, abs=1e-6)


def test_rmsprop_first_step():
    # v = 0.1 g^2, step = lr * g / (sqrt(v) + eps)
    g = 2.0
    want = -0.001 * g / (math.sqrt(0.1 * g * g) + 1e-7)
    assert _step(RMSprop(0.001), [g]) == pytest.approx(want, rel=1e-12)


def test_optimizer_rejects_non_finite_gradient():
    with pytest.raises(NonFiniteError):
        _step(SGD(0.1), [math.nan])


def test_make_optimizer_unknown_kind():
    with pytest.raises(ValueError):
        make_optimizer("adagrad", learning_rate=0.1)


# --- clipping ------------------------------------------------------------------------


def test_clip_weights():
    net = Network([dense([[-0.5], [0.003], [2.0]], [0.0])])
    net.clip_weights(0.01)
    assert net.layers[0].weights.value.ravel().tolist() == [-0.01, 0.003, 0.01]


def test_clip_in_range_is_noop():
    w = [[0.004], [-0.009]]
    net = Network([dense(w, [0.001])])
    net.clip_weights(0.01)
    assert net.layers[0].weights.value.tolist() == w
    assert net.layers[0].bias.value.tolist() == [[0.001]]


# --- serialization -------------------------------------------------------------------


def test_serialize_round_trip_preserves_outputs():
    rng = np.random.default_rng(5)
    src = mlp(4, [(8, "relu"), "batchnorm", (1, "sigmoid")], rng)
    src(rng.normal(size=(16, 4)))  # move the running statistics
    dst = mlp(4, [(8, "relu"), "batchnorm", (1, "sigmoid")], np.random.default_rng(99))
    deserialize_weights(serialize_weights(src), dst)
    x = rng.normal(size=(7, 4))
    src.eval(), dst.eval()
    assert np.array_equal(src.predict(x), dst.predict(x))
    assert serialize_weights(dst).data == serialize_weights(src).data


def test_blob_shape_mismatch():
    blob = serialize_weights(build_classifier(13, np.random.default_rng(0)))
    with pytest.raises(BlobError):
        deserialize_weights(blob, build_classifier(12, np.random.default_rng(0)))


def test_truncated_blob_rejected():
    blob = serialize_weights(build_classifier(3, np.random.default_rng(0)))
    with pytest.raises(BlobError):
        type(blob)(blob.data[:-8]).arrays()


def test_classifier_parameter_count():
    assert build_classifier(13, np.random.default_rng(0)).n_parameters() == LISTING1_PARAMS == 46849
    # the noise layer is parameter-free
    assert build_classifier(13, np.random.default_rng(0), noise_stddev=0.01).n_parameters() == LISTING1_PARAMS
