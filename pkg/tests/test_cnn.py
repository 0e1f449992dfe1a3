import struct

import numpy as np
import pytest

from dasdetect.cnn import (ConvNet, TrainConfig, conv2d_backward, conv2d_forward, cross_entropy, decode_checkpoint,
                           encode_checkpoint, load_checkpoint, maxpool2_backward, maxpool2_forward, predict_image,
                           relu_backward, relu_forward, save_checkpoint, softmax_forward, train_cnn)
from dasdetect.errors import BadMagicError, DataError, TruncatedError, VersionMismatchError
from dasdetect.optim import sgd_momentum_step, zeros_like


def conv_oracle(x, W, b):
    B, C, H, Wd = x.shape
    F, _, k, _ = W.shape
    out = np.zeros((B, F, H - k + 1, Wd - k + 1))
    for n in range(B):
        for f in range(F):
            for i in range(H - k + 1):
                for j in range(Wd - k + 1):
                    out[n, f, i, j] = np.sum(x[n, :, i:i + k, j:j + k] * W[f]) + b[f]
    return out


def net_oracle(net, img):
    """Layer-by-layer re-evaluation with explicit loops."""
    p = net.params
    z = conv_oracle(img[None, None], p["W1"], p["b1"])[0]
    a = np.where(z > 0, z, 0.0)
    F, H, W = a.shape
    pooled = np.array([[[max(a[f, 2 * i, 2 * j], a[f, 2 * i, 2 * j + 1], a[f, 2 * i + 1, 2 * j],
                             a[f, 2 * i + 1, 2 * j + 1]) for j in range(W // 2)] for i in range(H // 2)]
                       for f in range(F)])
    logits = pooled.ravel() @ p["W2"] + p["b2"]
    e = np.exp(logits - logits.max())
    return e / e.sum()


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b)))


def numeric_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


# -- layers -------------------------------------------------------------------

def test_conv_matches_loop_oracle(rng):
    x = rng.standard_normal((2, 1, 9, 11))
    W = rng.standard_normal((3, 1, 5, 5))
    b = rng.standard_normal(3)
    np.testing.assert_allclose(conv2d_forward(x, W, b), conv_oracle(x, W, b), rtol=1e-12, atol=1e-12)


def test_conv_delta_and_ones(rng):
    x = rng.standard_normal((1, 1, 8, 8))
    W = np.zeros((1, 1, 5, 5))
    W[0, 0, 2, 2] = 1.0
    np.testing.assert_allclose(conv2d_forward(x, W, np.zeros(1))[0, 0], x[0, 0, 2:-2, 2:-2])
    out = conv2d_forward(np.full((1, 1, 7, 6), 0.3), np.ones((1, 1, 5, 5)), np.zeros(1))
    np.testing.assert_allclose(out, 25 * 0.3)
    assert out.shape == (1, 1, 3, 2)


def test_conv_shape_errors():
    with pytest.raises(DataError):
        conv2d_forward(np.zeros((1, 1, 4, 4)), np.zeros((1, 1, 5, 5)), np.zeros(1))
    with pytest.raises(DataError):
        conv2d_forward(np.zeros((1, 2, 8, 8)), np.zeros((1, 1, 5, 5)), np.zeros(1))


def test_conv_gradients(rng):
    x = rng.standard_normal((2, 1, 7, 8))
    W = rng.standard_normal((2, 1, 5, 5))
    b = rng.standard_normal(2)
    G = rng.standard_normal((2, 2, 3, 4))
    loss = lambda: float(np.sum(conv2d_forward(x, W, b) * G))  # noqa: E731
    dx, dW, db = conv2d_backward(x, W, G)
    assert rel_err(dW, numeric_grad(loss, W)) < 1e-4
    assert rel_err(db, numeric_grad(loss, b)) < 1e-4
    assert rel_err(dx, numeric_grad(loss, x)) < 1e-4


def test_relu():
    assert not relu_forward(-np.abs(np.arange(1.0, 7))).any()
    x = np.abs(np.random.default_rng(0).standard_normal(5))
    np.testing.assert_array_equal(relu_forward(x), x)


def test_relu_gradient_mask(rng):
    x = rng.standard_normal((3, 4))
    x[np.abs(x) < 0.1] = 0.5  # keep away from the kink
    G = rng.standard_normal((3, 4))
    num = numeric_grad(lambda: float(np.sum(relu_forward(x) * G)), x)
    np.testing.assert_allclose(relu_backward(x, G), num, atol=1e-8)
    np.testing.assert_array_equal(relu_backward(x, np.ones_like(x)), (x > 0).astype(float))


def test_maxpool():
    out, _ = maxpool2_forward(np.full((1, 2, 4, 6), 3.0))
    assert out.shape == (1, 2, 2, 3) and np.all(out == 3.0)
    out, arg = maxpool2_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    assert out.item() == 4.0
    d = maxpool2_backward(arg, np.array([[[[5.0]]]]))
    np.testing.assert_array_equal(d[0, 0], [[0, 0], [0, 5.0]])
    with pytest.raises(DataError):
        maxpool2_forward(np.zeros((1, 1, 3, 4)))


def test_maxpool_gradient(rng):
    x = rng.permutation(96).reshape(1, 2, 6, 8).astype(float)  # distinct values, no ties
    G = rng.standard_normal((1, 2, 3, 4))
    out, arg = maxpool2_forward(x)
    num = numeric_grad(lambda: float(np.sum(maxpool2_forward(x)[0] * G)), x)
    np.testing.assert_allclose(maxpool2_backward(arg, G), num, atol=1e-8)


def test_softmax():
    np.testing.assert_allclose(softmax_forward([[0.0, 0.0]]), [[0.5, 0.5]])
    np.testing.assert_allclose(softmax_forward([[np.log(2), 0.0]]), [[2 / 3, 1 / 3]], rtol=1e-15)
    z = np.random.default_rng(3).standard_normal((4, 2))
    np.testing.assert_allclose(softmax_forward(z + 123.4), softmax_forward(z), atol=1e-12)
    assert np.all(np.isfinite(softmax_forward([[1e4, -1e4]])))


def test_cross_entropy():
    T = np.eye(2)[[0, 1, 1]]
    assert cross_entropy(T, T) == 0.0
    assert cross_entropy(np.full((5, 2), 0.5), np.eye(2)[[0, 1, 0, 0, 1]]) == pytest.approx(5 * np.log(2))
    P = softmax_forward(np.random.default_rng(1).standard_normal((3, 2)))
    perm = [2, 0, 1]
    assert cross_entropy(P[perm], T[perm]) == pytest.approx(cross_entropy(P, T), rel=1e-15)


def test_softmax_xent_gradient(rng):
    z = rng.standard_normal((4, 2))
    T = np.eye(2)[[0, 1, 1, 0]]
    num = numeric_grad(lambda: cross_entropy(softmax_forward(z), T), z)
    assert rel_err(softmax_forward(z) - T, num) < 1e-4


# -- network ------------------------------------------------------------------

def test_network_gradients(rng):
    net = ConvNet.init((12, 10), n_filters=3, seed=4)
    x = rng.uniform(size=(3, 1, 12, 10))
    T = np.eye(2)[[0, 1, 1]]
    _, grads = net.loss_and_grads(x, T)
    for k, W in net.params.items():
        num = numeric_grad(lambda: net.loss_and_grads(x, T)[0], W)
        assert rel_err(grads[k], num) < 1e-4, k


def test_shape_chain():
    net = ConvNet.init()
    assert net.params["W1"].shape == (20, 1, 5, 5)
    assert net.params["W2"].shape == (20 * 14 * 28, 2)
    with pytest.raises(DataError):
        ConvNet.init((31, 60))


def test_zero_model_half_and_probability_contract(rng):
    assert ConvNet.zeros().predict_proba(np.zeros((32, 60)))[0] == 0.5
    net = ConvNet.init(seed=2)
    probs, _ = net.forward(rng.uniform(size=(4, 32, 60)))
    assert np.all((probs >= 0) & (probs <= 1))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=1e-14)


def test_prediction_matches_layer_oracle(rng):
    net = ConvNet.init((10, 14), n_filters=4, seed=9)
    for _ in range(3):
        img = rng.uniform(size=(10, 14))
        np.testing.assert_allclose(net.forward(img)[0][0], net_oracle(net, img), rtol=1e-12, atol=1e-12)
    label, p = predict_image(net, img)
    assert (label == "Excavator") == (p > 0.5)


def _toy_patches(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 0.2, (n, 32, 60))
    y = np.arange(n) % 2
    for i in np.flatnonzero(y):
        r = rng.integers(4, 28)
        X[i, r - 2:r + 2, :] = 1.0
    return X, y


def test_memorizes_16_patches():
    X, y = _toy_patches(16, 0)
    net = train_cnn(X, TrainConfig(epochs=50, seed=0), labels=y)
    assert len(net.history) <= 50
    assert np.mean((net.predict_proba(X) > 0.5) == y) == 1.0


def test_loss_decreases_first_epochs():
    X, y = _toy_patches(64, 1)
    net = train_cnn(X, TrainConfig(epochs=5, batch_size=16, seed=0), labels=y)
    losses = [h[0] for h in net.history]
    if len(losses) > 1:
        assert all(b < a for a, b in zip(losses, losses[1:])), losses


def test_training_deterministic():
    X, y = _toy_patches(16, 2)
    a = train_cnn(X, TrainConfig(epochs=3, seed=5), labels=y)
    b = train_cnn(X, TrainConfig(epochs=3, seed=5), labels=y)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])


def test_training_needs_both_classes():
    with pytest.raises(DataError):
        train_cnn(np.zeros((4, 32, 60)), labels=[1, 1, 1, 1])


# -- optimizer ----------------------------------------------------------------

def test_momentum_hand_iteration():
    p, v = {"w": np.zeros(1)}, {"w": np.zeros(1)}
    g = {"w": np.ones(1)}
    sgd_momentum_step(p, g, v, 0.001, 0.9)
    assert p["w"][0] == -0.001
    sgd_momentum_step(p, g, v, 0.001, 0.9)
    assert p["w"][0] == -0.001 - (0.9 * 0.001 + 0.001)
    assert p["w"][0] == pytest.approx(-0.0029, abs=1e-15)


def test_momentum_reductions(rng):
    w = rng.standard_normal(4)
    g = rng.standard_normal(4)
    p, v = {"w": w.copy()}, {"w": rng.standard_normal(4)}
    sgd_momentum_step(p, {"w": g}, v, 0.1, 0.0)
    np.testing.assert_array_equal(p["w"], w - 0.1 * g)
    p = {"w": w.copy()}
    sgd_momentum_step(p, {"w": np.zeros(4)}, zeros_like(p), 0.1, 0.9)
    np.testing.assert_array_equal(p["w"], w)
    with pytest.raises(DataError):
        sgd_momentum_step(p, {"v": g}, zeros_like(p), 0.1, 0.9)


# -- checkpoint -----------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path, rng):
    net = ConvNet.init(seed=3)
    for v in net.velocity.values():
        v[...] = rng.standard_normal(v.shape)
    save_checkpoint(net, tmp_path / "n.ckpt")
    back = load_checkpoint(tmp_path / "n.ckpt")
    assert back.input_shape == (32, 60)
    for k in net.params:
        assert net.params[k].tobytes() == back.params[k].tobytes()
        assert net.velocity[k].tobytes() == back.velocity[k].tobytes()


def test_checkpoint_layout():
    net = ConvNet.init((6, 6), n_filters=1, seed=0)
    blob = encode_checkpoint(net)
    magic, version, H, W, F, k, classes, dense_in = struct.unpack("<4sIIIIIII", blob[:32])
    assert (magic, version, H, W, F, k, classes, dense_in) == (b"CNN1", 1, 6, 6, 1, 5, 2, 1)
    body = np.frombuffer(blob[32:], "<f8")
    assert body[0] == net.params["W1"].ravel()[0]
    n_params = sum(v.size for v in net.params.values())
    assert len(body) == 2 * n_params


def test_checkpoint_errors():
    blob = bytearray(encode_checkpoint(ConvNet.init((6, 6), n_filters=1)))
    with pytest.raises(TruncatedError):
        decode_checkpoint(bytes(blob[:-8]))
    bad = bytearray(blob)
    bad[:4] = b"XXXX"
    with pytest.raises(BadMagicError):
        decode_checkpoint(bytes(bad))
    bad = bytearray(blob)
    bad[4] = 9
    with pytest.raises(VersionMismatchError):
        decode_checkpoint(bytes(bad))
