import numpy as np

from ifasnet import tensor as T
from ifasnet.gradcheck import check_directional, check_gradients
from ifasnet.nn import BLSTM, LSTM, LayerNorm, Linear, orthogonal
from ifasnet.tensor import Tensor


def lstm_oracle(x, w_in, w_rec, b, H, reverse=False):
    sig = lambda z: 1 / (1 + np.exp(-z))
    B, n, _ = x.shape
    h, c = np.zeros((B, H)), np.zeros((B, H))
    out = np.zeros((B, n, H))
    for t in (range(n - 1, -1, -1) if reverse else range(n)):
        z = x[:, t] @ w_in + h @ w_rec + b
        i, f, o, g = sig(z[:, :H]), sig(z[:, H:2 * H]), sig(z[:, 2 * H:3 * H]), np.tanh(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        out[:, t] = h
    return out


def test_lstm_matches_loop_oracle(rng):
    lstm = LSTM(rng, 3, 4)
    lstm.bias.data[:] = rng.standard_normal(16)
    x = rng.standard_normal((2, 6, 3))
    for rev in (False, True):
        got = lstm(Tensor(x), reverse=rev).data
        ref = lstm_oracle(x, lstm.w_in.data, lstm.w_rec.data, lstm.bias.data, 4, rev)
        np.testing.assert_allclose(got, ref, atol=1e-14)


def test_orthogonal_init(rng):
    q = orthogonal(rng, 6)
    np.testing.assert_allclose(q @ q.T, np.eye(6), atol=1e-13)


def test_layernorm_output_statistics(rng):
    y = LayerNorm(16)(Tensor(rng.standard_normal((5, 16)) * 3 + 2)).data
    np.testing.assert_allclose(y.mean(-1), 0, atol=1e-12)
    np.testing.assert_allclose(y.std(-1), 1, atol=1e-6)


def _check_module(layer, x, rng, seeds=20):
    params = dict(layer.named_parameters())
    for s in range(seeds):
        w = np.random.default_rng(s).standard_normal(layer(Tensor(x)).shape)
        reps = check_directional(lambda: T.sum(layer(Tensor(x)) * w), params, rng=rng)
        assert all(r.passed for r in reps.values()), {k: r.max_rel_error for k, r in reps.items()}
        rep = check_gradients(lambda u: T.sum(layer(u) * w), Tensor(x))
        assert rep.passed, rep.max_rel_error


def test_linear_gradients(rng):
    _check_module(Linear(rng, 4, 3), rng.standard_normal((2, 4)), rng)


def test_layernorm_gradients(rng):
    ln = LayerNorm(6)
    ln.gain.data[:] = rng.uniform(0.5, 1.5, 6)
    _check_module(ln, rng.standard_normal((3, 6)), rng)


def test_lstm_gradients(rng):
    _check_module(LSTM(rng, 3, 4), rng.standard_normal((2, 5, 3)), rng, seeds=5)


def test_blstm_gradients(rng):
    layer = BLSTM(rng, 3, 3)
    _check_module(layer, rng.standard_normal((2, 4, 3)), rng, seeds=5)
    assert layer(Tensor(np.zeros((1, 4, 3)))).shape == (1, 4, 6)
