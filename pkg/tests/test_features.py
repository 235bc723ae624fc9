import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ifasnet import tensor as T
from ifasnet.features import (ContextDecoder, ContextEncoder, MLPContextDecoder, MLPContextEncoder,
                              context_decode, context_encode, count_ncc_multiplies, fncc, ncc_dim,
                              tncc)
from ifasnet.framing import FramingConfig, split_frames, stack_feature_context
from ifasnet.gradcheck import check_directional, check_gradients
from ifasnet.tensor import Tensor

seeds = st.integers(0, 2**31 - 1)


def tncc_oracle(frames, ctx, ref):
    M, n, L = frames.shape
    W = (ctx.shape[-1] - L) // 2
    out = np.zeros((M, n, 2 * W + 1))
    for m in range(M):
        for t in range(n):
            y = frames[ref, t]
            for k in range(2 * W + 1):
                seg = ctx[m, t, k:k + L]
                den = max(np.linalg.norm(y) * np.linalg.norm(seg), 1e-8)
                out[m, t, k] = seg @ y / den
    return out


def test_tncc_matches_loop_oracle(rng):
    frames, ctx = split_frames(rng.standard_normal((3, 60)), FramingConfig(8, 4, 5))
    np.testing.assert_allclose(tncc(frames, ctx, ref=1).data, tncc_oracle(frames.frames, ctx.frames, 1),
                               atol=1e-13)


@given(seeds, st.integers(2, 4))
def test_ncc_bounds(seed, M):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((M, 200)) * rng.uniform(0, 5, (M, 1))
    x[:, rng.integers(0, 200, 30)] = 0.0
    frames, ctx = split_frames(x, FramingConfig(16, 8, 16))
    assert np.max(np.abs(tncc(frames, ctx).data)) <= 1 + 1e-9
    F = stack_feature_context(rng.standard_normal((M, 7, 6)), 2)
    assert np.max(np.abs(fncc(F).data)) <= 1 + 1e-9


@given(seeds)
def test_fncc_reference_gram(seed):
    rng = np.random.default_rng(seed)
    F = stack_feature_context(rng.standard_normal((3, 9, 4)), 2)
    g = fncc(F, ref=1).data.reshape(3, 9, 5, 5)[1]
    np.testing.assert_allclose(g, np.swapaxes(g, -1, -2), atol=1e-15)
    # rows past the sequence edges are zero vectors; every interior diagonal entry is 1
    np.testing.assert_allclose(np.diagonal(g[2:-2], axis1=-2, axis2=-1), 1.0, atol=1e-12)


@given(seeds)
def test_fncc_row_scale_invariance(seed):
    rng = np.random.default_rng(seed)
    F = rng.standard_normal((2, 5, 3, 4))
    scale = rng.uniform(1e-3, 1e3, (2, 5, 3, 1))
    np.testing.assert_allclose(fncc(F * scale).data, fncc(F).data, atol=1e-9)


@pytest.mark.parametrize("d", [-6, -3, 0, 2, 6])
def test_tncc_delay_recovery(rng, d):
    s = rng.standard_normal(400)
    x = np.stack([s, np.roll(s, d)])
    frames, ctx = split_frames(x, FramingConfig(16, 8, 6))
    lags = np.argmax(tncc(frames, ctx).data[1, 3:-3], axis=-1) - 6
    assert np.all(lags == d)


def test_silent_channel_gives_zero_not_nan(rng):
    x = np.stack([rng.standard_normal(64), np.zeros(64)])
    frames, ctx = split_frames(x, FramingConfig(8, 4, 4))
    t = tncc(frames, ctx).data
    assert np.all(np.isfinite(t)) and np.all(t[1] == 0)
    F = np.zeros((2, 3, 3, 4))
    F[0] = 1.0
    assert np.all(fncc(F).data[1] == 0)


def test_operation_counts():
    assert count_ncc_multiplies("tncc", 256, 256, 2, 64, 4) == 256 * 513 * 4 == 525312
    assert count_ncc_multiplies("fncc", 256, 256, 2, 64, 4) == 64 * 25 * 4 == 6400
    assert ncc_dim("fncc", 256, 2) == 25 and ncc_dim("tncc", 256, 2) == 513
    with pytest.raises(ValueError):
        count_ncc_multiplies("gcc", 1, 1, 1, 1, 1)


def test_ncc_gradients(rng):
    for seed in range(20):
        r = np.random.default_rng(seed)
        x = r.standard_normal((2, 24))
        w = r.standard_normal((2, 6, 9))

        def f(u):
            c = T.unfold(T.pad(u, ((0, 0), (4, 4 + 4))), 16, 4)  # differentiable context frames
            return T.sum(tncc(c[..., 4:12], c) * w)
        assert check_gradients(f, Tensor(x)).passed
        F = Tensor(r.standard_normal((2, 3, 3, 4)))
        wf = r.standard_normal((2, 3, 9))
        assert check_gradients(lambda u: T.sum(fncc(u) * wf), F).passed


@pytest.mark.parametrize("kind", ["rnn", "mlp"])
def test_context_codec_shapes_and_gradients(rng, kind):
    N, H, K = 4, 3, 5
    enc, dec = ((ContextEncoder(rng, N, H), ContextDecoder(rng, N, H)) if kind == "rnn"
                else (MLPContextEncoder(rng, N, H, K), MLPContextDecoder(rng, N, H)))
    F = Tensor(rng.standard_normal((2, 3, K, N)))
    g = context_encode(F, enc)
    assert g.shape == (2, 3, N)
    filt = context_decode(F[0], Tensor(rng.standard_normal((2, 3, N))), dec)
    assert filt.shape == (2, 3, K, N)
    params = {**{"e." + k: p for k, p in enc.named_parameters()},
              **{"d." + k: p for k, p in dec.named_parameters()}}
    gs = rng.standard_normal((2, 3, N))
    w = rng.standard_normal((2, 3, K, N))
    for seed in range(5):
        reps = check_directional(lambda: T.sum(context_decode(F[0], context_encode(F, enc)[:1] * gs, dec) * w),
                                 params, rng=np.random.default_rng(seed))
        assert all(r.passed for r in reps.values())
