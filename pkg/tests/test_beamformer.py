import numpy as np
import pytest

from ifasnet import tensor as T
from ifasnet.beamformer import explicit_filter_and_sum, implicit_filter, render_waveforms
from ifasnet.framing import FramingConfig
from ifasnet.gradcheck import check_gradients
from ifasnet.tensor import Tensor


def filter_and_sum_oracle(ctx, filt, L):
    S, M, n, K = filt.shape
    out = np.zeros((S, n, L))
    for s in range(S):
        for m in range(M):
            for t in range(n):
                for i in range(L):
                    for k in range(K):
                        out[s, t, i] += ctx[m, t, i + k] * filt[s, m, t, k]
    return out


def context_pool_oracle(f, h, C):
    S, n, K, N = h.shape
    out = np.zeros((S, n, N))
    for s in range(S):
        for t in range(n):
            for j in range(K):
                src = t - C + j
                if 0 <= src < n:
                    out[s, t] += f[src] * h[s, t, j]
            out[s, t] /= K
    return out


def test_explicit_matches_loop_oracle(rng):
    L, W = 6, 3
    ctx = rng.standard_normal((3, 4, L + 2 * W))
    filt = rng.standard_normal((2, 3, 4, 2 * W + 1))
    got = explicit_filter_and_sum(ctx, filt).data
    assert np.max(np.abs(got - filter_and_sum_oracle(ctx, filt, L))) < 1e-10


def test_miso_filters_only_reference(rng):
    ctx = rng.standard_normal((3, 4, 10))
    filt = rng.standard_normal((2, 1, 4, 5))
    got = explicit_filter_and_sum(ctx, filt, ref=2).data
    np.testing.assert_allclose(got, filter_and_sum_oracle(ctx[2:3], filt, 6), atol=1e-12)


def test_delta_filter_identity(rng):
    L, W = 8, 4
    ctx = rng.standard_normal((2, 5, L + 2 * W))
    filt = np.zeros((1, 2, 5, 2 * W + 1))
    filt[0, 0, :, W] = 1.0
    assert np.max(np.abs(explicit_filter_and_sum(ctx, filt).data[0] - ctx[0, :, W:W + L])) < 1e-9


def test_context_pooling_matches_loop_oracle(rng):
    f = rng.standard_normal((6, 4))
    h = rng.standard_normal((2, 6, 5, 4))
    got = implicit_filter(f, h, C=2).data
    assert np.max(np.abs(got - context_pool_oracle(f, h, 2))) < 1e-12


def test_plain_mask(rng):
    f, h = rng.standard_normal((6, 4)), rng.standard_normal((2, 6, 4))
    np.testing.assert_array_equal(implicit_filter(f, h, C=0).data, f * h)
    with pytest.raises(T.ShapeError):
        implicit_filter(f, rng.standard_normal((2, 5, 4)), C=0, context=False)


def test_filter_gradients(rng):
    for seed in range(20):
        r = np.random.default_rng(seed)
        ctx = r.standard_normal((2, 3, 9))
        filt = Tensor(r.standard_normal((2, 2, 3, 5)))
        w = r.standard_normal((2, 3, 5))
        assert check_gradients(lambda u: T.sum(explicit_filter_and_sum(ctx, u) * w), filt).passed
        f = Tensor(r.standard_normal((4, 3)))
        h = r.standard_normal((2, 4, 3, 3))
        w2 = r.standard_normal((2, 4, 3))
        assert check_gradients(lambda u: T.sum(implicit_filter(u, h, 1) * w2), f).passed


def test_render_shapes(rng):
    fr = FramingConfig(8, 4, 4)
    out = render_waveforms(rng.standard_normal((2, 5, 3)), fr, 19, decoder=Tensor(rng.standard_normal((3, 8))))
    assert out.waveforms.shape == (2, 19) and out.latents.shape == (2, 5, 3)
    with pytest.raises(T.ShapeError):
        render_waveforms(rng.standard_normal((2, 5, 7)), fr, 19)
