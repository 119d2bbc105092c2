import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import loop_local_attention
from slide_attn import ConfigError, ShapeError
from slide_attn.im2col import direction_index, im2col, local_attention_reference, window_offsets
from slide_attn.shift import shift_feature
from slide_attn.tensor import pad_zero

FIG2 = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)


def test_window_offsets_order():
    assert window_offsets(1) == [(0, 0)]
    offs = window_offsets(3)
    assert offs[0] == (-1, -1) and offs[4] == (0, 0) and offs[8] == (1, 1)
    assert all(direction_index(u, v, 3) == g for g, (u, v) in enumerate(offs))
    with pytest.raises(ConfigError):
        window_offsets(4)


def test_fig2_query_00_column():
    m = im2col(FIG2, 3)
    col = m.data[:, 0, 0]
    assert np.count_nonzero(col) == 4
    assert (col == 0).sum() == 5
    np.testing.assert_array_equal(m.column(0, 0)[..., 0], [[0, 0, 0], [0, 1, 2], [0, 3, 4]])


def test_k1_is_flattened_feature(rng):
    f = rng.standard_normal((1, 3, 4, 2))
    np.testing.assert_array_equal(im2col(f, 1).data[0], f.reshape(12, 2))


def test_rows_are_shifted_maps(rng):
    f = rng.standard_normal((1, 4, 4, 2))
    m = im2col(f, 3)
    for u, v in window_offsets(3):
        np.testing.assert_array_equal(m.row(u, v), shift_feature(f, u, v)[0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(1, 3), st.sampled_from([1, 3, 5]), st.integers(0, 2**32 - 1))
def test_columns_reproduce_padded_windows(h, w, c, k, seed):
    f = np.random.default_rng(seed).standard_normal((1, h, w, c))
    m = im2col(f, k)
    padded = pad_zero(f, k // 2, k // 2)[0]
    for i in range(h):
        for j in range(w):
            np.testing.assert_array_equal(m.column(i, j), padded[i : i + k, j : j + k])


def test_im2col_errors(rng):
    with pytest.raises(ConfigError):
        im2col(rng.standard_normal((1, 3, 3, 1)), 2)
    with pytest.raises(ShapeError):
        im2col(rng.standard_normal((2, 3, 3, 1)), 3)


def test_reference_uniform_keys_gives_window_mean(rng):
    h = w = 5
    q = rng.standard_normal((1, h, w, 4))
    keys = np.ones((1, h, w, 4))
    values = rng.standard_normal((1, h, w, 4))
    out = local_attention_reference(q, im2col(keys, 3), im2col(values, 3), 4)
    # interior query (2, 2): all nine keys identical and in-bounds
    np.testing.assert_allclose(out[0, 2, 2], values[0, 1:4, 1:4].reshape(9, 4).mean(0), atol=1e-14)


def test_reference_k1_returns_values(rng):
    q, k, v = (rng.standard_normal((1, 3, 4, 6)) for _ in range(3))
    np.testing.assert_array_equal(local_attention_reference(q, im2col(k, 1), im2col(v, 1), 3), v)


@pytest.mark.parametrize("mask", [False, True])
def test_reference_matches_scalar_loop(rng, mask):
    q, k, v = (rng.standard_normal((1, 4, 4, 8)) for _ in range(3))
    out = local_attention_reference(q, im2col(k, 3), im2col(v, 3), 4, mask)
    expected = loop_local_attention(q[0], k[0], v[0], 3, 2, mask)
    np.testing.assert_allclose(out[0], expected, rtol=0, atol=1e-12)


def test_reference_constant_map_constant_interior(rng):
    c = rng.standard_normal(4)
    feat = np.broadcast_to(c, (1, 7, 7, 4)).copy()
    out = local_attention_reference(feat, im2col(feat, 5), im2col(feat, 5), 2, mask_padding=False)
    interior = out[0, 2:5, 2:5].reshape(-1, 4)
    np.testing.assert_allclose(interior, np.broadcast_to(interior[0], interior.shape), atol=1e-14)


def test_reference_shape_errors(rng):
    q = rng.standard_normal((1, 3, 3, 4))
    m = im2col(rng.standard_normal((1, 3, 3, 2)), 3)
    with pytest.raises(ShapeError):
        local_attention_reference(q, m, m, 2)
    m4 = im2col(q, 3)
    with pytest.raises(ShapeError):
        local_attention_reference(q, m4, m4, 3)
