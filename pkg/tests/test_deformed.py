import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slide_attn import ConfigError, StateError
from slide_attn.deformed import (
    DeformedShiftParams,
    backward_two_path,
    forward_merged,
    forward_two_path,
    init_deformed,
    reparameterize,
)
from slide_attn.shift import ShiftKernelBank, build_shift_kernel_bank, im2col_via_dwconv
from slide_attn.tensor import count_ops, grouped_conv2d


def test_init_deterministic_and_bounded():
    a = init_deformed(3, 4, seed=7)
    b = init_deformed(3, 4, seed=7)
    np.testing.assert_array_equal(a.learnable, b.learnable)
    assert np.abs(a.learnable).max() <= 1 / 9
    assert a.merged is None
    np.testing.assert_array_equal(a.fixed_bank.kernels, build_shift_kernel_bank(3, 4).kernels)


def test_init_different_seeds_differ():
    assert not np.array_equal(init_deformed(3, 4, 1).learnable, init_deformed(3, 4, 2).learnable)


def test_init_even_k():
    with pytest.raises(ConfigError):
        init_deformed(4, 2, 0)


def test_zero_learnable_is_pure_shift(rng):
    f = rng.standard_normal((1, 5, 4, 3))
    p = init_deformed(3, 3, 0).with_learnable(np.zeros((3, 3, 3, 9)))
    out = forward_two_path(f, p)
    np.testing.assert_array_equal(out, grouped_conv2d(f, p.fixed_bank.kernels))
    # same thing as the dwconv Im2Col rows
    rows = im2col_via_dwconv(f, p.fixed_bank).data
    np.testing.assert_array_equal(out.reshape(20, 3, 9).transpose(2, 0, 1), rows)


def test_zero_fixed_is_pure_learnable(rng):
    f = rng.standard_normal((1, 4, 4, 2))
    learnable = rng.standard_normal((3, 3, 2, 9))
    p = DeformedShiftParams(3, ShiftKernelBank(3, np.zeros((3, 3, 2, 9))), learnable)
    np.testing.assert_array_equal(forward_two_path(f, p), grouped_conv2d(f, learnable))


def test_two_path_is_sum_of_convs(rng):
    f = rng.standard_normal((1, 4, 6, 2))
    p = init_deformed(5, 2, 3)
    expected = grouped_conv2d(f, p.fixed_bank.kernels) + grouped_conv2d(f, p.learnable)
    np.testing.assert_array_equal(forward_two_path(f, p), expected)


def test_reparameterize_zero_learnable_gives_delta_bank():
    p = init_deformed(3, 2, 0).with_learnable(np.zeros((3, 3, 2, 9)))
    np.testing.assert_array_equal(reparameterize(p).merged, build_shift_kernel_bank(3, 2).kernels)


def test_reparameterize_scalar_case():
    p = init_deformed(1, 1, 0).with_learnable(np.array([[[[0.5]]]]))
    merged = reparameterize(p)
    np.testing.assert_array_equal(merged.merged, [[[[1.5]]]])
    np.testing.assert_array_equal(merged.learnable, [[[[0.5]]]])  # kept for audit


def test_reparameterize_twice_is_state_error():
    with pytest.raises(StateError):
        reparameterize(reparameterize(init_deformed(3, 1, 0)))


def test_forward_merged_requires_merge(rng):
    with pytest.raises(StateError):
        forward_merged(rng.standard_normal((1, 3, 3, 1)), init_deformed(3, 1, 0))


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 7), st.integers(1, 7), st.integers(1, 5), st.sampled_from([1, 3, 5, 7]),
    st.sampled_from(["f32", "f64"]), st.integers(0, 2**32 - 1),
)
def test_merged_equals_two_path(h, w, c, k, dtype, seed):
    r = np.random.default_rng(seed)
    dt, tol = {"f32": (np.float32, 1e-6), "f64": (np.float64, 1e-12)}[dtype]
    f = r.standard_normal((1, h, w, c)).astype(dt)
    p = init_deformed(k, c, seed, dtype=dt)
    a = forward_two_path(f, p)
    b = forward_merged(f, reparameterize(p))
    assert np.all(np.abs(a - b) <= tol * (1 + np.abs(b)))


def test_merged_path_halves_conv_work(rng):
    f = rng.standard_normal((1, 6, 6, 3))
    p = init_deformed(3, 3, 1)
    with count_ops() as two:
        forward_two_path(f, p)
    with count_ops() as one:
        forward_merged(f, reparameterize(p))
    assert (two["grouped_conv2d"], one["grouped_conv2d"]) == (2, 1)
    assert two["conv_macs"] == 2 * one["conv_macs"]


def test_backward_returns_only_learnable_kernel_grad(rng):
    f = rng.standard_normal((1, 3, 3, 2))
    p = init_deformed(3, 2, 0)
    out = backward_two_path(f, p, np.ones((1, 3, 3, 18)))
    assert len(out) == 2
    assert out[0].shape == f.shape and out[1].shape == p.learnable.shape
