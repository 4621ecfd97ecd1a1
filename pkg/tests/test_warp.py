from collections import Counter

import numpy as np
import pytest

from flowprop.errors import ContractError
from flowprop.gradcheck import check_warp_gradients, numeric_gradient, random_instance, relative_error
from flowprop.oracles import warp_all_pairs
from flowprop.tensors import FeatureMap, FeaturePyramid, FlowField, ScaleMap, stack_channels
from flowprop.warp import (
    apply_scale_map, bilinear_sample, warp_backward, warp_feature, warp_pyramid, warp_pyramid_masked,
)


def test_zero_flow_is_identity(rng):
    key = FeatureMap(rng.standard_normal((6, 5, 3)))
    result = warp_feature(key, FlowField.zeros(6, 5))
    assert result.warped == key
    assert result.valid.all()


def test_unit_shift_moves_columns():
    key = FeatureMap(np.arange(9.0).reshape(3, 3, 1))
    result = warp_feature(key, FlowField.constant(3, 3, 1.0, 0.0))
    np.testing.assert_array_equal(result.warped.data[..., 0], [[1, 2, 0], [4, 5, 0], [7, 8, 0]])
    assert result.valid[:, :2].all()
    assert not result.valid[:, 2].any()


def test_half_cell_sample_averages_neighbours():
    key = FeatureMap(np.array([[[0.0], [2.0]], [[4.0], [6.0]]]))
    np.testing.assert_allclose(bilinear_sample(key, (0.5, 0.5)), [3.0])


def test_sampling_outside_the_grid_is_zero():
    key = FeatureMap(np.ones((2, 2, 2)))
    np.testing.assert_array_equal(bilinear_sample(key, (-3.0, 0.0)), [0.0, 0.0])


def test_matches_all_pairs_sum(rng):
    for _ in range(200):
        h, w = rng.integers(1, 7, size=2)
        key = FeatureMap(rng.standard_normal((h, w, int(rng.integers(1, 4)))))
        flow = FlowField(rng.uniform(-2.5, 2.5, size=(h, w, 2)))
        np.testing.assert_allclose(warp_feature(key, flow).warped.data, warp_all_pairs(key, flow), atol=1e-6)


def test_warp_is_linear_in_the_feature(rng):
    flow = FlowField(rng.uniform(-2.5, 2.5, size=(5, 4, 2)))
    f = FeatureMap(rng.standard_normal((5, 4, 3)))
    g = FeatureMap(rng.standard_normal((5, 4, 3)))
    combined = warp_feature(FeatureMap(2.5 * f.data - 0.75 * g.data), flow).warped.data
    separate = 2.5 * warp_feature(f, flow).warped.data - 0.75 * warp_feature(g, flow).warped.data
    np.testing.assert_allclose(combined, separate, atol=1e-12)


def test_channels_are_warped_independently(rng):
    key = FeatureMap(rng.standard_normal((4, 6, 3)))
    flow = FlowField(rng.uniform(-2.0, 2.0, size=(4, 6, 2)))
    per_channel = stack_channels([warp_feature(key.channel(c), flow).warped for c in range(key.channels)])
    assert per_channel == warp_feature(key, flow).warped


def test_scale_map_commutes_with_channel_slicing(rng):
    feature = FeatureMap(rng.standard_normal((3, 3, 4)))
    scale = ScaleMap(rng.uniform(0, 2, (3, 3, 4)))
    scaled = apply_scale_map(feature, scale)
    for c in range(4):
        single = apply_scale_map(feature.channel(c), ScaleMap(scale.data[:, :, c:c + 1]))
        assert single == scaled.channel(c)


def test_grid_mismatch_is_contract_error():
    with pytest.raises(ContractError):
        warp_feature(FeatureMap.zeros(3, 3, 1), FlowField.zeros(3, 4))


def test_scale_map_multiplies_elementwise(rng):
    feature = FeatureMap(rng.standard_normal((2, 3, 2)))
    scale = ScaleMap(rng.uniform(0, 2, (2, 3, 2)))
    np.testing.assert_allclose(apply_scale_map(feature, scale).data, feature.data * scale.data)
    with pytest.raises(ContractError):
        apply_scale_map(feature, ScaleMap.ones(2, 3, 1))


def test_pyramid_warps_every_level(rng):
    key = FeaturePyramid((FeatureMap(rng.standard_normal((4, 4, 2))), FeatureMap(rng.standard_normal((2, 2, 2)))))
    flows = [FlowField.zeros(4, 4), FlowField.zeros(2, 2)]
    scales = [ScaleMap.ones(4, 4, 2), ScaleMap.ones(2, 2, 2)]
    stats = Counter()
    warped, masks = warp_pyramid_masked(key, flows, scales, stats)
    assert all(a == b for a, b in zip(warped, key))
    assert stats == Counter(warp=2, scale=2)
    assert [m.shape for m in masks] == [(4, 4), (2, 2)]
    with pytest.raises(ContractError):
        warp_pyramid(key, flows[:1], scales)


def test_backward_matches_finite_differences(rng):
    for _ in range(20):
        result = check_warp_gradients(*random_instance(rng))
        assert result.max_error <= 1e-3


def test_feature_gradient_is_the_adjoint(rng):
    key, flow, upstream = random_instance(rng)
    grad_key, _ = warp_backward(key, flow, upstream)
    probe = rng.standard_normal(key.shape)
    forward = np.sum(upstream.data * warp_feature(FeatureMap(probe), flow).warped.data)
    assert np.isclose(forward, np.sum(probe * grad_key.data))


def test_flow_gradient_at_integer_coordinates_is_one_sided():
    key = FeatureMap(np.array([[[0.0], [1.0], [4.0]]]))
    upstream = FeatureMap(np.array([[[1.0], [0.0], [0.0]]]))
    _, grad_flow = warp_backward(key, FlowField.zeros(1, 3), upstream)
    # toward +x from column 0 the sampled value rises by key[1] - key[0]
    assert grad_flow.data[0, 0, 0] == pytest.approx(1.0)


def test_relative_error_and_numeric_gradient():
    x = np.array([1.0, 2.0])
    grad = numeric_gradient(lambda v: float(np.sum(v ** 2)), x)
    np.testing.assert_allclose(grad, 2 * x, atol=1e-6)
    assert relative_error(np.array([2.0]), np.array([2.0])) == 0.0


def test_relative_error_does_not_forgive_small_gradients():
    assert relative_error(np.array([1e-4]), np.array([5e-4])) == pytest.approx(0.8)
    assert relative_error(np.array([0.0]), np.array([0.0])) == 0.0
    # below the floor the comparison turns absolute
    assert relative_error(np.array([0.0]), np.array([1e-9])) == pytest.approx(1e-3)
