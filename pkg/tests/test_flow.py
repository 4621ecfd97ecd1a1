import numpy as np
import pytest

from flowprop.errors import ConfigError, ContractError
from flowprop.flow import (
    BlockMatchConfig, BlockMatcher, FlowEstimate, build_flow_pyramid, downscale_flow, estimate_flow,
    identity_flow_pyramid, resize_scale_map,
)
from flowprop.tensors import FlowField, Image, ScaleMap


def _shifted_pair(rng, shift, size=32):
    """(key, current) where the content of current sits `shift` pixels right of the key."""
    base = rng.uniform(0, 1, size=(size, size + shift, 3))
    return Image(base[:, shift:shift + size]), Image(base[:, :size])


def test_content_moving_right_gives_negative_flow(rng):
    key, current = _shifted_pair(rng, 2)
    config = BlockMatchConfig(block_radius=2, search_radius=3, texture_threshold=0.0, grid_stride=2)
    estimate = estimate_flow(key, current, config)
    assert estimate.flow.shape == (16, 16, 2)
    interior = estimate.flow.data[3:-3, 3:-3]
    np.testing.assert_array_equal(interior[..., 0], -1.0)
    np.testing.assert_array_equal(interior[..., 1], 0.0)


def test_identical_frames_give_zero_flow(rng):
    frame = Image(rng.uniform(0, 1, size=(16, 16, 3)))
    estimate = BlockMatcher(BlockMatchConfig(block_radius=2, search_radius=2, grid_stride=4))(frame, frame)
    assert not estimate.flow.data.any()
    np.testing.assert_array_equal(estimate.scale.data, 1.0)


def test_flat_blocks_emit_zero_flow(rng):
    flat = Image(np.full((16, 16, 3), 0.5))
    noisy = Image(rng.uniform(0, 1, size=(16, 16, 3)))
    estimate = estimate_flow(noisy, flat, BlockMatchConfig(block_radius=2, search_radius=3, grid_stride=4))
    assert not estimate.flow.data.any()


def test_grid_dims_round_up():
    assert BlockMatchConfig(grid_stride=8).grid_dims(300, 300) == (38, 38)


def test_invalid_block_match_config():
    with pytest.raises(ConfigError):
        BlockMatchConfig(search_radius=0)
    with pytest.raises(ConfigError):
        BlockMatchConfig(grid_stride=0)


def test_frame_size_mismatch(rng):
    with pytest.raises(ContractError):
        estimate_flow(Image(np.zeros((8, 8, 3))), Image(np.zeros((8, 10, 3))), BlockMatchConfig())


def test_downscale_rescales_displacements():
    flow = downscale_flow(FlowField.constant(8, 8, -2.0, 1.0), (4, 2))
    assert flow.shape == (4, 2, 2)
    np.testing.assert_allclose(flow.dx, -0.5)
    np.testing.assert_allclose(flow.dy, 0.5)


def test_downscale_with_uneven_windows_keeps_constant_flow():
    flow = downscale_flow(FlowField.constant(8, 8, 3.0, 0.0), (3, 3))
    np.testing.assert_allclose(flow.dx, 3.0 * 3 / 8)


def test_downscale_averages_windows():
    data = np.zeros((4, 4, 2))
    data[:2, :2, 0] = 4.0
    flow = downscale_flow(FlowField(data), (2, 2))
    np.testing.assert_allclose(flow.dx, [[2.0, 0.0], [0.0, 0.0]])


def test_scale_map_broadcasts_to_level_channels():
    scale = resize_scale_map(ScaleMap(np.full((8, 8, 1), 0.5)), (4, 4, 6))
    assert scale.shape == (4, 4, 6)
    np.testing.assert_allclose(scale.data, 0.5)
    with pytest.raises(ContractError):
        resize_scale_map(ScaleMap.ones(8, 8, 2), (4, 4, 6))


def test_pyramid_matches_target_dims():
    base = FlowEstimate(FlowField.constant(16, 16, 1.0, 0.0), ScaleMap.ones(16, 16, 1))
    dims = [(16, 16, 4), (8, 8, 4), (4, 4, 4)]
    pyramid = build_flow_pyramid(base, dims)
    assert len(pyramid) == 3
    assert pyramid.matches(dims)
    np.testing.assert_allclose(pyramid.flows[2].dx, 0.25)


def test_pyramid_refuses_levels_finer_than_base():
    base = FlowEstimate(FlowField.zeros(4, 4), ScaleMap.ones(4, 4, 1))
    with pytest.raises(ContractError):
        build_flow_pyramid(base, [(8, 8, 4)])
    with pytest.raises(ContractError):
        build_flow_pyramid(base, [])


def test_identity_pyramid():
    pyramid = identity_flow_pyramid([(4, 4, 2), (2, 2, 2)])
    assert all(not f.data.any() for f in pyramid.flows)
    assert all((s.data == 1).all() for s in pyramid.scales)
