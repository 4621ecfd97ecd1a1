import numpy as np
import pytest

from flowprop.synth import (
    ObjectSpec, SynthConfig, generate_sequence, synth_extractor_config, synth_flow_config,
)
from flowprop.pipeline import PipelineConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def small_extractor():
    """32 x 32 input, three levels of 4 channels: 16, 8, 4 cells per side."""
    return synth_extractor_config((32, 32), channels=4, num_levels=3)


@pytest.fixture
def small_pipeline_config(small_extractor):
    return PipelineConfig(extractor=small_extractor, flow=synth_flow_config(search_radius=2))


@pytest.fixture
def static_sequence():
    objects = (ObjectSpec((8, 10), size=(10, 12), velocity=(0, 0)),)
    return generate_sequence(SynthConfig(size=(32, 32), frames=12, objects=objects))


@pytest.fixture(scope="session")
def moving_sequence():
    """One 32 x 32 object moving 2 px/frame to the right over 64 x 64 frames."""
    objects = (ObjectSpec((4, 16), size=(32, 32), velocity=(2, 0), texture_seed=3),)
    return generate_sequence(SynthConfig(size=(64, 64), frames=12, objects=objects, seed=11))


@pytest.fixture
def write_config(tmp_path):
    """Write INI text to a file and return its path."""
    def write(text, name="run.ini"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return write
