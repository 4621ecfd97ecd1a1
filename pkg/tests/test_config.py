from pathlib import Path

import pytest

from flowprop.config import load_config, parse_bool, parse_level_dims, parse_pair
from flowprop.errors import ConfigError
from flowprop.settings import RunConfig

DEFAULT_INI = Path(__file__).resolve().parents[1] / "configs" / "default.ini"

SMALL = """\
[extractor]
input_size = 64, 64
level_dims = 32x32x4, 16x16x4
"""


def _line_of_error(write_config, text):
    with pytest.raises(ConfigError) as info:
        load_config(write_config(text))
    return info.value.line


def test_shipped_config_loads():
    config = load_config(DEFAULT_INI)
    assert config.pipeline.variant == "fa+scale+ma"
    assert config.pipeline.key_interval == 10
    assert config.pipeline.extractor.refine_depth == 2
    assert config.synth.size == (300, 300)
    assert len(config.synth.objects) == 2
    assert config.bench.key_intervals == (2, 4, 6, 8, 10)


def test_defaults_without_a_file():
    config = RunConfig()
    assert config.synth.size == config.pipeline.extractor.input_size


def test_bad_value_points_at_its_line(write_config):
    assert _line_of_error(write_config, "[flow]\nblock_radius = 3\nsearch_radius = many\n") == 3


def test_validation_error_points_at_the_key(write_config):
    assert _line_of_error(write_config, "[flow]\nblock_radius = 3\n\nsearch_radius = 0\n") == 4


def test_unknown_key_and_section(write_config):
    assert _line_of_error(write_config, "[head]\nseed = 1\ncolour = red\n") == 3
    assert _line_of_error(write_config, "[flow]\ngrid_stride = 4\n\n[optics]\nzoom = 2\n") == 4
    assert _line_of_error(write_config, "[head]\nseed = 1\n[optics]\nzoom = 2\n") == 3


def test_key_outside_section(write_config):
    assert _line_of_error(write_config, "seed = 1\n") == 1


def test_duplicate_key(write_config):
    assert _line_of_error(write_config, "[head]\nseed = 1\nseed = 2\n") == 3


def test_error_message_carries_the_line(write_config):
    with pytest.raises(ConfigError, match=r"^line 2: "):
        load_config(write_config("[pipeline]\nkey_interval = 0\n"))


def test_aggregation_without_approximation(write_config):
    assert _line_of_error(write_config, "[pipeline]\nfa = false\nma = true\n") == 1


def test_variant_with_overrides(write_config):
    config = load_config(write_config("[pipeline]\nvariant = fa\nkey_interval = 4\n"))
    assert (config.pipeline.enable_fa, config.pipeline.enable_scale, config.pipeline.enable_ma) == (True, False, False)
    assert config.pipeline.key_interval == 4


def test_unknown_variant(write_config):
    assert _line_of_error(write_config, "[bench]\nrepeats = 1\n[pipeline]\nvariant = dff\n") == 4


def test_object_sections(write_config):
    config = load_config(write_config(SMALL + """
[object.2]
position = 30, 30
size = 8, 8
velocity = 0, 0

[object.1]
position = 4, 8
size = 8, 16
velocity = 1, 0
class_id = 2
"""))
    objects = config.synth.objects
    assert [o.position for o in objects] == [(4, 8), (30, 30)]
    assert objects[0].size == (8, 16) and objects[0].class_id == 2
    assert config.synth.size == (64, 64)


def test_object_needs_a_position(write_config):
    assert _line_of_error(write_config, SMALL + "[object.1]\nsize = 8, 8\n") == 4


def test_synth_layout_keys(write_config):
    config = load_config(write_config(SMALL + "[synth]\nobjects = 3\nobject_size = 8, 8\nvelocity = 1, 0\n"))
    assert len(config.synth.objects) == 3
    assert all(o.size == (8, 8) and o.velocity == (1, 0) for o in config.synth.objects)


def test_synth_size_must_match_extractor(write_config):
    assert _line_of_error(write_config, SMALL + "[synth]\nsize = 32, 32\n") == 5


def test_command_line_overrides():
    config = RunConfig().with_overrides(seed=5, key_interval=3, fa=False)
    assert config.synth.seed == 5
    assert config.pipeline.key_interval == 3
    assert not config.pipeline.enable_fa and not config.pipeline.enable_ma
    assert config.pipeline.variant == "ssd"


def test_value_parsers():
    assert parse_bool(" Yes ") is True and parse_bool("off") is False
    assert parse_pair("3, 4") == (3, 4)
    assert parse_level_dims("38x38x16, 19X19X8") == [(38, 38, 16), (19, 19, 8)]
    with pytest.raises(ValueError):
        parse_pair("1, 2, 3")
    with pytest.raises(ValueError):
        parse_level_dims("38x38")
