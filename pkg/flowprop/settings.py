"""
Run configuration assembled from a config file.

Each section maps onto one module's config dataclass. Values are converted
with the line of their key attached, and validation errors raised by the
dataclasses are re-pointed at the key they concern.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

from flowprop.aggregation import EmbeddingConfig
from flowprop.bench import BenchConfig
from flowprop.config import (
    ConfigFile, parse_bool, parse_int_list, parse_level_dims, parse_name_list, parse_pair,
)
from flowprop.detect import HeadConfig
from flowprop.errors import ConfigError
from flowprop.extractor import ExtractorConfig
from flowprop.flow import BlockMatchConfig
from flowprop.pipeline import PipelineConfig
from flowprop.synth import ObjectSpec, SynthConfig, default_objects

# section -> {key: (dataclass field, converter)}
EXTRACTOR_KEYS = {
    "seed": ("seed", int),
    "input_size": ("input_size", parse_pair),
    "level_dims": ("level_dims", parse_level_dims),
    "refine_depth": ("refine_depth", int),
}
FLOW_KEYS = {
    "block_radius": ("block_radius", int),
    "search_radius": ("search_radius", int),
    "texture_threshold": ("texture_threshold", float),
    "grid_stride": ("grid_stride", int),
}
EMBED_KEYS = {
    "seed": ("seed", int),
    "bias": ("bias", float),
}
HEAD_KEYS = {
    "seed": ("seed", int),
    "num_classes": ("num_classes", int),
    "anchors_per_cell": ("anchors_per_cell", int),
    "score_threshold": ("score_threshold", float),
    "nms_iou": ("nms_iou", float),
    "top_k": ("top_k", int),
    "max_detections": ("max_detections", int),
}
PIPELINE_KEYS = {
    "variant": ("variant", str),
    "key_interval": ("key_interval", int),
    "fa": ("enable_fa", parse_bool),
    "ma": ("enable_ma", parse_bool),
    "scale_map": ("enable_scale", parse_bool),
}
SYNTH_KEYS = {
    "size": ("size", parse_pair),
    "frames": ("frames", int),
    "objects": ("objects", int),
    "object_size": ("object_size", parse_pair),
    "velocity": ("velocity", parse_pair),
    "background": ("background", str),
    "noise": ("noise", float),
    "seed": ("seed", int),
}
OBJECT_KEYS = {
    "position": ("position", parse_pair),
    "size": ("size", parse_pair),
    "velocity": ("velocity", parse_pair),
    "class_id": ("class_id", int),
    "texture_seed": ("texture_seed", int),
}
BENCH_KEYS = {
    "variants": ("variants", parse_name_list),
    "key_intervals": ("key_intervals", parse_int_list),
    "repeats": ("repeats", int),
    "warmup": ("warmup", int),
    "parallel": ("parallel", parse_bool),
    "tolerance": ("tolerance", float),
}


def _read(cf: ConfigFile, section, keys):
    """Converted values of a section keyed by dataclass field name."""
    values = {}
    for key, raw in cf.section(section, keys).items():
        name, kind = keys[key]
        values[name] = cf.convert(section, key, raw, kind)
    return values


def _build(cf: ConfigFile, section, keys, cls, values):
    """Construct cls(**values); point validation errors at the key they name, else the section."""
    try:
        return cls(**values)
    except ConfigError as e:
        if e.line is not None:
            raise
        line = cf.line_of(section)
        for key, (name, _) in keys.items():
            if name in e.message and cf.line_of(section, key) is not None:
                line = cf.line_of(section, key)
                break
        raise ConfigError(e.message, line) from e


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    synth: SynthConfig | None = None
    bench: BenchConfig = field(default_factory=BenchConfig)

    def __post_init__(self):
        size = self.pipeline.extractor.input_size
        if self.synth is None:
            object.__setattr__(self, "synth", SynthConfig(size=size, objects=default_objects(size)))
        elif self.synth.size != size:
            raise ConfigError(f"synth size {self.synth.size} must match extractor input_size {size}")

    @classmethod
    def from_file(cls, cf: ConfigFile) -> RunConfig:
        extractor = _build(cf, "extractor", EXTRACTOR_KEYS, ExtractorConfig, _read(cf, "extractor", EXTRACTOR_KEYS))
        flow = _build(cf, "flow", FLOW_KEYS, BlockMatchConfig, _read(cf, "flow", FLOW_KEYS))
        embed = _build(cf, "embed", EMBED_KEYS, EmbeddingConfig, _read(cf, "embed", EMBED_KEYS))
        head = _build(cf, "head", HEAD_KEYS, HeadConfig, _read(cf, "head", HEAD_KEYS))

        values = _read(cf, "pipeline", PIPELINE_KEYS)
        variant = values.pop("variant", None)
        subconfigs = dict(extractor=extractor, embed=embed, flow=flow, head=head)
        if variant is not None:
            try:
                base = PipelineConfig.preset(variant, **subconfigs)
            except ConfigError as e:
                raise ConfigError(e.message, cf.line_of("pipeline", "variant")) from e
            pipeline = _build(cf, "pipeline", PIPELINE_KEYS, lambda **kw: replace(base, **kw), values)
        else:
            pipeline = _build(cf, "pipeline", PIPELINE_KEYS, PipelineConfig, {**subconfigs, **values})

        synth = cls._synth(cf, extractor.input_size)
        bench = _build(cf, "bench", BENCH_KEYS, BenchConfig, _read(cf, "bench", BENCH_KEYS))
        return cls(pipeline=pipeline, synth=synth, bench=bench)

    @staticmethod
    def _synth(cf: ConfigFile, input_size):
        values = _read(cf, "synth", SYNTH_KEYS)
        size = values.setdefault("size", input_size)
        if tuple(size) != tuple(input_size):
            raise ConfigError(f"synth size {tuple(size)} must match extractor input_size {tuple(input_size)}",
                              cf.line_of("synth", "size"))
        count = values.pop("objects", None)
        layout = {k: values.pop(k) for k in ("object_size", "velocity") if k in values}
        sections = cf.object_sections()
        objects = []
        for section in sections:
            fields = _read(cf, section, OBJECT_KEYS)
            if "position" not in fields:
                raise ConfigError(f"[{section}] needs a position", cf.line_of(section))
            objects.append(_build(cf, section, OBJECT_KEYS, ObjectSpec, fields))
        if not sections:
            kwargs = {"count": count} if count is not None else {}
            objects = default_objects(size, **kwargs, **layout)
        return _build(cf, "synth", SYNTH_KEYS, SynthConfig, {**values, "objects": tuple(objects)})

    def with_overrides(self, seed=None, key_interval=None, fa=None, ma=None, scale=None) -> RunConfig:
        """Apply command-line flags on top of the file values."""
        pipeline = self.pipeline.with_toggles(key_interval=key_interval, fa=fa, ma=ma, scale=scale)
        synth = self.synth if seed is None else replace(self.synth, seed=seed)
        return replace(self, pipeline=pipeline, synth=synth)
