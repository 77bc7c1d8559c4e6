"""Flat ``key = value`` pipeline configuration with dotted section prefixes.

Every key has a default; unknown keys and ill-typed values are rejected with
the offending key named in the error.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .datasetgen import DatasetParams, DegradeParams, JitterParams, TrimapParams
from .learner import TrainConfig, parse_layers
from .motionseg import SaliencyParams, UNLCConfig
from .optflow import FlowParams
from .shotprune import PruneParams


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, object] = {
    "seed": 0,
    "workers": 1,
    "io.frames": "",
    "io.segments": "",
    "io.prune_report": "",
    "io.checkpoint": "",
    "io.mask": "",
    "flow.pyramid_levels": 3,
    "flow.iterations_per_level": 5,
    "flow.window_radius": 2,
    "saliency.static_motion_threshold": 1.0,
    "saliency.static_frame_fraction": 0.25,
    "saliency.angle_bins": 8,
    "superpixel.regions": 300,
    "superpixel.compactness": 10.0,
    "superpixel.iterations": 10,
    "graph.hist_bins": 16,
    "graph.hog_cells": 4,
    "graph.hog_bins": 9,
    "graph.k": 8,
    "graph.w_loc": 1.0,
    "graph.w_color": 1.0,
    "graph.w_hog": 1.0,
    "graph.prop_iterations": 10,
    "graph.damping": 0.5,
    "shots.hist_bins": 16,
    "shots.cut_threshold": 0.3,
    "prune.max_fg_fraction": 0.80,
    "prune.min_fg_fraction": 0.10,
    "prune.border_band_fraction": 0.05,
    "prune.max_border_fg_fraction": 0.10,
    "prune.binarize_threshold": 0.5,
    "jitter.scale_min": 0.8,
    "jitter.scale_max": 1.25,
    "jitter.translate_range": 0.15,
    "jitter.context_pad": 0.25,
    "trimap.neg_threshold": 0.4,
    "trimap.pos_threshold": 0.7,
    "degrade.mode": "none",
    "degrade.kernel_size": 5,
    "degrade.truncate_fraction": 0.25,
    "dataset.w": 64,
    "dataset.s": 16,
    "dataset.source": "segments",
    "dataset.sample_per_shot": True,
    "train.layers": "conv:8:3:2 relu conv:16:3:2 relu conv:32:3:2 relu",
    "train.learning_rate": 0.001,
    "train.momentum": 0.9,
    "train.batch_size": 8,
    "train.epochs": 30,
    "infer.threshold": 0.5,
    "synth.kind": "squares",
    "synth.count": 4,
    "synth.size": 64,
    "synth.frames": 8,
    "synth.speed": 4,
    "synth.fg_fraction": 0.10,
    "synth.static": False,
    "overlay.color": "255,0,0",
}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {type(default).__name__}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    values = dict(DEFAULTS)
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def format_config(values: dict[str, object]) -> str:
    def fmt(v):
        return str(v).lower() if isinstance(v, bool) else str(v)
    return "".join(f"{k} = {fmt(v)}\n" for k, v in values.items())


@dataclass
class PipelineConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def section(self, prefix: str) -> dict:
        return {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith(prefix + ".")}

    def _build(self, prefix, factory, **kwargs):
        try:
            return factory(**kwargs)
        except (ValueError, TypeError) as e:
            keys = ", ".join(f"{prefix}.{k}" for k in self.section(prefix))
            raise ConfigError(f"invalid {prefix} settings ({keys}): {e}") from None

    @property
    def flow(self) -> FlowParams:
        return self._build("flow", FlowParams, **self.section("flow"))

    @property
    def saliency(self) -> SaliencyParams:
        return self._build("saliency", SaliencyParams, **self.section("saliency"))

    @property
    def unlc(self) -> UNLCConfig:
        sp, g = self.section("superpixel"), self.section("graph")
        if sp["regions"] < 1 or sp["iterations"] < 1 or sp["compactness"] <= 0:
            raise ConfigError("superpixel.regions, superpixel.iterations must be >= 1 and "
                              "superpixel.compactness > 0")
        if g["k"] < 1 or g["prop_iterations"] < 0 or not 0 <= g["damping"] <= 1:
            raise ConfigError("graph.k must be >= 1, graph.prop_iterations >= 0, "
                              "graph.damping in [0, 1]")
        if min(g["w_loc"], g["w_color"], g["w_hog"]) < 0:
            raise ConfigError("graph.w_loc, graph.w_color, graph.w_hog must be >= 0")
        return UNLCConfig(self.saliency, sp["regions"], sp["compactness"], sp["iterations"],
                          g["hist_bins"], g["hog_cells"], g["hog_bins"], g["k"],
                          (g["w_loc"], g["w_color"], g["w_hog"]), g["prop_iterations"], g["damping"])

    @property
    def prune(self) -> PruneParams:
        return self._build("prune", PruneParams, **self.section("prune"))

    @property
    def jitter(self) -> JitterParams:
        j = self.section("jitter")
        return self._build("jitter", JitterParams, scale_range=(j["scale_min"], j["scale_max"]),
                           translate_range=j["translate_range"], context_pad=j["context_pad"],
                           rng_seed=self["seed"])

    @property
    def trimap(self) -> TrimapParams:
        return self._build("trimap", TrimapParams, **self.section("trimap"))

    @property
    def degrade(self) -> DegradeParams:
        return self._build("degrade", DegradeParams, **self.section("degrade"))

    @property
    def dataset(self) -> DatasetParams:
        d = self.section("dataset")
        if d["w"] < 1 or d["s"] < 1:
            raise ConfigError("dataset.w and dataset.s must be >= 1")
        if d["source"] not in ("segments", "gt"):
            raise ConfigError(f"dataset.source must be 'segments' or 'gt', got {d['source']!r}")
        return DatasetParams(d["w"], d["s"], self["seed"], self.jitter, self.trimap, self.degrade,
                             d["sample_per_shot"])

    @property
    def layers(self) -> tuple:
        try:
            return parse_layers(self["train.layers"])
        except (ValueError, TypeError) as e:
            raise ConfigError(f"train.layers: {e}") from None

    @property
    def train(self) -> TrainConfig:
        t = self.section("train")
        return self._build("train", TrainConfig, learning_rate=t["learning_rate"],
                           momentum=t["momentum"], batch_size=t["batch_size"],
                           epochs=t["epochs"], rng_seed=self["seed"])

    @property
    def overlay_color(self) -> tuple[int, int, int]:
        try:
            rgb = tuple(int(c) for c in self["overlay.color"].split(","))
        except ValueError:
            rgb = ()
        if len(rgb) != 3 or not all(0 <= c <= 255 for c in rgb):
            raise ConfigError("overlay.color must be three integers in 0..255, e.g. 255,0,0")
        return rgb

    def validate(self) -> None:
        """Build every section once so invariant violations surface up front."""
        for name in ("flow", "unlc", "prune", "dataset", "layers", "train", "overlay_color"):
            getattr(self, name)
        if self["workers"] < 1:
            raise ConfigError("workers must be >= 1")
        if not 0 <= self["infer.threshold"] <= 1:
            raise ConfigError("infer.threshold must be in [0, 1]")
        if self["synth.kind"] not in ("squares", "shapes"):
            raise ConfigError("synth.kind must be 'squares' or 'shapes'")
        if not 0 < self["synth.fg_fraction"] < 1 or min(self["synth.size"], self["synth.frames"],
                                                          self["synth.count"]) < 1:
            raise ConfigError("synth.fg_fraction must be in (0, 1) and synth.size, synth.frames, "
                              "synth.count >= 1")


def load_config(path: str | os.PathLike | None = None, overrides: dict | None = None) -> PipelineConfig:
    values = dict(DEFAULTS) if path is None else parse_config_text(Path(path).read_text(), str(path))
    for key, val in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, str(val)) if isinstance(val, str) else val
    cfg = PipelineConfig(values)
    cfg.validate()
    return cfg
