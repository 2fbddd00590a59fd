"""
Run configuration: one flat ``section.key = value`` file, overridable from the
command line, resolved into the per-component configuration dataclasses.

    # comments start with '#'
    sensor.width = 1280
    track.gate_px = 50
    track.q_diag = 1, 1, 0.25, 0.25
"""
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from src.components.count import CountConfig
from src.components.detect import DetectionConfig
from src.components.evaluation import EvaluationConfig
from src.components.event_io import StreamConfig
from src.components.framing import FramingConfig
from src.components.preprocess import CalibrationConfig, PreprocessConfig
from src.components.simgen import SceneSpec, parse_arena, parse_hot_pixels, parse_occlusions, parse_poses
from src.components.track import TrackerConfig
from src.exception import ConfigError, ZebrafishCountError
from src.logger import logging


def _opt(parse: Callable[[str], object]) -> Callable[[str], object]:
    def parse_optional(text: str):
        return None if text.strip().lower() in ("", "none") else parse(text)
    return parse_optional


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("true", "yes", "on", "1"):
        return True
    if value in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _str(text: str) -> str:
    return text.strip()


# key -> (section, field, parser)
KEYS: Dict[str, Tuple[str, str, Callable[[str], object]]] = {
    "sensor.width": ("stream", "width", int),
    "sensor.height": ("stream", "height", int),
    "framing.fps": ("framing", "fps", float),
    "framing.origin_us": ("framing", "origin_us", _opt(int)),
    "preprocess.fpn_threshold": ("preprocess", "fpn_threshold", float),
    "preprocess.dark_events": ("preprocess", "dark_events", _opt(_str)),
    "preprocess.dark_duration_s": ("preprocess", "dark_duration_s", float),
    "detect.detector": ("detection", "detector", _str),
    "detect.min_area": ("detection", "min_area", int),
    "detect.max_area": ("detection", "max_area", int),
    "detect.detections_path": ("detection", "detections_path", _opt(_str)),
    "track.q_diag": ("tracker", "q_diag", _floats),
    "track.r_diag": ("tracker", "r_diag", _floats),
    "track.p0_diag": ("tracker", "p0_diag", _floats),
    "track.gate_px": ("tracker", "gate_px", float),
    "track.min_hits": ("tracker", "min_hits", int),
    "track.max_coast": ("tracker", "max_coast", int),
    "count.window_s": ("count", "window_s", float),
    "count.true_count": ("count", "true_count", _opt(int)),
    "eval.iou_threshold": ("evaluation", "iou_threshold", float),
    "eval.include_coasting": ("evaluation", "include_coasting", _bool),
    "sim.n_fish": ("scene", "n_fish", int),
    "sim.fish_length": ("scene", "fish_length", float),
    "sim.fish_width": ("scene", "fish_width", float),
    "sim.speed_min": ("scene", "speed_min", float),
    "sim.speed_max": ("scene", "speed_max", float),
    "sim.turn_std": ("scene", "turn_std", float),
    "sim.duration_s": ("scene", "duration_s", float),
    "sim.fps": ("scene", "fps", float),
    "sim.gray_min": ("scene", "gray_min", int),
    "sim.gray_max": ("scene", "gray_max", int),
    "sim.hot_pixels": ("scene", "hot_pixels", parse_hot_pixels),
    "sim.n_hot_pixels": ("scene", "n_hot_pixels", int),
    "sim.hot_pixel_rate": ("scene", "hot_pixel_rate", float),
    "sim.occlusions": ("scene", "occlusions", parse_occlusions),
    "sim.arena": ("scene", "arena", parse_arena),
    "sim.initial_poses": ("scene", "initial_poses", parse_poses),
    "sim.occluder_margin_px": ("scene", "occluder_margin_px", int),
    "sim.reflections": ("scene", "reflections", _bool),
    "sim.wingman_offset_px": ("scene", "wingman_offset_px", _opt(float)),
    "sim.flex_px": ("scene", "flex_px", float),
    "seed": ("root", "seed", int),
}
KEYS.update({f"calibration.{k}": ("calibration", k, _opt(float)) for k in ("fx", "fy", "cx", "cy")})
KEYS.update({f"calibration.{k}": ("calibration", k, float) for k in ("k1", "k2", "k3", "p1", "p2")})

SECTIONS = {
    "stream": StreamConfig,
    "framing": FramingConfig,
    "preprocess": PreprocessConfig,
    "calibration": CalibrationConfig,
    "detection": DetectionConfig,
    "tracker": TrackerConfig,
    "count": CountConfig,
    "evaluation": EvaluationConfig,
}


@dataclass
class PipelineConfig:
    """Every component's configuration for one run."""
    stream: StreamConfig = field(default_factory=StreamConfig)
    framing: FramingConfig = field(default_factory=FramingConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    count: CountConfig = field(default_factory=CountConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    scene: SceneSpec = field(default_factory=SceneSpec)


@dataclass(frozen=True)
class _Setting:
    key: str
    value: str
    where: str


def read_settings(path: Union[str, os.PathLike]) -> List[_Setting]:
    """Raw `key = value` lines of a config file, with their file:line."""
    settings = []
    try:
        with open(path, "r") as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}") from e
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        settings.append(_Setting(key.strip(), value.strip(), f"{path}:{number}"))
    return settings


def parse_overrides(overrides: Sequence[str]) -> List[_Setting]:
    settings = []
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected key=value")
        key, value = item.split("=", 1)
        settings.append(_Setting(key.strip(), value.strip(), f"--set {key.strip()}"))
    return settings


def build_config(settings: Sequence[_Setting]) -> PipelineConfig:
    """
    Resolve settings (later ones win) into a validated PipelineConfig.

    Raises:
        ConfigError: Unknown key, unparsable value or out-of-range value, naming
            where the offending setting came from.
    """
    values: Dict[str, Dict[str, object]] = {name: {} for name in list(SECTIONS) + ["scene", "root"]}
    origin: Dict[str, str] = {}
    for s in settings:
        if s.key not in KEYS:
            raise ConfigError(f"{s.where}: unknown key {s.key!r}")
        section, name, parse = KEYS[s.key]
        try:
            values[section][name] = parse(s.value)
        except (ValueError, ZebrafishCountError) as e:
            raise ConfigError(f"{s.where}: bad value for {s.key}: {e}") from e
        origin.setdefault(section, s.where)
        origin[f"{section}.{name}"] = s.where

    def where(section: str) -> str:
        return origin.get(section, "config")

    built = {}
    for section, cls in SECTIONS.items():
        try:
            built[section] = cls(**values[section])
        except (ValueError, TypeError, ZebrafishCountError) as e:
            raise ConfigError(f"{where(section)}: invalid {section} settings: {e}") from e

    seed = values["root"].get("seed", 0)
    scene_values = dict(values["scene"])
    scene_values.setdefault("width", built["stream"].width)
    scene_values.setdefault("height", built["stream"].height)
    scene_values.setdefault("fps", built["framing"].fps)
    scene_values.setdefault("seed", seed)
    try:
        scene = SceneSpec(**scene_values)
    except (ValueError, TypeError, ZebrafishCountError) as e:
        raise ConfigError(f"{where('scene')}: invalid sim settings: {e}") from e
    return PipelineConfig(scene=scene, **built)


def load_config(path: Optional[Union[str, os.PathLike]] = None, overrides: Sequence[str] = ()) -> PipelineConfig:
    """
    Load a config file (or the defaults when path is None) and apply `key=value` overrides.

    Raises:
        ConfigError
    """
    settings = read_settings(path) if path is not None else []
    settings += parse_overrides(overrides)
    config = build_config(settings)
    logging.info(f"Loaded configuration from {path or 'defaults'} with {len(overrides)} overrides")
    return config
