"""Scenario configuration: flat dotted-key grammar, presets, validation.

Files are plain text, one ``key = value`` per line, ``#`` comments. Unknown
keys are rejected; every error is collected (with its line number) rather than
failing on the first.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Optional, Union

from .codec import CodecConfig
from .core import US_PER_S, WorkloadConfig
from .netsim import ChannelModel, LossModel
from .stages import OptimizationToggles

DEFAULT_DROP_DEADLINE_US = 33_334  # two 60-FPS frame periods
DEFAULT_SUPPRESSION_WINDOW_US = 200_000


class EncodeMode(Enum):
    SYNC = "SYNC"
    ASYNC = "ASYNC"


class ScenarioError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass
class ScenarioConfig:
    seed: int = 1
    duration_s: float = 60.0
    render_fps: int = 60
    encode_mode: EncodeMode = EncodeMode.ASYNC
    render_work_us: int = 11_100
    workload: WorkloadConfig = field(default_factory=WorkloadConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    toggles: OptimizationToggles = field(default_factory=OptimizationToggles)
    channel: ChannelModel = field(default_factory=ChannelModel)
    drop_deadline_us: int = DEFAULT_DROP_DEADLINE_US
    suppression_window_us: int = DEFAULT_SUPPRESSION_WINDOW_US
    trace_enabled: bool = False
    fault_drop_frame_id: int = -1  # inject loss of one fragment of this frame
    fault_drop_frag_index: int = -1  # -1 draws the fragment from the fault stream

    @property
    def duration_us(self) -> int:
        return round(self.duration_s * US_PER_S)

    def validate(self) -> list[str]:
        errors = []
        if self.seed < 0:
            errors.append("seed must be >= 0")
        if self.duration_s <= 0:
            errors.append("duration_s must be > 0")
        if self.render_fps <= 0:
            errors.append("render_fps must be > 0")
        if self.render_work_us < 0:
            errors.append("render_work_us must be >= 0")
        if self.workload.width <= 0 or self.workload.height <= 0:
            errors.append("workload.width and workload.height must be > 0")
        if self.workload.complexity_sigma < 0:
            errors.append("workload.complexity_sigma must be >= 0")
        errors.extend(self.codec.validate())
        errors.extend(self.channel.validate())
        if self.drop_deadline_us <= 0:
            errors.append("proto.drop_deadline_us must be > 0")
        if self.suppression_window_us < 0:
            errors.append("cp.suppression_window_us must be >= 0")
        return errors


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_fraction(raw: str) -> Fraction:
    return Fraction(raw.strip())


_Setter = tuple[Callable[[str], Any], Callable[[ScenarioConfig, Any], None]]


def _schema() -> dict[str, _Setter]:
    def set_attr(*path: str):
        def setter(cfg: ScenarioConfig, value: Any) -> None:
            obj = cfg
            for name in path[:-1]:
                obj = getattr(obj, name)
            setattr(obj, path[-1], value)

        return setter

    return {
        "seed": (int, set_attr("seed")),
        "duration_s": (float, set_attr("duration_s")),
        "render_fps": (int, set_attr("render_fps")),
        "encode_mode": (lambda s: EncodeMode(s.strip().upper()), set_attr("encode_mode")),
        "render_work_us": (int, set_attr("render_work_us")),
        "workload.width": (int, set_attr("workload", "width")),
        "workload.height": (int, set_attr("workload", "height")),
        "workload.complexity_sigma": (float, set_attr("workload", "complexity_sigma")),
        "codec.bitrate_bps": (int, set_attr("codec", "bitrate_bps")),
        "codec.fps": (int, set_attr("codec", "fps")),
        "codec.gop_size": (int, set_attr("codec", "gop_size")),
        "codec.p_to_i_ratio": (_parse_fraction, set_attr("codec", "p_to_i_ratio")),
        "codec.rgb_inflation": (float, set_attr("codec", "rgb_inflation")),
        "codec.decode_fps_cap": (int, set_attr("codec", "decode_fps_cap")),
        "toggles.transcode_avoidance": (_parse_bool, set_attr("toggles", "transcode_avoidance")),
        "toggles.shared_gpu_buffer": (_parse_bool, set_attr("toggles", "shared_gpu_buffer")),
        "toggles.direct_net_io": (_parse_bool, set_attr("toggles", "direct_net_io")),
        "toggles.p2p_topology": (_parse_bool, set_attr("toggles", "p2p_topology")),
        "toggles.feedback_control": (_parse_bool, set_attr("toggles", "feedback_control")),
        "channel.bandwidth_bps": (int, set_attr("channel", "bandwidth_bps")),
        "channel.prop_delay_us": (int, set_attr("channel", "prop_delay_us")),
        "channel.jitter_sigma_us": (float, set_attr("channel", "jitter_sigma_us")),
        "channel.loss_model": (lambda s: LossModel(s.strip().lower()), set_attr("channel", "loss_model")),
        "channel.loss_p": (float, set_attr("channel", "loss_p")),
        "channel.ge_p_gb": (float, set_attr("channel", "ge_p_gb")),
        "channel.ge_p_bg": (float, set_attr("channel", "ge_p_bg")),
        "channel.ge_loss_good": (float, set_attr("channel", "ge_loss_good")),
        "channel.ge_loss_bad": (float, set_attr("channel", "ge_loss_bad")),
        "proto.drop_deadline_us": (int, set_attr("drop_deadline_us")),
        "cp.suppression_window_us": (int, set_attr("suppression_window_us")),
        "trace.enabled": (_parse_bool, set_attr("trace_enabled")),
        "fault.drop_frame_id": (int, set_attr("fault_drop_frame_id")),
        "fault.drop_frag_index": (int, set_attr("fault_drop_frag_index")),
    }


SCHEMA = _schema()

PRESETS: dict[str, dict[str, str]] = {
    # conventional layered stack through an access point, conservative GOP
    "baseline": {
        "codec.gop_size": "20",
        "duration_s": "60",
    },
    # every optimization enabled, feedback-backed large GOP, direct link
    "openuvr": {
        "codec.gop_size": "480",
        "duration_s": "60",
        "toggles.transcode_avoidance": "true",
        "toggles.shared_gpu_buffer": "true",
        "toggles.direct_net_io": "true",
        "toggles.p2p_topology": "true",
        "toggles.feedback_control": "true",
    },
}


def apply_kv(
    cfg: ScenarioConfig, key: str, raw: str, errors: list[str], where: str = ""
) -> None:
    entry = SCHEMA.get(key)
    prefix = f"{where}: " if where else ""
    if entry is None:
        errors.append(f"{prefix}unknown key '{key}'")
        return
    convert, setter = entry
    try:
        setter(cfg, convert(raw))
    except (ValueError, ZeroDivisionError) as exc:
        errors.append(f"{prefix}invalid value for '{key}': {exc}")


def preset_config(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ScenarioError([f"unknown preset '{name}' (have: {', '.join(sorted(PRESETS))})"])
    cfg = ScenarioConfig()
    errors: list[str] = []
    for key, raw in PRESETS[name].items():
        apply_kv(cfg, key, raw, errors)
    if errors:  # presets are static; this guards against schema drift
        raise ScenarioError(errors)
    return cfg


def parse_scenario_text(
    text: str, base: Optional[ScenarioConfig] = None, source: str = "<config>"
) -> ScenarioConfig:
    cfg = copy.deepcopy(base) if base is not None else ScenarioConfig()
    errors: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"{source}:{lineno}: expected 'key = value'")
            continue
        key, raw = (part.strip() for part in stripped.split("=", 1))
        apply_kv(cfg, key, raw, errors, where=f"{source}:{lineno}")
    errors.extend(cfg.validate())
    if errors:
        raise ScenarioError(errors)
    return cfg


def parse_scenario(path: Union[str, Path], base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    p = Path(path)
    return parse_scenario_text(p.read_text(), base=base, source=str(p))


def to_flat_dict(cfg: ScenarioConfig) -> dict[str, str]:
    """Emit the full configuration in the file grammar (round-trips exactly)."""
    def fmt(value: Any) -> str:
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, (EncodeMode, LossModel)):
            return value.value
        if isinstance(value, Fraction):
            return f"{value.numerator}/{value.denominator}"
        if isinstance(value, float):
            return repr(value)
        return str(value)

    getters: dict[str, Any] = {
        "seed": cfg.seed,
        "duration_s": cfg.duration_s,
        "render_fps": cfg.render_fps,
        "encode_mode": cfg.encode_mode,
        "render_work_us": cfg.render_work_us,
        "workload.width": cfg.workload.width,
        "workload.height": cfg.workload.height,
        "workload.complexity_sigma": cfg.workload.complexity_sigma,
        "codec.bitrate_bps": cfg.codec.bitrate_bps,
        "codec.fps": cfg.codec.fps,
        "codec.gop_size": cfg.codec.gop_size,
        "codec.p_to_i_ratio": cfg.codec.p_to_i_ratio,
        "codec.rgb_inflation": cfg.codec.rgb_inflation,
        "codec.decode_fps_cap": cfg.codec.decode_fps_cap,
        "toggles.transcode_avoidance": cfg.toggles.transcode_avoidance,
        "toggles.shared_gpu_buffer": cfg.toggles.shared_gpu_buffer,
        "toggles.direct_net_io": cfg.toggles.direct_net_io,
        "toggles.p2p_topology": cfg.toggles.p2p_topology,
        "toggles.feedback_control": cfg.toggles.feedback_control,
        "channel.bandwidth_bps": cfg.channel.bandwidth_bps,
        "channel.prop_delay_us": cfg.channel.prop_delay_us,
        "channel.jitter_sigma_us": cfg.channel.jitter_sigma_us,
        "channel.loss_model": cfg.channel.loss_model,
        "channel.loss_p": cfg.channel.loss_p,
        "channel.ge_p_gb": cfg.channel.ge_p_gb,
        "channel.ge_p_bg": cfg.channel.ge_p_bg,
        "channel.ge_loss_good": cfg.channel.ge_loss_good,
        "channel.ge_loss_bad": cfg.channel.ge_loss_bad,
        "proto.drop_deadline_us": cfg.drop_deadline_us,
        "cp.suppression_window_us": cfg.suppression_window_us,
        "trace.enabled": cfg.trace_enabled,
        "fault.drop_frame_id": cfg.fault_drop_frame_id,
        "fault.drop_frag_index": cfg.fault_drop_frag_index,
    }
    return {key: fmt(value) for key, value in getters.items()}


def emit_scenario(cfg: ScenarioConfig) -> str:
    return "".join(f"{key} = {value}\n" for key, value in to_flat_dict(cfg).items())


def with_toggle(cfg: ScenarioConfig, toggle: str, value: bool) -> ScenarioConfig:
    if toggle not in cfg.toggles.as_dict():
        raise ScenarioError([f"unknown toggle '{toggle}'"])
    toggles = replace(cfg.toggles, **{toggle: value})
    return replace(cfg, toggles=toggles)
