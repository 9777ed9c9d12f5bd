"""Plain-text key-value configuration files.

Format: one ``key = value`` pair per line, ``#`` or ``;`` comments, blank
lines ignored.  Dotted keys group related values, e.g. ``steps_per_mm.x``.
Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .detect import DetectionConfig
from .gcode import Command, parse_line
from .planner import AxisValues, DEFAULT_PROFILE, PrinterProfile
from .tracesim import DEFAULT_NOISE, NoiseModel

__all__ = ["ConfigError", "parse_kv_text", "load_profile", "load_noise", "read_kv_file"]


class ConfigError(ValueError):
    """Unusable configuration file."""


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    pairs: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{line_no}: empty key")
        if key in pairs:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def read_kv_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_kv_text(text, source=str(path))


_PROFILE_KEYS = {
    f"{group}.{axis}" for group in ("steps_per_mm", "max_feed") for axis in "xyze"
} | {"rated_phase_current", "default_feed"}

_NOISE_KEYS = {"idle_noise_sd", "phase_jitter_sd", "amplitude_noise_sd", "seed"}


def load_profile(path: str | Path) -> PrinterProfile:
    """Load a printer profile; missing keys fall back to the default profile."""
    pairs = read_kv_file(path)
    unknown = set(pairs) - _PROFILE_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown profile keys {sorted(unknown)}")
    return profile_from_pairs(pairs, source=str(path))


def profile_from_pairs(pairs: dict[str, str], source: str = "<config>") -> PrinterProfile:
    def axis_values(group: str, default: AxisValues) -> AxisValues:
        return AxisValues(
            **{
                axis: _get_float(pairs, f"{group}.{axis}", getattr(default, axis), source)
                for axis in "xyze"
            }
        )

    try:
        return PrinterProfile(
            steps_per_mm=axis_values("steps_per_mm", DEFAULT_PROFILE.steps_per_mm),
            max_feed=axis_values("max_feed", DEFAULT_PROFILE.max_feed),
            rated_phase_current=_get_float(
                pairs, "rated_phase_current", DEFAULT_PROFILE.rated_phase_current, source
            ),
            default_feed=_get_float(pairs, "default_feed", DEFAULT_PROFILE.default_feed, source),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_noise(path: str | Path) -> NoiseModel:
    pairs = read_kv_file(path)
    unknown = set(pairs) - _NOISE_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown noise keys {sorted(unknown)}")
    return noise_from_pairs(pairs, source=str(path))


def noise_from_pairs(pairs: dict[str, str], source: str = "<config>") -> NoiseModel:
    try:
        return NoiseModel(
            idle_noise_sd=_get_float(pairs, "idle_noise_sd", DEFAULT_NOISE.idle_noise_sd, source),
            phase_jitter_sd=_get_float(
                pairs, "phase_jitter_sd", DEFAULT_NOISE.phase_jitter_sd, source
            ),
            amplitude_noise_sd=_get_float(
                pairs, "amplitude_noise_sd", DEFAULT_NOISE.amplitude_noise_sd, source
            ),
            seed=_get_int(pairs, "seed", DEFAULT_NOISE.seed, source),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def detection_from_pairs(pairs: dict[str, str], source: str = "<config>") -> DetectionConfig:
    base = DetectionConfig()
    try:
        return DetectionConfig(
            smoothing_window=_get_int(pairs, "smoothing_window", base.smoothing_window, source),
            margin=_get_float(pairs, "margin", base.margin, source),
            run_requirement=_get_int(pairs, "run_requirement", base.run_requirement, source),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def _get_float(pairs: dict[str, str], key: str, default: float, source: str) -> float:
    if key not in pairs:
        return default
    try:
        return float(pairs[key])
    except ValueError:
        raise ConfigError(f"{source}: key {key!r} is not a number: {pairs[key]!r}") from None


def _get_int(pairs: dict[str, str], key: str, default: int, source: str) -> int:
    if key not in pairs:
        return default
    try:
        return int(pairs[key])
    except ValueError:
        raise ConfigError(f"{source}: key {key!r} is not an integer: {pairs[key]!r}") from None


def _get_bool(pairs: dict[str, str], key: str, default: bool, source: str) -> bool:
    if key not in pairs:
        return default
    value = pairs[key].lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{source}: key {key!r} is not a boolean: {pairs[key]!r}")


def parse_payload(text: str, source: str = "<config>") -> Command:
    """Parse an attack payload command given as a G-code line."""
    from .gcode import CommandKind, GCodeError

    try:
        command = parse_line(text)
    except GCodeError as exc:
        raise ConfigError(f"{source}: bad payload {text!r}: {exc}") from None
    if command.kind is CommandKind.OTHER:
        raise ConfigError(f"{source}: payload {text!r} is not a supported command")
    return dataclasses.replace(command, raw_text=None)
