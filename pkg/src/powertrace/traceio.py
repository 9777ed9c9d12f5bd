"""Capture persistence and alignment.

Defines the binary capture container (magic ``PTRC``) that real oscilloscope
exports would be converted into, a CSV importer for lab interchange, and the
trigger-alignment / common-window helpers every comparison relies on.  The
baseline container (magic ``PTRB``) reuses the same header layout with the
golden statistics appended.

All integers and floats are little-endian; samples are float32.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .detect import GoldenBaseline
from .planner import MOTORS, Motor
from .tracesim import MotorTrace

__all__ = [
    "CaptureFormatError",
    "CaptureIOError",
    "TRACE_MAGIC",
    "BASELINE_MAGIC",
    "FORMAT_VERSION",
    "save_trace",
    "load_trace",
    "import_csv",
    "align_to_trigger",
    "common_window",
    "save_baseline",
    "load_baseline",
]

TRACE_MAGIC = b"PTRC"
BASELINE_MAGIC = b"PTRB"
FORMAT_VERSION = 1
_UNITS_AMPS = 0

# magic, version, motor code, units code, sample_rate, trigger_index, sample_count
_TRACE_HEADER = struct.Struct("<4sHBBdQQ")
# magic, version, motor code, units code, sample_rate, source_count,
# print_end_index, sample_count, peak_sd
_BASELINE_HEADER = struct.Struct("<4sHBBdQQQd")

_CSV_UNIFORMITY_TOL = 1e-6  # 1 ppm


class CaptureFormatError(ValueError):
    """File is not a valid capture/baseline container."""


class CaptureIOError(OSError):
    """I/O failure, annotated with the path involved."""


def save_trace(trace: MotorTrace, path: str | Path) -> None:
    """Write a trace; ``load_trace`` returns it bit-exactly."""
    path = Path(path)
    header = _TRACE_HEADER.pack(
        TRACE_MAGIC,
        FORMAT_VERSION,
        trace.motor.code,
        _UNITS_AMPS,
        float(trace.sample_rate),
        int(trace.trigger_index),
        len(trace.samples),
    )
    body = np.ascontiguousarray(trace.samples, dtype="<f4").tobytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(header + body)
    except OSError as exc:
        raise CaptureIOError(f"{path}: {exc}") from exc


def load_trace(path: str | Path) -> MotorTrace:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CaptureIOError(f"{path}: {exc}") from exc
    if len(blob) < _TRACE_HEADER.size:
        raise CaptureFormatError(f"{path}: truncated header")
    magic, version, motor_code, units, rate, trigger, count = _TRACE_HEADER.unpack_from(blob)
    if magic != TRACE_MAGIC:
        raise CaptureFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CaptureFormatError(f"{path}: unsupported version {version}")
    if units != _UNITS_AMPS:
        raise CaptureFormatError(f"{path}: unknown units code {units}")
    body = blob[_TRACE_HEADER.size :]
    expected = count * 4
    if len(body) < expected:
        raise CaptureFormatError(f"{path}: unexpected end of samples")
    if len(body) > expected:
        raise CaptureFormatError(f"{path}: trailing bytes after samples")
    samples = np.frombuffer(body, dtype="<f4", count=count)
    return MotorTrace(
        motor=_motor_from_code(motor_code, path),
        sample_rate=rate,
        samples=samples,
        trigger_index=trigger,
    )


def import_csv(
    path: str | Path,
    motor: Motor,
    sample_rate: float | None = None,
    trigger_index: int = 0,
) -> MotorTrace:
    """Read a one-column (amplitude) or two-column (time, amplitude) CSV.

    No resampling is performed: a time column must be uniform to within 1 ppm
    or the import fails.  For one-column files ``sample_rate`` is required;
    for two-column files it is derived from the time column and, when also
    given, cross-checked against it.  An optional header row is skipped.
    """
    path = Path(path)
    try:
        with path.open(newline="") as handle:
            rows = [row for row in csv.reader(handle) if row]
    except OSError as exc:
        raise CaptureIOError(f"{path}: {exc}") from exc
    if rows and not _is_numeric_row(rows[0]):
        rows = rows[1:]
    if not rows:
        raise CaptureFormatError(f"{path}: no data rows")
    widths = {len(row) for row in rows}
    if widths not in ({1}, {2}):
        raise CaptureFormatError(f"{path}: expected 1 or 2 columns, got {sorted(widths)}")

    try:
        values = np.array([[float(cell) for cell in row] for row in rows], dtype=np.float64)
    except ValueError as exc:
        raise CaptureFormatError(f"{path}: non-numeric cell ({exc})") from None

    if values.shape[1] == 1:
        if sample_rate is None:
            raise CaptureFormatError(f"{path}: sample_rate required for amplitude-only CSV")
        amplitudes = values[:, 0]
        rate = float(sample_rate)
    else:
        times, amplitudes = values[:, 0], values[:, 1]
        if len(times) < 2:
            raise CaptureFormatError(f"{path}: need at least 2 rows to derive sample rate")
        deltas = np.diff(times)
        dt = deltas[0]
        if dt <= 0 or np.any(np.abs(deltas - dt) > _CSV_UNIFORMITY_TOL * abs(dt)):
            raise CaptureFormatError(f"{path}: time column is not uniform within 1 ppm")
        rate = 1.0 / dt
        if sample_rate is not None and abs(rate - sample_rate) > _CSV_UNIFORMITY_TOL * sample_rate:
            raise CaptureFormatError(
                f"{path}: time column implies {rate:.3f} S/s, expected {sample_rate:.3f}"
            )
    return MotorTrace(
        motor=motor,
        sample_rate=rate,
        samples=amplitudes.astype(np.float32),
        trigger_index=trigger_index,
    )


def align_to_trigger(trace: MotorTrace) -> MotorTrace:
    """Drop everything before the trigger; the trigger becomes sample 0."""
    if trace.trigger_index >= len(trace.samples):
        raise CaptureFormatError(
            f"trigger index {trace.trigger_index} beyond trace length {len(trace.samples)}"
        )
    if trace.trigger_index == 0:
        return trace
    return MotorTrace(
        motor=trace.motor,
        sample_rate=trace.sample_rate,
        samples=trace.samples[trace.trigger_index :],
        trigger_index=0,
    )


def common_window(traces: list[MotorTrace]) -> list[MotorTrace]:
    """Truncate aligned traces to the minimum common length."""
    if not traces:
        return []
    rates = {trace.sample_rate for trace in traces}
    if len(rates) != 1:
        raise CaptureFormatError(f"mixed sample rates: {sorted(rates)}")
    shortest = min(len(trace.samples) for trace in traces)
    out = []
    for trace in traces:
        if len(trace.samples) == shortest:
            out.append(trace)
        else:
            out.append(
                MotorTrace(
                    motor=trace.motor,
                    sample_rate=trace.sample_rate,
                    samples=trace.samples[:shortest],
                    trigger_index=min(trace.trigger_index, shortest - 1),
                )
            )
    return out


def save_baseline(baseline: GoldenBaseline, path: str | Path) -> None:
    """Persist a baseline: header, mean (f64), sd (f64), reference (f32)."""
    path = Path(path)
    header = _BASELINE_HEADER.pack(
        BASELINE_MAGIC,
        FORMAT_VERSION,
        baseline.motor.code,
        _UNITS_AMPS,
        float(baseline.sample_rate),
        baseline.source_count,
        baseline.print_end_index,
        baseline.sample_count,
        baseline.peak_sd,
    )
    blob = (
        header
        + np.ascontiguousarray(baseline.pointwise_mean, dtype="<f8").tobytes()
        + np.ascontiguousarray(baseline.pointwise_sd, dtype="<f8").tobytes()
        + np.ascontiguousarray(baseline.reference_trace.samples, dtype="<f4").tobytes()
    )
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(blob)
    except OSError as exc:
        raise CaptureIOError(f"{path}: {exc}") from exc


def load_baseline(path: str | Path) -> GoldenBaseline:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CaptureIOError(f"{path}: {exc}") from exc
    if len(blob) < _BASELINE_HEADER.size:
        raise CaptureFormatError(f"{path}: truncated header")
    (
        magic,
        version,
        motor_code,
        units,
        rate,
        source_count,
        print_end_index,
        count,
        peak_sd,
    ) = _BASELINE_HEADER.unpack_from(blob)
    if magic != BASELINE_MAGIC:
        raise CaptureFormatError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise CaptureFormatError(f"{path}: unsupported version {version}")
    if units != _UNITS_AMPS:
        raise CaptureFormatError(f"{path}: unknown units code {units}")
    offset = _BASELINE_HEADER.size
    expected = offset + count * 8 * 2 + count * 4
    if len(blob) < expected:
        raise CaptureFormatError(f"{path}: unexpected end of samples")
    if len(blob) > expected:
        raise CaptureFormatError(f"{path}: trailing bytes after samples")
    mean = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    offset += count * 8
    sd = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
    offset += count * 8
    reference = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
    motor = _motor_from_code(motor_code, path)
    return GoldenBaseline(
        motor=motor,
        sample_rate=rate,
        pointwise_mean=mean,
        pointwise_sd=sd,
        peak_sd=peak_sd,
        reference_trace=MotorTrace(
            motor=motor, sample_rate=rate, samples=reference, trigger_index=0
        ),
        source_count=source_count,
        print_end_index=print_end_index,
    )


def _motor_from_code(code: int, path: Path) -> Motor:
    if not 0 <= code < len(MOTORS):
        raise CaptureFormatError(f"{path}: unknown motor code {code}")
    return MOTORS[code]


def _is_numeric_row(row: list[str]) -> bool:
    try:
        for cell in row:
            float(cell)
    except ValueError:
        return False
    return True
