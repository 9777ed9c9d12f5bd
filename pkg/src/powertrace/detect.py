"""Golden-baseline comparison and threshold classification.

The method: smooth every trace with a short moving average, build pointwise
statistics over a set of known-good traces of the same motor, compute the
absolute pointwise deviation of a captured trace from a designated reference
trace, and flag the capture as malicious when the deviation stays above
``peak_sd + margin`` for a contiguous run of samples.

The verdict uses the raw deviation against the peak of the golden standard
deviation; the sd-subtracted excess series is kept for reporting and
visibility analysis because the attack signature stays clearly visible in it
even when it never crosses the verdict threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .planner import Motor
from .tracesim import MotorTrace

__all__ = [
    "DetectionError",
    "Verdict",
    "DetectionConfig",
    "GoldenBaseline",
    "DetectionReport",
    "PrintDetectionResult",
    "smooth",
    "build_baseline",
    "deviation",
    "excess",
    "classify",
    "detect_print",
    "export_series_csv",
]

DEFAULT_SMOOTHING_WINDOW = 20
DEFAULT_MARGIN = 0.1
# 50 samples = 2 ms at 25 kS/s: far below any meaningful command duration,
# but long enough that isolated noise spikes never form a qualifying run.
DEFAULT_RUN_REQUIREMENT = 50


class DetectionError(ValueError):
    """Inconsistent detection inputs."""


class Verdict(Enum):
    BENIGN = "benign"
    MALICIOUS = "malicious"


@dataclass(frozen=True)
class DetectionConfig:
    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW
    margin: float = DEFAULT_MARGIN
    run_requirement: int = DEFAULT_RUN_REQUIREMENT

    def __post_init__(self) -> None:
        if self.smoothing_window < 1:
            raise DetectionError("smoothing_window must be >= 1")
        if self.margin < 0:
            raise DetectionError("margin must be >= 0")
        if self.run_requirement < 1:
            raise DetectionError("run_requirement must be >= 1")


@dataclass(frozen=True, eq=False)
class GoldenBaseline:
    """Pointwise statistics over aligned, smoothed golden traces.

    ``reference_trace`` is the first golden trace; deviations are measured
    against it, per the protocol of comparing a capture to a known-good trace
    rather than to the pointwise mean.  ``peak_sd`` is the maximum pointwise
    sample standard deviation inside the in-print window.
    """

    motor: Motor
    sample_rate: float
    pointwise_mean: np.ndarray  # float64
    pointwise_sd: np.ndarray  # float64
    peak_sd: float
    reference_trace: MotorTrace
    source_count: int
    print_end_index: int

    def __post_init__(self) -> None:
        for name in ("pointwise_mean", "pointwise_sd"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.source_count < 2:
            raise DetectionError("a baseline needs at least 2 golden traces")
        if len(self.pointwise_mean) != len(self.pointwise_sd):
            raise DetectionError("mean/sd length mismatch")
        if np.any(self.pointwise_sd < 0):
            raise DetectionError("pointwise_sd must be nonnegative")

    @property
    def sample_count(self) -> int:
        return len(self.pointwise_mean)

    def truncated(self, length: int) -> "GoldenBaseline":
        """View of the baseline cut to ``length`` samples.

        ``peak_sd`` is kept from the full in-print window so a shorter
        capture never weakens the threshold.
        """
        if not 0 < length <= self.sample_count:
            raise DetectionError(f"cannot truncate baseline to {length} samples")
        if length == self.sample_count:
            return self
        return GoldenBaseline(
            motor=self.motor,
            sample_rate=self.sample_rate,
            pointwise_mean=self.pointwise_mean[:length],
            pointwise_sd=self.pointwise_sd[:length],
            peak_sd=self.peak_sd,
            reference_trace=MotorTrace(
                motor=self.motor,
                sample_rate=self.sample_rate,
                samples=self.reference_trace.samples[:length],
                trigger_index=0,
            ),
            source_count=self.source_count,
            print_end_index=min(self.print_end_index, length),
        )


@dataclass(frozen=True)
class DetectionReport:
    """Per-motor verdict with the exceedance evidence behind it."""

    motor: Motor
    verdict: Verdict
    threshold: float
    exceed_count: int
    max_run_length: int
    first_exceed_time: float | None
    peak_excess: float  # max(deviation) - threshold, negative when clear
    excess_series_path: str | None = None

    def key_value_lines(self) -> list[str]:
        first = "none" if self.first_exceed_time is None else f"{self.first_exceed_time:.6f}"
        lines = [
            f"motor={self.motor.name}",
            f"verdict={self.verdict.value}",
            f"threshold_amps={self.threshold:.6f}",
            f"exceed_count={self.exceed_count}",
            f"max_run_length={self.max_run_length}",
            f"first_exceed_time_s={first}",
            f"peak_excess_amps={self.peak_excess:.6f}",
        ]
        if self.excess_series_path is not None:
            lines.append(f"excess_series={self.excess_series_path}")
        return lines


@dataclass(frozen=True)
class PrintDetectionResult:
    reports: dict[Motor, DetectionReport]
    overall: Verdict
    deviations: dict[Motor, np.ndarray] = field(repr=False, default_factory=dict)
    excesses: dict[Motor, np.ndarray] = field(repr=False, default_factory=dict)


def smooth(trace: MotorTrace, window: int = DEFAULT_SMOOTHING_WINDOW) -> MotorTrace:
    """Centered moving average of ``window`` samples, length preserved.

    Windows shrink to the available samples near the edges.  For an even
    window the center is biased one sample to the right, i.e. sample i
    averages [i - (window-1)//2, i + window//2].
    """
    n = len(trace.samples)
    if window < 1:
        raise DetectionError("window must be >= 1")
    if window > n:
        raise DetectionError(f"window {window} longer than trace of {n} samples")
    if window == 1:
        return trace
    values = trace.samples.astype(np.float64)
    csum = np.concatenate(([0.0], np.cumsum(values)))
    idx = np.arange(n)
    lo = np.maximum(idx - (window - 1) // 2, 0)
    hi = np.minimum(idx + window // 2 + 1, n)
    averaged = (csum[hi] - csum[lo]) / (hi - lo)
    return MotorTrace(
        motor=trace.motor,
        sample_rate=trace.sample_rate,
        samples=averaged.astype(np.float32),
        trigger_index=trace.trigger_index,
    )


def build_baseline(
    golden: list[MotorTrace],
    print_end_index: int | None = None,
) -> GoldenBaseline:
    """Pointwise mean and sample standard deviation over golden traces.

    Traces must already be aligned, smoothed and cut to a common window.
    ``print_end_index`` bounds the window used for ``peak_sd`` so that a
    noisy post-print tail in imported captures cannot inflate the threshold;
    simulated traces end with the print, so the default is the full trace.
    """
    if len(golden) < 2:
        raise DetectionError("a baseline needs at least 2 golden traces")
    motor = golden[0].motor
    rate = golden[0].sample_rate
    length = len(golden[0].samples)
    for trace in golden[1:]:
        if trace.motor is not motor:
            raise DetectionError("golden traces mix motors")
        if trace.sample_rate != rate:
            raise DetectionError("golden traces mix sample rates")
        if len(trace.samples) != length:
            raise DetectionError("golden traces have mismatched lengths")
    if print_end_index is None:
        print_end_index = length
    if not 0 < print_end_index <= length:
        raise DetectionError("print_end_index out of range")

    stack = np.stack([trace.samples.astype(np.float64) for trace in golden])
    mean = stack.mean(axis=0)
    sd = stack.std(axis=0, ddof=1)
    return GoldenBaseline(
        motor=motor,
        sample_rate=rate,
        pointwise_mean=mean,
        pointwise_sd=sd,
        peak_sd=float(sd[:print_end_index].max()),
        reference_trace=golden[0],
        source_count=len(golden),
        print_end_index=print_end_index,
    )


def deviation(captured: MotorTrace, baseline: GoldenBaseline) -> np.ndarray:
    """Pointwise absolute difference from the baseline's reference trace."""
    if captured.sample_rate != baseline.sample_rate:
        raise DetectionError("capture/baseline sample rate mismatch")
    if len(captured.samples) != baseline.sample_count:
        raise DetectionError(
            f"capture has {len(captured.samples)} samples, baseline "
            f"{baseline.sample_count}"
        )
    return np.abs(
        captured.samples.astype(np.float64)
        - baseline.reference_trace.samples.astype(np.float64)
    )


def excess(deviation_series: np.ndarray, baseline: GoldenBaseline) -> np.ndarray:
    """Deviation reduced by the golden standard deviation, clamped at zero."""
    if len(deviation_series) != baseline.sample_count:
        raise DetectionError("deviation/baseline length mismatch")
    return np.maximum(0.0, deviation_series - baseline.pointwise_sd)


def classify(
    deviation_series: np.ndarray,
    baseline: GoldenBaseline,
    margin: float = DEFAULT_MARGIN,
    run_requirement: int = DEFAULT_RUN_REQUIREMENT,
) -> DetectionReport:
    """Threshold the deviation series at ``peak_sd + margin``.

    Malicious iff some contiguous run of above-threshold samples is at least
    ``run_requirement`` long.  The sd-subtracted excess is reported separately
    for plotting; the verdict always uses the raw deviation.
    """
    if run_requirement < 1:
        raise DetectionError("run_requirement must be >= 1")
    dev = np.asarray(deviation_series, dtype=np.float64)
    threshold = baseline.peak_sd + margin
    mask = dev > threshold
    exceed_count = int(mask.sum())
    max_run = _longest_run(mask)
    first_time = None
    if exceed_count > 0:
        first_time = float(np.flatnonzero(mask)[0] / baseline.sample_rate)
    verdict = Verdict.MALICIOUS if max_run >= run_requirement else Verdict.BENIGN
    return DetectionReport(
        motor=baseline.motor,
        verdict=verdict,
        threshold=threshold,
        exceed_count=exceed_count,
        max_run_length=max_run,
        first_exceed_time=first_time,
        peak_excess=float(dev.max() - threshold) if len(dev) else -threshold,
    )


def detect_print(
    captures: dict[Motor, MotorTrace],
    baselines: dict[Motor, GoldenBaseline],
    config: DetectionConfig = DetectionConfig(),
) -> PrintDetectionResult:
    """Run the per-motor pipeline and combine verdicts.

    Captures must already be trigger-aligned; smoothing and windowing to the
    baseline length happen here.  The print is malicious iff any motor is.
    """
    reports: dict[Motor, DetectionReport] = {}
    deviations: dict[Motor, np.ndarray] = {}
    excesses: dict[Motor, np.ndarray] = {}
    for motor, baseline in baselines.items():
        capture = captures.get(motor)
        if capture is None:
            raise DetectionError(f"missing capture for motor {motor.name}")
        smoothed = smooth(capture, config.smoothing_window)
        length = min(len(smoothed.samples), baseline.sample_count)
        if length == 0:
            raise DetectionError(f"empty capture for motor {motor.name}")
        window = baseline.truncated(length)
        trimmed = MotorTrace(
            motor=motor,
            sample_rate=smoothed.sample_rate,
            samples=smoothed.samples[:length],
            trigger_index=0,
        )
        dev = deviation(trimmed, window)
        reports[motor] = classify(dev, window, config.margin, config.run_requirement)
        deviations[motor] = dev
        excesses[motor] = excess(dev, window)
    overall = (
        Verdict.MALICIOUS
        if any(r.verdict is Verdict.MALICIOUS for r in reports.values())
        else Verdict.BENIGN
    )
    return PrintDetectionResult(
        reports=reports, overall=overall, deviations=deviations, excesses=excesses
    )


def export_series_csv(
    series: np.ndarray,
    sample_rate: float,
    path: str | Path,
    stride: int = 1,
) -> None:
    """Write a (time_s, amps) CSV, optionally decimated for plotting."""
    if stride < 1:
        raise DetectionError("stride must be >= 1")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["time_s", "amps"])
        for i in range(0, len(series), stride):
            writer.writerow([f"{i / sample_rate:.6f}", f"{series[i]:.6f}"])


def _longest_run(mask: np.ndarray) -> int:
    if not mask.any():
        return 0
    padded = np.concatenate(([False], mask, [False]))
    edges = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return int((ends - starts).max())
