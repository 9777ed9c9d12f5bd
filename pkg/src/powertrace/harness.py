"""End-to-end detectability experiment.

Reproduces the full protocol against the bundled benchmark object: simulate a
set of golden prints, build per-motor baselines, simulate several benign and
attacked prints per mutation, classify every capture, and assemble the
detectability matrix (attack rows x motor columns).

A cell is DETECTED when every attacked run was flagged on that motor,
VISIBLE when none were flagged but the mean sd-subtracted excess inside the
attack window exceeds the benign mean excess by a configurable factor, and
NOT_DETECTED otherwise.  Motors the attack provably never touches (the void
attack leaves X/Y/Z motion untouched) are annotated rather than given a
separate verdict.  A run with any flagged benign capture is invalid: zero
false positives is a hard gate.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .attacks import AttackKind, AttackSpec, apply_attack
from .detect import (
    DetectionConfig,
    GoldenBaseline,
    PrintDetectionResult,
    Verdict,
    build_baseline,
    detect_print,
    export_series_csv,
    smooth,
)
from .gcode import Command, CommandKind, GCodeProgram, command_text, parse_gcode
from .planner import DEFAULT_PROFILE, MOTORS, Motor, PrinterProfile, command_start_times, plan_motion
from .traceio import align_to_trigger, common_window, save_baseline, save_trace
from .tracesim import DEFAULT_NOISE, SAMPLE_RATE, MotorTrace, NoiseModel, simulate_print

__all__ = [
    "ExperimentError",
    "CellOutcome",
    "MatrixCell",
    "DetectabilityMatrix",
    "ExperimentConfig",
    "ATTACK_ROWS",
    "benchmark_object",
    "default_attacks",
    "load_program",
    "run_experiment",
    "render_matrix",
]

ATTACK_ROWS = ("insert", "delete", "reorder", "void")
_ROWS = ("normal",) + ATTACK_ROWS

# Seed blocks keep golden, benign-eval and per-attack capture streams disjoint.
_GOLDEN_SEED_BASE = 1000
_BENIGN_SEED_BASE = 2000
_ATTACK_SEED_BASE = 3000
_ATTACK_SEED_STRIDE = 1000


class ExperimentError(RuntimeError):
    """Experiment could not produce a valid matrix."""


class CellOutcome(Enum):
    DETECTED = "detected"
    NOT_DETECTED = "not-detected"
    VISIBLE = "visible"
    IRRELEVANT = "irrelevant"


@dataclass(frozen=True)
class MatrixCell:
    outcome: CellOutcome
    detected_runs: int
    total_runs: int
    excess_ratio: float | None = None
    annotation: str | None = None


@dataclass(frozen=True)
class DetectabilityMatrix:
    cells: dict[tuple[str, Motor], MatrixCell]
    rows: tuple[str, ...] = _ROWS
    valid: bool = True

    def cell(self, row: str, motor: Motor) -> MatrixCell:
        return self.cells[(row, motor)]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun the experiment bit-for-bit."""

    program_path: str | None = None  # None: bundled benchmark object
    profile: PrinterProfile = DEFAULT_PROFILE
    noise: NoiseModel = DEFAULT_NOISE
    golden_count: int = 10
    malicious_count: int = 3
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    visible_factor: float = 2.0
    seed: int = 0
    sample_rate: float = SAMPLE_RATE
    series_stride: int = 250
    save_traces: bool = False
    attacks: dict[str, tuple[AttackSpec, ...]] | None = None  # None: defaults

    def __post_init__(self) -> None:
        if self.golden_count < 2:
            raise ExperimentError("golden_count must be >= 2 (sd undefined below that)")
        if self.malicious_count < 1:
            raise ExperimentError("malicious_count must be >= 1")
        if self.visible_factor <= 0:
            raise ExperimentError("visible_factor must be > 0")
        if self.series_stride < 1:
            raise ExperimentError("series_stride must be >= 1")


# ---------------------------------------------------------------------------
# Benchmark object

_ORIGIN = (2.0, 2.0)
_CUBE_SIZE = 14.0
_LAYER_COUNT = 10
_LAYER_HEIGHT = 0.2
_PRINT_FEED = 960.0
_TRAVEL_FEED = 1200.0
_LIFT_FEED = 37.5
_FILAMENT_PER_MM = 0.05
_INFILL_HALF_PERIOD = 2.0
# 60 degree zigzag rise, the classic honeycomb half-cell slope.
_INFILL_RISE = _INFILL_HALF_PERIOD * math.tan(math.radians(60.0))
_INFILL_X0 = 3.5
_INFILL_X1 = 15.5
_BAND_BASES = (3.5, 8.5)

# Command offsets within one benchmark layer (every layer has 20 commands).
LAYER_OFFSET_LIFT = 0
LAYER_OFFSET_PERIMETER = 2  # first of four perimeter sides
LAYER_OFFSET_INFILL = 7  # first zigzag segment


def benchmark_object() -> GCodeProgram:
    """Deterministic 10-layer square object with a 60-degree zigzag fill.

    Tuned together with the default profile so the whole print takes roughly
    75 seconds and every step frequency stays inside (0, 200] Hz.
    """
    x0, y0 = _ORIGIN
    corners = [
        (x0 + _CUBE_SIZE, y0),
        (x0 + _CUBE_SIZE, y0 + _CUBE_SIZE),
        (x0, y0 + _CUBE_SIZE),
        (x0, y0),
    ]
    lines = [
        "; powertrace benchmark object",
        "; square perimeter with zigzag fill, 10 layers",
        "M107",
        f"G0 X{_num(x0)} Y{_num(y0)} F{_num(_TRAVEL_FEED)}",
    ]
    extrusion = 0.0
    position = (x0, y0)
    for layer in range(_LAYER_COUNT):
        z = _LAYER_HEIGHT * (layer + 1)
        lines.append(f"G1 Z{_num(z)} F{_num(_LIFT_FEED)}")
        lines.append(f"G0 X{_num(x0)} Y{_num(y0)} F{_num(_TRAVEL_FEED)}")
        position = (x0, y0)
        if layer == 2:
            lines.append("M106 S255")
        for corner in corners:
            extrusion += _dist(position, corner) * _FILAMENT_PER_MM
            lines.append(
                f"G1 X{_num(corner[0])} Y{_num(corner[1])} "
                f"E{_num(extrusion)} F{_num(_PRINT_FEED)}"
            )
            position = corner
        for band_index, base in enumerate(_BAND_BASES):
            points = _zigzag_points(base, leftward=band_index % 2 == 1)
            start = points[0]
            lines.append(f"G0 X{_num(start[0])} Y{_num(start[1])} F{_num(_TRAVEL_FEED)}")
            position = start
            for point in points[1:]:
                extrusion += _dist(position, point) * _FILAMENT_PER_MM
                lines.append(
                    f"G1 X{_num(point[0])} Y{_num(point[1])} "
                    f"E{_num(extrusion)} F{_num(_PRINT_FEED)}"
                )
                position = point
    lines.append("M107")
    return parse_gcode("\n".join(lines) + "\n")


def _zigzag_points(base_y: float, leftward: bool) -> list[tuple[float, float]]:
    xs = []
    x = _INFILL_X0
    while x <= _INFILL_X1 + 1e-9:
        xs.append(x)
        x += _INFILL_HALF_PERIOD
    if leftward:
        xs = xs[::-1]
    return [(x, base_y + (_INFILL_RISE if i % 2 else 0.0)) for i, x in enumerate(xs)]


def _dist(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def _num(value: float) -> str:
    text = f"{value:.4f}".rstrip("0").rstrip(".")
    return text if text else "0"


# ---------------------------------------------------------------------------
# Default attacks

def default_attacks(program: GCodeProgram) -> dict[str, tuple[AttackSpec, ...]]:
    """The four mutations, addressed against the benchmark layer layout.

    The inserted travel move goes to a point equidistant (from the successor's
    target) with the successor's original start, and carries no F word, so the
    insertion shifts the rest of the plan by exactly the payload duration
    without altering any other command's geometry or the modal feed.
    """
    insert_at = LAYER_OFFSET_PERIMETER + 1
    x0, y0 = _ORIGIN
    payload = Command(
        kind=CommandKind.RAPID_MOVE,
        x=x0,
        y=y0 + _CUBE_SIZE,
    )
    return {
        "insert": (
            AttackSpec(kind=AttackKind.INSERT, layer=7, position=insert_at, payload=payload),
        ),
        "delete": (AttackSpec(kind=AttackKind.DELETE, layer=7, position=insert_at),),
        "reorder": (
            AttackSpec(
                kind=AttackKind.REORDER,
                layer=7,
                position=LAYER_OFFSET_INFILL,
                pair_offset=LAYER_OFFSET_INFILL + 2,
            ),
            AttackSpec(
                kind=AttackKind.REORDER,
                layer=8,
                position=LAYER_OFFSET_INFILL,
                pair_offset=LAYER_OFFSET_INFILL + 2,
            ),
        ),
        "void": (AttackSpec(kind=AttackKind.VOID, layer=7, position=LAYER_OFFSET_PERIMETER),),
    }


# Ground truth: which motors an attack can disturb at all.  Void only
# changes extrusion; the desynchronizing attacks touch every timeline.
_TOUCHED_MOTORS = {
    "insert": frozenset(MOTORS),
    "delete": frozenset(MOTORS),
    "reorder": frozenset(MOTORS),
    "void": frozenset({Motor.E}),
}


# ---------------------------------------------------------------------------
# Experiment

def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> DetectabilityMatrix:
    """Run the whole protocol and write artifacts under ``out_dir``.

    Raises :class:`ExperimentError` after writing artifacts if any benign
    capture was flagged (the zero-false-positive gate).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    program = load_program(config)
    attacks = config.attacks if config.attacks is not None else default_attacks(program)
    for row in ATTACK_ROWS:
        if row not in attacks:
            raise ExperimentError(f"no attack spec configured for {row!r}")

    _write_config_dump(config, attacks, out / "config.txt")

    baselines = _build_baselines(program, config, out)
    windows = _attack_windows(program, attacks, config, baselines)

    benign_results = _run_row(
        "normal", program, config, baselines,
        seeds=[config.seed + _BENIGN_SEED_BASE + i for i in range(config.malicious_count)],
        out=out,
    )
    benign_window_excess = {
        row: _mean_window_excess(benign_results, windows[row]) for row in ATTACK_ROWS
    }

    cells: dict[tuple[str, Motor], MatrixCell] = {}
    for motor in MOTORS:
        detected = sum(
            1 for result in benign_results if result.reports[motor].verdict is Verdict.MALICIOUS
        )
        outcome = CellOutcome.DETECTED if detected == len(benign_results) else (
            CellOutcome.NOT_DETECTED
        )
        cells[("normal", motor)] = MatrixCell(
            outcome=outcome,
            detected_runs=detected,
            total_runs=len(benign_results),
        )

    for attack_index, row in enumerate(ATTACK_ROWS):
        mutated = program
        for spec in attacks[row]:
            mutated = apply_attack(mutated, spec)
        seeds = [
            config.seed + _ATTACK_SEED_BASE + attack_index * _ATTACK_SEED_STRIDE + r
            for r in range(config.malicious_count)
        ]
        results = _run_row(row, mutated, config, baselines, seeds=seeds, out=out)
        attack_excess = _mean_window_excess(results, windows[row])
        for motor in MOTORS:
            detected = sum(1 for res in results if res.reports[motor].verdict is Verdict.MALICIOUS)
            ratio = _ratio(attack_excess[motor], benign_window_excess[row][motor])
            if detected == len(results):
                outcome = CellOutcome.DETECTED
            elif ratio is not None and ratio >= config.visible_factor:
                outcome = CellOutcome.VISIBLE
            else:
                outcome = CellOutcome.NOT_DETECTED
            annotation = None
            if motor not in _TOUCHED_MOTORS[row]:
                annotation = "no ground-truth disturbance"
            cells[(row, motor)] = MatrixCell(
                outcome=outcome,
                detected_runs=detected,
                total_runs=len(results),
                excess_ratio=ratio,
                annotation=annotation,
            )

    false_positives = sum(cells[("normal", m)].detected_runs for m in MOTORS)
    matrix = DetectabilityMatrix(cells=cells, valid=false_positives == 0)
    (out / "matrix.txt").write_text(render_matrix(matrix))
    _write_matrix_csv(matrix, out / "matrix.csv")
    if not matrix.valid:
        raise ExperimentError(
            f"{false_positives} benign capture(s) flagged malicious; "
            "the zero-false-positive gate invalidates this run "
            f"(artifacts preserved under {out})"
        )
    return matrix


def load_program(config: ExperimentConfig) -> GCodeProgram:
    if config.program_path is None:
        return benchmark_object()
    try:
        text = Path(config.program_path).read_text()
    except OSError as exc:
        raise ExperimentError(f"cannot read program: {exc}") from exc
    return parse_gcode(text)


def _build_baselines(
    program: GCodeProgram, config: ExperimentConfig, out: Path
) -> dict[Motor, GoldenBaseline]:
    per_motor: dict[Motor, list[MotorTrace]] = {motor: [] for motor in MOTORS}
    for i in range(config.golden_count):
        seed = config.seed + _GOLDEN_SEED_BASE + i
        traces = simulate_print(
            program, config.profile, config.noise, seed=seed, sample_rate=config.sample_rate
        )
        for motor in MOTORS:
            aligned = align_to_trigger(traces[motor])
            per_motor[motor].append(smooth(aligned, config.detection.smoothing_window))
            if config.save_traces:
                save_trace(traces[motor], out / "traces" / f"golden_{i:02d}_{motor.name}.ptrc")
    baselines: dict[Motor, GoldenBaseline] = {}
    for motor in MOTORS:
        golden = common_window(per_motor[motor])
        baselines[motor] = build_baseline(golden)
        save_baseline(baselines[motor], out / "baselines" / f"{motor.name}.ptrb")
    return baselines


def _run_row(
    row: str,
    program: GCodeProgram,
    config: ExperimentConfig,
    baselines: dict[Motor, GoldenBaseline],
    seeds: list[int],
    out: Path,
) -> list[PrintDetectionResult]:
    results = []
    for run_index, seed in enumerate(seeds):
        traces = simulate_print(
            program, config.profile, config.noise, seed=seed, sample_rate=config.sample_rate
        )
        aligned = {motor: align_to_trigger(traces[motor]) for motor in MOTORS}
        result = detect_print(aligned, baselines, config.detection)
        reports = {}
        for motor in MOTORS:
            base = out / "series" / f"{row}_run{run_index}_{motor.name}"
            export_series_csv(
                result.deviations[motor],
                baselines[motor].sample_rate,
                base.with_name(base.name + "_deviation.csv"),
                stride=config.series_stride,
            )
            excess_path = base.with_name(base.name + "_excess.csv")
            export_series_csv(
                result.excesses[motor],
                baselines[motor].sample_rate,
                excess_path,
                stride=config.series_stride,
            )
            reports[motor] = dataclasses.replace(
                result.reports[motor],
                excess_series_path=str(excess_path.relative_to(out)),
            )
            if config.save_traces:
                save_trace(traces[motor], out / "traces" / f"{row}_run{run_index}_{motor.name}.ptrc")
        result = dataclasses.replace(result, reports=reports)
        results.append(result)
        _write_run_report(out / "reports" / f"{row}_run{run_index}.txt", row, run_index, seed, result)
    return results


# A voided command's effect is a bounded transient (the next absolute E word
# re-extrudes the skipped filament), so its visibility window stops shortly
# after the modified command instead of running to the end of the print.
_VOID_SETTLE_S = 3.0


def _attack_windows(
    program: GCodeProgram,
    attacks: dict[str, tuple[AttackSpec, ...]],
    config: ExperimentConfig,
    baselines: dict[Motor, GoldenBaseline],
) -> dict[str, tuple[int, int]]:
    """Sample window on the baseline timeline, derived from the injection point.

    Desynchronizing attacks disturb everything after the modified command, so
    their window runs to the end of the print; the void window covers the
    modified command plus a settle allowance.  Legitimate here because the
    harness controls ground truth.
    """
    starts = command_start_times(program, config.profile)
    plan = plan_motion(program, config.profile)
    length = min(b.sample_count for b in baselines.values())
    windows = {}
    for row, specs in attacks.items():
        indices = []
        for spec in specs:
            if spec.kind is AttackKind.REORDER:
                offset = min(spec.position, spec.pair_offset)
            else:
                offset = _clamped_position(program, spec)
            indices.append(program.command_index(spec.layer, offset))
        first = min(indices)
        t_start = starts[first] - plan.trigger_time
        start_idx = max(0, min(int(t_start * config.sample_rate), length - 1))
        end_idx = length
        if all(spec.kind is AttackKind.VOID for spec in specs):
            t_end = starts[max(indices)] - plan.trigger_time + _VOID_SETTLE_S
            end_idx = max(start_idx + 1, min(int(t_end * config.sample_rate), length))
        windows[row] = (start_idx, end_idx)
    return windows


def _clamped_position(program: GCodeProgram, spec: AttackSpec) -> int:
    # An insert position may equal the layer length ("append"); window on the
    # last existing command in that case.
    start, end = program.layer_slice(spec.layer)
    return min(spec.position, max(end - start - 1, 0))


def _mean_window_excess(
    results: list[PrintDetectionResult], window: tuple[int, int]
) -> dict[Motor, float]:
    lo, hi = window
    means = {}
    for motor in MOTORS:
        values = []
        for result in results:
            series = result.excesses[motor]
            hi_eff = min(hi, len(series))
            if hi_eff > lo:
                values.append(float(np.mean(series[lo:hi_eff])))
        means[motor] = float(np.mean(values)) if values else 0.0
    return means


def _ratio(attack: float, benign: float) -> float | None:
    if benign <= 0.0:
        return None if attack <= 0.0 else math.inf
    return attack / benign


def _write_run_report(
    path: Path, row: str, run_index: int, seed: int, result: PrintDetectionResult
) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"row={row}",
        f"run={run_index}",
        f"seed={seed}",
        f"overall={result.overall.value}",
    ]
    for motor in MOTORS:
        report = result.reports[motor]
        lines.extend(report.key_value_lines())
    path.write_text("\n".join(lines) + "\n")


def _write_config_dump(
    config: ExperimentConfig, attacks: dict[str, tuple[AttackSpec, ...]], path: Path
) -> None:
    profile = config.profile
    noise = config.noise
    lines = [
        f"program = {config.program_path or 'builtin-benchmark'}",
        f"golden_count = {config.golden_count}",
        f"malicious_count = {config.malicious_count}",
        f"seed = {config.seed}",
        f"sample_rate = {config.sample_rate}",
        f"smoothing_window = {config.detection.smoothing_window}",
        f"margin = {config.detection.margin}",
        f"run_requirement = {config.detection.run_requirement}",
        f"visible_factor = {config.visible_factor}",
        f"series_stride = {config.series_stride}",
        f"save_traces = {config.save_traces}",
    ]
    for axis in "xyze":
        lines.append(f"steps_per_mm.{axis} = {getattr(profile.steps_per_mm, axis)}")
    for axis in "xyze":
        lines.append(f"max_feed.{axis} = {getattr(profile.max_feed, axis)}")
    lines.append(f"rated_phase_current = {profile.rated_phase_current}")
    lines.append(f"default_feed = {profile.default_feed}")
    lines.append(f"idle_noise_sd = {noise.idle_noise_sd}")
    lines.append(f"phase_jitter_sd = {noise.phase_jitter_sd}")
    lines.append(f"amplitude_noise_sd = {noise.amplitude_noise_sd}")
    for row, specs in attacks.items():
        for i, spec in enumerate(specs):
            prefix = f"attack.{row}{i if len(specs) > 1 else ''}"
            lines.append(f"{prefix}.layer = {spec.layer}")
            lines.append(f"{prefix}.position = {spec.position}")
            if spec.pair_offset is not None:
                lines.append(f"{prefix}.pair_offset = {spec.pair_offset}")
            if spec.payload is not None:
                lines.append(f"{prefix}.payload = {command_text(spec.payload)}")
    path.write_text("\n".join(lines) + "\n")


_CELL_TEXT = {
    CellOutcome.DETECTED: "DETECTED",
    CellOutcome.NOT_DETECTED: "not-detected",
    CellOutcome.VISIBLE: "visible",
    CellOutcome.IRRELEVANT: "irrelevant",
}


def render_matrix(matrix: DetectabilityMatrix) -> str:
    """Aligned text table; annotated cells carry a trailing ``*``."""
    header = ["attack".ljust(10)] + [m.name.ljust(19) for m in MOTORS]
    rows = ["".join(header).rstrip()]
    annotated = False
    for row in matrix.rows:
        parts = [row.ljust(10)]
        for motor in MOTORS:
            cell = matrix.cell(row, motor)
            text = f"{_CELL_TEXT[cell.outcome]} {cell.detected_runs}/{cell.total_runs}"
            if cell.annotation:
                text += "*"
                annotated = True
            parts.append(text.ljust(19))
        rows.append("".join(parts).rstrip())
    if annotated:
        rows.append("")
        rows.append("* attack does not touch this motor (no ground-truth disturbance)")
    if not matrix.valid:
        rows.append("")
        rows.append("INVALID RUN: benign capture flagged (false-positive gate)")
    return "\n".join(rows) + "\n"


def _write_matrix_csv(matrix: DetectabilityMatrix, path: Path) -> None:
    import csv

    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["attack", "motor", "outcome", "detected_runs", "total_runs", "excess_ratio", "annotation"]
        )
        for row in matrix.rows:
            for motor in MOTORS:
                cell = matrix.cell(row, motor)
                ratio = "" if cell.excess_ratio is None else f"{cell.excess_ratio:.4f}"
                writer.writerow(
                    [
                        row,
                        motor.name,
                        cell.outcome.value,
                        cell.detected_runs,
                        cell.total_runs,
                        ratio,
                        cell.annotation or "",
                    ]
                )
