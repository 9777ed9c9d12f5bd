"""Command-line pipeline: simulate | attack | baseline | detect | experiment.

Exit codes: 0 = success / benign, 1 = malicious print detected,
2 = usage or input error.  Every run first prints its resolved
configuration as ``config key=value`` lines; detection results are printed
as ``report key=value`` lines so scripts can grep them.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob as globmod
import sys
from pathlib import Path

from . import config as configmod
from .attacks import AttackError, AttackKind, AttackSpec, apply_attack
from .detect import DetectionConfig, DetectionError, Verdict, build_baseline, detect_print, smooth
from .gcode import GCodeError, parse_gcode, serialize
from .harness import (
    ExperimentConfig,
    ExperimentError,
    default_attacks,
    load_program,
    render_matrix,
    run_experiment,
)
from .planner import DEFAULT_PROFILE, MOTORS, PlanError, PrinterProfile
from .traceio import (
    CaptureFormatError,
    CaptureIOError,
    align_to_trigger,
    common_window,
    load_baseline,
    load_trace,
    save_baseline,
    save_trace,
)
from .tracesim import DEFAULT_NOISE, SAMPLE_RATE, TraceSimError, simulate_print

EXIT_OK = 0
EXIT_MALICIOUS = 1
EXIT_ERROR = 2

_USER_ERRORS = (
    GCodeError,
    AttackError,
    PlanError,
    TraceSimError,
    DetectionError,
    CaptureFormatError,
    CaptureIOError,
    configmod.ConfigError,
    ExperimentError,
)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="powertrace",
        description="Motor-current side-channel sabotage detection for FDM prints.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="simulation seed (default 0)")
    common.add_argument("--profile", type=Path, default=None, help="printer profile key-value file")
    common.add_argument(
        "--out", type=Path, default=Path("."), help="directory output paths are relative to"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", parents=[common], help="simulate a print, write 4 capture files")
    p_sim.add_argument("gcode", type=Path)
    p_sim.add_argument("--noise", type=Path, default=None, help="noise model key-value file")
    p_sim.add_argument("--prefix", default=None, help="output file prefix (default: g-code stem)")
    p_sim.set_defaults(handler=_cmd_simulate)

    p_att = sub.add_parser("attack", parents=[common], help="apply a sabotage mutation to a g-code file")
    p_att.add_argument("gcode", type=Path)
    p_att.add_argument("--kind", required=True, choices=[k.value for k in AttackKind])
    p_att.add_argument("--layer", type=int, required=True)
    p_att.add_argument("--position", type=int, required=True)
    p_att.add_argument("--pair-offset", type=int, default=None)
    p_att.add_argument("--payload", default=None, help="g-code line to insert (insert only)")
    p_att.add_argument("--output", type=Path, required=True, help="mutated file, relative to --out")
    p_att.set_defaults(handler=_cmd_attack)

    p_base = sub.add_parser("baseline", parents=[common], help="build a golden baseline from captures")
    p_base.add_argument("captures", nargs="+", help="capture files or globs, one motor only")
    p_base.add_argument("--window", type=int, default=DetectionConfig().smoothing_window)
    p_base.add_argument("--output", type=Path, required=True, help="baseline file, relative to --out")
    p_base.set_defaults(handler=_cmd_baseline)

    p_det = sub.add_parser("detect", parents=[common], help="classify captures against baselines")
    p_det.add_argument("--capture", action="append", required=True, help="capture file (repeatable)")
    p_det.add_argument("--baseline", action="append", required=True, help="baseline file (repeatable)")
    p_det.add_argument("--window", type=int, default=DetectionConfig().smoothing_window)
    p_det.add_argument("--margin", type=float, default=DetectionConfig().margin)
    p_det.add_argument("--run-requirement", type=int, default=DetectionConfig().run_requirement)
    p_det.set_defaults(handler=_cmd_detect)

    p_exp = sub.add_parser("experiment", parents=[common], help="run the full detectability experiment")
    p_exp.add_argument("config", nargs="?", type=Path, default=None, help="experiment key-value file")
    p_exp.set_defaults(handler=_cmd_experiment)
    return parser


def _print_config(args: argparse.Namespace, **extra: object) -> None:
    pairs = {"command": args.command, "seed": args.seed, "out": args.out}
    if args.profile is not None:
        pairs["profile"] = args.profile
    pairs.update(extra)
    for key, value in pairs.items():
        print(f"config {key}={value}")


def _load_profile_arg(args: argparse.Namespace) -> PrinterProfile:
    if args.profile is None:
        return DEFAULT_PROFILE
    return configmod.load_profile(args.profile)


def _cmd_simulate(args: argparse.Namespace) -> int:
    profile = _load_profile_arg(args)
    noise = configmod.load_noise(args.noise) if args.noise else DEFAULT_NOISE
    prefix = args.prefix or args.gcode.stem
    _print_config(args, gcode=args.gcode, prefix=prefix)
    try:
        text = args.gcode.read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    program = parse_gcode(text)
    traces = simulate_print(program, profile, noise, seed=args.seed, sample_rate=SAMPLE_RATE)
    for motor in MOTORS:
        path = args.out / f"{prefix}_{motor.name}.ptrc"
        save_trace(traces[motor], path)
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_attack(args: argparse.Namespace) -> int:
    _print_config(
        args,
        gcode=args.gcode,
        kind=args.kind,
        layer=args.layer,
        position=args.position,
        pair_offset=args.pair_offset,
        payload=args.payload,
        output=args.output,
    )
    try:
        text = args.gcode.read_text()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    program = parse_gcode(text)
    payload = configmod.parse_payload(args.payload, "--payload") if args.payload else None
    spec = AttackSpec(
        kind=AttackKind(args.kind),
        layer=args.layer,
        position=args.position,
        payload=payload,
        pair_offset=args.pair_offset,
    )
    mutated = apply_attack(program, spec)
    out_path = args.out / args.output
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(serialize(mutated))
    print(f"wrote {out_path} ({len(mutated)} commands, was {len(program)})")
    return EXIT_OK


def _cmd_baseline(args: argparse.Namespace) -> int:
    paths: list[Path] = []
    for pattern in args.captures:
        expanded = sorted(globmod.glob(pattern))
        if expanded:
            paths.extend(Path(p) for p in expanded)
        else:
            paths.append(Path(pattern))
    _print_config(args, captures=len(paths), window=args.window, output=args.output)
    traces = [load_trace(path) for path in paths]
    if len(traces) < 2:
        print("error: a baseline needs at least 2 captures", file=sys.stderr)
        return EXIT_ERROR
    motors = {trace.motor for trace in traces}
    if len(motors) != 1:
        print(
            f"error: captures mix motors {sorted(m.name for m in motors)}; "
            "run baseline once per motor",
            file=sys.stderr,
        )
        return EXIT_ERROR
    aligned = common_window([smooth(align_to_trigger(t), args.window) for t in traces])
    baseline = build_baseline(aligned)
    out_path = args.out / args.output
    save_baseline(baseline, out_path)
    print(
        f"wrote {out_path} (motor={baseline.motor.name} source_count={baseline.source_count} "
        f"peak_sd={baseline.peak_sd:.6f})"
    )
    return EXIT_OK


def _cmd_detect(args: argparse.Namespace) -> int:
    detection = DetectionConfig(
        smoothing_window=args.window,
        margin=args.margin,
        run_requirement=args.run_requirement,
    )
    _print_config(
        args,
        window=args.window,
        margin=args.margin,
        run_requirement=args.run_requirement,
    )
    baselines = {}
    for path in args.baseline:
        baseline = load_baseline(Path(path))
        baselines[baseline.motor] = baseline
    captures = {}
    for path in args.capture:
        trace = load_trace(Path(path))
        captures[trace.motor] = align_to_trigger(trace)
    missing = [m.name for m in captures if m not in baselines]
    if missing:
        print(f"error: no baseline for motor(s) {missing}", file=sys.stderr)
        return EXIT_ERROR
    result = detect_print(captures, {m: b for m, b in baselines.items() if m in captures}, detection)
    for motor in MOTORS:
        if motor in result.reports:
            print("report " + " ".join(result.reports[motor].key_value_lines()))
    print(f"report overall={result.overall.value}")
    return EXIT_MALICIOUS if result.overall is Verdict.MALICIOUS else EXIT_OK


def _cmd_experiment(args: argparse.Namespace) -> int:
    config = _experiment_config(args)
    _print_config(
        args,
        golden_count=config.golden_count,
        malicious_count=config.malicious_count,
        visible_factor=config.visible_factor,
    )
    matrix = run_experiment(config, args.out)
    print(render_matrix(matrix), end="")
    print(f"artifacts written under {args.out}")
    return EXIT_OK


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig(seed=args.seed, profile=_load_profile_arg(args))
    if args.config is None:
        return base
    pairs = configmod.read_kv_file(args.config)
    source = str(args.config)
    known_scalar = {
        "program",
        "golden_count",
        "malicious_count",
        "seed",
        "visible_factor",
        "series_stride",
        "save_traces",
        "smoothing_window",
        "margin",
        "run_requirement",
    }
    profile_pairs = {}
    noise_pairs = {}
    attack_pairs = {}
    for key, value in pairs.items():
        if key in known_scalar:
            continue
        if key.startswith(("steps_per_mm.", "max_feed.")) or key in (
            "rated_phase_current",
            "default_feed",
        ):
            profile_pairs[key] = value
        elif key.startswith("noise."):
            noise_pairs[key.removeprefix("noise.")] = value
        elif key.startswith("attack."):
            attack_pairs[key.removeprefix("attack.")] = value
        else:
            raise configmod.ConfigError(f"{source}: unknown key {key!r}")

    profile = configmod.profile_from_pairs(profile_pairs, source) if profile_pairs else base.profile
    noise = configmod.noise_from_pairs(noise_pairs, source) if noise_pairs else base.noise
    detection = configmod.detection_from_pairs(pairs, source)
    config = dataclasses.replace(
        base,
        program_path=pairs.get("program") or None,
        profile=profile,
        noise=noise,
        detection=detection,
        golden_count=configmod._get_int(pairs, "golden_count", base.golden_count, source),
        malicious_count=configmod._get_int(pairs, "malicious_count", base.malicious_count, source),
        seed=configmod._get_int(pairs, "seed", args.seed, source),
        visible_factor=configmod._get_float(pairs, "visible_factor", base.visible_factor, source),
        series_stride=configmod._get_int(pairs, "series_stride", base.series_stride, source),
        save_traces=configmod._get_bool(pairs, "save_traces", base.save_traces, source),
    )
    if attack_pairs:
        config = dataclasses.replace(config, attacks=_attacks_from_pairs(config, attack_pairs, source))
    return config


def _attacks_from_pairs(
    config: ExperimentConfig, pairs: dict[str, str], source: str
) -> dict[str, tuple[AttackSpec, ...]]:
    """Override individual fields of the default attack specs.

    Keys look like ``attack.insert.layer``; the reorder row accepts
    ``reorder`` and ``reorder1`` groups for its two swaps.
    """
    program = load_program(config)
    attacks = {row: list(specs) for row, specs in default_attacks(program).items()}
    group_map = {
        "insert": ("insert", 0),
        "delete": ("delete", 0),
        "void": ("void", 0),
        "reorder": ("reorder", 0),
        "reorder0": ("reorder", 0),
        "reorder1": ("reorder", 1),
    }
    for key, value in pairs.items():
        group, _, field_name = key.partition(".")
        if group not in group_map or not field_name:
            raise configmod.ConfigError(f"{source}: unknown attack key {key!r}")
        row, index = group_map[group]
        spec = attacks[row][index]
        try:
            if field_name == "layer":
                spec = dataclasses.replace(spec, layer=int(value))
            elif field_name == "position":
                spec = dataclasses.replace(spec, position=int(value))
            elif field_name == "pair_offset":
                spec = dataclasses.replace(spec, pair_offset=int(value))
            elif field_name == "payload":
                spec = dataclasses.replace(spec, payload=configmod.parse_payload(value, source))
            else:
                raise configmod.ConfigError(f"{source}: unknown attack field {field_name!r}")
        except ValueError as exc:
            raise configmod.ConfigError(f"{source}: bad value for {key!r}: {exc}") from None
        attacks[row][index] = spec
    return {row: tuple(specs) for row, specs in attacks.items()}


if __name__ == "__main__":
    raise SystemExit(main())
