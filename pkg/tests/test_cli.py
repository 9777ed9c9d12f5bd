import subprocess
import sys

import pytest

from powertrace.cli import main
from powertrace.traceio import load_baseline

GCODE = """\
G1 Z0.2 F37.5
G1 X8 E0.4 F960
G1 X16 E0.8
G1 Y8 E1.2
G0 X0 Y0
"""


@pytest.fixture
def gcode_file(tmp_path):
    path = tmp_path / "part.gcode"
    path.write_text(GCODE)
    return path


def _simulate(gcode_file, out_dir, seed=0, prefix=None):
    argv = ["simulate", str(gcode_file), "--out", str(out_dir), "--seed", str(seed)]
    if prefix:
        argv += ["--prefix", prefix]
    assert main(argv) == 0


class TestSimulate:
    def test_writes_four_capture_files(self, gcode_file, tmp_path, capsys):
        _simulate(gcode_file, tmp_path / "caps")
        out = capsys.readouterr().out
        assert "config command=simulate" in out
        files = sorted((tmp_path / "caps").glob("part_*.ptrc"))
        assert [f.name for f in files] == [
            "part_E.ptrc",
            "part_X.ptrc",
            "part_Y.ptrc",
            "part_Z.ptrc",
        ]

    def test_missing_input_exits_2(self, tmp_path, capsys):
        assert main(["simulate", str(tmp_path / "nope.gcode"), "--out", str(tmp_path)]) == 2
        assert "error" in capsys.readouterr().err

    def test_fixed_seed_reproduces_files(self, gcode_file, tmp_path):
        _simulate(gcode_file, tmp_path / "a", seed=5)
        _simulate(gcode_file, tmp_path / "b", seed=5)
        for name in ("part_X.ptrc", "part_E.ptrc"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestAttack:
    def test_insert_adds_one_command(self, gcode_file, tmp_path, capsys):
        code = main(
            [
                "attack",
                str(gcode_file),
                "--kind",
                "insert",
                "--layer",
                "0",
                "--position",
                "2",
                "--payload",
                "G0 X24",
                "--output",
                "bad.gcode",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == 0
        mutated = (tmp_path / "bad.gcode").read_text()
        assert len(mutated.splitlines()) == len(GCODE.splitlines()) + 1
        assert "G0 X24" in mutated

    def test_void_on_travel_exits_2(self, gcode_file, tmp_path, capsys):
        code = main(
            [
                "attack",
                str(gcode_file),
                "--kind",
                "void",
                "--layer",
                "0",
                "--position",
                "4",
                "--output",
                "bad.gcode",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == 2
        assert "extruding" in capsys.readouterr().err

    def test_reorder_equal_offsets_exits_2(self, gcode_file, tmp_path, capsys):
        code = main(
            [
                "attack",
                str(gcode_file),
                "--kind",
                "reorder",
                "--layer",
                "0",
                "--position",
                "1",
                "--pair-offset",
                "1",
                "--output",
                "bad.gcode",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == 2


class TestBaseline:
    def test_builds_baseline_from_captures(self, gcode_file, tmp_path, capsys):
        for seed in range(3):
            _simulate(gcode_file, tmp_path / f"run{seed}", seed=seed)
        captures = [str(tmp_path / f"run{s}" / "part_X.ptrc") for s in range(3)]
        code = main(
            ["baseline", *captures, "--output", "X.ptrb", "--out", str(tmp_path)]
        )
        assert code == 0
        baseline = load_baseline(tmp_path / "X.ptrb")
        assert baseline.source_count == 3

    def test_single_capture_exits_2(self, gcode_file, tmp_path, capsys):
        _simulate(gcode_file, tmp_path / "run0")
        code = main(
            [
                "baseline",
                str(tmp_path / "run0" / "part_X.ptrc"),
                "--output",
                "X.ptrb",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == 2
        assert "at least 2" in capsys.readouterr().err

    def test_mixed_motors_exit_2(self, gcode_file, tmp_path, capsys):
        _simulate(gcode_file, tmp_path / "run0")
        code = main(
            [
                "baseline",
                str(tmp_path / "run0" / "part_X.ptrc"),
                str(tmp_path / "run0" / "part_Y.ptrc"),
                "--output",
                "mix.ptrb",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == 2
        assert "mix motors" in capsys.readouterr().err

    def test_glob_pattern_accepted(self, gcode_file, tmp_path):
        for seed in range(2):
            _simulate(gcode_file, tmp_path / "caps", seed=seed, prefix=f"run{seed}")
        code = main(
            [
                "baseline",
                str(tmp_path / "caps" / "run*_X.ptrc"),
                "--output",
                "X.ptrb",
                "--out",
                str(tmp_path),
            ]
        )
        assert code == 0


def _build_pipeline(gcode_file, tmp_path):
    """Golden baselines for all four motors plus one benign capture set."""
    for seed in range(3):
        _simulate(gcode_file, tmp_path / f"g{seed}", seed=seed)
    for motor in "XYZE":
        captures = [str(tmp_path / f"g{s}" / f"part_{motor}.ptrc") for s in range(3)]
        assert (
            main(["baseline", *captures, "--output", f"{motor}.ptrb", "--out", str(tmp_path)])
            == 0
        )
    _simulate(gcode_file, tmp_path / "probe", seed=100)


class TestDetect:
    def test_benign_capture_exits_0(self, gcode_file, tmp_path, capsys):
        _build_pipeline(gcode_file, tmp_path)
        argv = ["detect", "--out", str(tmp_path)]
        for motor in "XYZE":
            argv += ["--capture", str(tmp_path / "probe" / f"part_{motor}.ptrc")]
            argv += ["--baseline", str(tmp_path / f"{motor}.ptrb")]
        assert main(argv) == 0
        out = capsys.readouterr().out
        assert "report overall=benign" in out
        assert out.count("report motor=") == 4

    def test_attacked_capture_exits_1(self, gcode_file, tmp_path, capsys):
        _build_pipeline(gcode_file, tmp_path)
        assert (
            main(
                [
                    "attack",
                    str(gcode_file),
                    "--kind",
                    "insert",
                    "--layer",
                    "0",
                    "--position",
                    "2",
                    "--payload",
                    "G0 X24",
                    "--output",
                    "bad.gcode",
                    "--out",
                    str(tmp_path),
                ]
            )
            == 0
        )
        _simulate(tmp_path / "bad.gcode", tmp_path / "evil", seed=200)
        argv = ["detect", "--out", str(tmp_path)]
        for motor in "XYZE":
            argv += ["--capture", str(tmp_path / "evil" / f"bad_{motor}.ptrc")]
            argv += ["--baseline", str(tmp_path / f"{motor}.ptrb")]
        assert main(argv) == 1
        assert "report overall=malicious" in capsys.readouterr().out

    def test_missing_baseline_exits_2(self, gcode_file, tmp_path, capsys):
        _build_pipeline(gcode_file, tmp_path)
        argv = [
            "detect",
            "--capture",
            str(tmp_path / "probe" / "part_X.ptrc"),
            "--baseline",
            str(tmp_path / "Y.ptrb"),
            "--out",
            str(tmp_path),
        ]
        assert main(argv) == 2
        assert "no baseline" in capsys.readouterr().err


class TestExperimentCommand:
    def test_bad_config_exits_2(self, tmp_path, capsys):
        config = tmp_path / "exp.cfg"
        config.write_text("golden_count = banana\n")
        assert main(["experiment", str(config), "--out", str(tmp_path / "out")]) == 2
        assert "error" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        config = tmp_path / "exp.cfg"
        config.write_text("golden_counts = 3\n")
        assert main(["experiment", str(config), "--out", str(tmp_path / "out")]) == 2

    def test_small_experiment_via_config_file(self, tmp_path, capsys):
        config = tmp_path / "exp.cfg"
        config.write_text("golden_count = 2\nmalicious_count = 1\nseed = 0\n")
        assert main(["experiment", str(config), "--out", str(tmp_path / "out")]) == 0
        out = capsys.readouterr().out
        assert "DETECTED" in out
        assert (tmp_path / "out" / "matrix.txt").is_file()


class TestExperimentConfigParsing:
    def test_attack_overrides_parsed(self, tmp_path):
        import argparse

        from powertrace.cli import _experiment_config

        config_file = tmp_path / "exp.cfg"
        config_file.write_text(
            "golden_count = 2\n"
            "attack.insert.layer = 5\n"
            "attack.insert.payload = G0 X30\n"
            "attack.void.position = 3\n"
            "attack.reorder1.pair_offset = 11\n"
            "noise.idle_noise_sd = 0.01\n"
            "steps_per_mm.x = 10\n"
        )
        args = argparse.Namespace(config=config_file, seed=0, profile=None, out=tmp_path)
        config = _experiment_config(args)
        assert config.golden_count == 2
        assert config.noise.idle_noise_sd == 0.01
        assert config.profile.steps_per_mm.x == 10.0
        assert config.attacks["insert"][0].layer == 5
        assert config.attacks["insert"][0].payload.x == 30.0
        assert config.attacks["void"][0].position == 3
        assert config.attacks["reorder"][1].pair_offset == 11
        assert config.attacks["reorder"][0].pair_offset != 11

    def test_unknown_attack_field_rejected(self, tmp_path):
        import argparse

        from powertrace.cli import _experiment_config
        from powertrace.config import ConfigError

        config_file = tmp_path / "exp.cfg"
        config_file.write_text("attack.insert.speed = 3\n")
        args = argparse.Namespace(config=config_file, seed=0, profile=None, out=tmp_path)
        with pytest.raises(ConfigError, match="unknown attack field"):
            _experiment_config(args)


class TestProfileConfig:
    def test_profile_file_round_trips(self, gcode_file, tmp_path):
        profile = tmp_path / "printer.cfg"
        profile.write_text(
            "steps_per_mm.x = 8\nsteps_per_mm.y = 8\nsteps_per_mm.z = 2.2\n"
            "steps_per_mm.e = 0.6\nmax_feed.x = 1500\nrated_phase_current = 1.5\n"
        )
        code = main(
            [
                "simulate",
                str(gcode_file),
                "--profile",
                str(profile),
                "--out",
                str(tmp_path / "caps"),
            ]
        )
        assert code == 0

    def test_unknown_profile_key_exits_2(self, gcode_file, tmp_path, capsys):
        profile = tmp_path / "printer.cfg"
        profile.write_text("steps_per_mm.q = 8\n")
        code = main(
            ["simulate", str(gcode_file), "--profile", str(profile), "--out", str(tmp_path)]
        )
        assert code == 2


def test_module_entry_point(gcode_file, tmp_path):
    result = subprocess.run(
        [
            sys.executable,
            "-m",
            "powertrace",
            "simulate",
            str(gcode_file),
            "--out",
            str(tmp_path),
        ],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0
    assert (tmp_path / "part_X.ptrc").is_file()


def test_resolved_config_printed(gcode_file, tmp_path, capsys):
    _simulate(gcode_file, tmp_path)
    out = capsys.readouterr().out
    assert "config seed=0" in out
    assert "config out=" in out
