#!/usr/bin/env python3
"""Run the full detectability experiment with default settings.

Simulates 10 golden prints of the benchmark object, builds per-motor
baselines, then evaluates 3 benign prints plus 3 prints of each of the four
sabotage mutations and prints the resulting detectability matrix.  Artifacts
(baselines, per-run reports, deviation/excess series, matrix) land in the
output directory.
"""

import argparse
from pathlib import Path

from powertrace.harness import ExperimentConfig, render_matrix, run_experiment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("experiment_out"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--golden", type=int, default=10, help="golden prints per motor")
    parser.add_argument("--runs", type=int, default=3, help="prints per attack (and benign)")
    parser.add_argument(
        "--save-traces", action="store_true", help="also write every capture as a .ptrc file"
    )
    args = parser.parse_args()

    config = ExperimentConfig(
        golden_count=args.golden,
        malicious_count=args.runs,
        seed=args.seed,
        save_traces=args.save_traces,
    )
    matrix = run_experiment(config, args.out)
    print(render_matrix(matrix), end="")
    print(f"\nartifacts: {args.out.resolve()}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
