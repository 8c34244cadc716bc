"""Desk-scale simulation study: p = 200, n = 100, block sizes 1/5/15/25.

Writes ``results.csv`` and ``experiment_config.json`` to ``--out`` and prints
per-scenario medians for each approach.

    python3 scripts/run_desk_experiment.py --out results/desk --replications 10
"""

import argparse
import csv
import statistics
import sys
import time
from collections import defaultdict
from pathlib import Path

from stabtune.cli import main as cli_main


def summarise(path: Path) -> None:
    groups = defaultdict(list)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if not row["error"]:
                groups[(row["scenario_id"], row["approach"])].append(row)
    print(f"{'scenario':<16}{'approach':<8}{'reps':>5}{'acc':>8}{'fp':>6}{'fn':>6}{'size':>6}")
    for (sid, a), rows in groups.items():
        med = lambda c: statistics.median(float(r[c]) for r in rows)  # noqa: E731
        print(f"{sid:<16}{a:<8}{len(rows):>5}{med('test_accuracy'):>8.3f}"
              f"{med('false_positives'):>6.1f}{med('false_negatives'):>6.1f}{med('n_selected'):>6.1f}")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/desk")
    ap.add_argument("--replications", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    argv = ["experiment", "--desk-scale", "--out", args.out, "--seed", str(args.seed),
            "--replications", str(args.replications), "--record-timing"]
    if args.threads:
        argv += ["--threads", str(args.threads)]
    start = time.perf_counter()
    code = cli_main(argv)
    print(f"finished in {time.perf_counter() - start:.0f} s (exit {code})")
    if code == 0:
        summarise(Path(args.out) / "results.csv")
    return code


if __name__ == "__main__":
    sys.exit(main())
