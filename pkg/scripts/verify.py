"""Run the Monte-Carlo and exactness oracles and print one line per check.

    python3 scripts/verify.py --seed 0 [--quick] [--json report.json]

Exit status is 0 when every check passes, 2 otherwise (same as ``infoprop verify``).
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from infoprop.oracles import run_all_oracles
from infoprop.storage import write_json

CHECKS = ("conditioned_distribution", "entropy_additivity", "entropy_additivity_rank_deficient",
          "fusion_identity", "epistemic_variance", "quantile")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quick", action="store_true", help="fewer random sets per check")
    parser.add_argument("--json", type=Path, help="also write the full report here")
    args = parser.parse_args(argv)

    report = run_all_oracles(args.seed, quick=args.quick)
    for name in CHECKS:
        print(f"{name:36s} {'PASS' if report[name]['pass'] else 'FAIL'}")
    detected = report["conditioned_mutation_gain_halved"]["detected"]
    print(f"{'halved-gain mutant detected':36s} {'PASS' if detected else 'FAIL'}")
    if args.json:
        write_json(args.json, report)
    return 0 if report["pass"] else 2


if __name__ == "__main__":
    sys.exit(main())
