"""Random-walk toy comparison of environment, TS and Infoprop rollouts.

Trains the ensemble on environment data, then compares per-step cross-sections
of 1000 model rollouts of each kind against environment rollouts driven by the
same action sequences. Termination is disabled so all rollouts reach T.

    python3 scripts/toy_example.py --out runs/toy --seed 0
    python3 scripts/toy_example.py --seeds 0 1 2 3 4 5   # spread over master seeds
"""
from __future__ import annotations

import argparse
import json
from pathlib import Path

from infoprop.toy import run


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", type=Path, default=Path("runs/toy"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--seeds", type=int, nargs="*")
    args = parser.parse_args(argv)
    results = [run(s, args.out / f"seed{s}") for s in (args.seeds if args.seeds else [args.seed])]
    for r in results:
        print(json.dumps(r))
    if len(results) > 1:
        print(f"(a) pass {sum(r['a_ts_std_exceeds_analytic'] for r in results)}/{len(results)}  "
              f"(b) pass {sum(r['b_pass'] for r in results)}/{len(results)}  "
              f"(c) pass {sum(r['c_pass'] for r in results)}/{len(results)}")


if __name__ == "__main__":
    main()
