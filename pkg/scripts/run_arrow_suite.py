#!/usr/bin/env python3
"""Run the full set of time's-arrow experiments over the shipped fixtures.

For every fixture this runs the forward experiment, the reverse experiment,
and (for the freeze rules of both rule sets) the suspension counterfactual,
then prints a verdict table. Exit status is nonzero if any verdict deviates
from the expected pattern: forward flows, reverse blocks, suspended flows,
restored blocks.

Example:

    python3 scripts/run_arrow_suite.py --seeds 25 --out-dir /tmp/arrow_suite
"""

import argparse
import json
import os
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from gapflow.arrow import (BLOCKED, FLOWED, forward_experiment, reverse_experiment,
                           suspension_counterfactual)
from gapflow.dynamics import IntegratorConfig
from gapflow.fixtures import BUILDERS

ARROW_FIXTURES = ("two_level", "two_mode_symmetric", "three_mode")


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=10,
                    help="reverse-run seeds per fixture (default 10)")
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--t-max", type=float, default=6.0)
    ap.add_argument("--out-dir", default=None,
                    help="optional directory for a JSON summary")
    return ap.parse_args()


def main():
    args = parse_args()
    cfg = IntegratorConfig(dt=args.dt, t_max=args.t_max)
    failures = 0
    summary = {}

    for name in ARROW_FIXTURES:
        model = BUILDERS[name]()
        fwd = forward_experiment(model, cfg)
        rows = [("forward", fwd.verdict, FLOWED, fwd.max_backflow, fwd.total_hits)]

        worst_back = 0.0
        total_hits = 0
        for seed in range(args.seeds):
            rev = reverse_experiment(model, cfg, seed=seed)
            worst_back = max(worst_back, rev.max_backflow)
            total_hits += rev.total_hits
        rev_verdict = BLOCKED if (worst_back == 0.0 and total_hits == 0) else FLOWED
        rows.append((f"reverse x{args.seeds}", rev_verdict, BLOCKED,
                     worst_back, total_hits))

        for rule in ("n3_1", "n4_4"):
            sus, res = suspension_counterfactual(model, cfg, rule)
            rows.append((f"suspended {rule}", sus.verdict, FLOWED,
                         sus.max_backflow, sus.total_hits))
            rows.append((f"restored {rule}", res.verdict, BLOCKED,
                         res.max_backflow, res.total_hits))

        print(f"\n{name}")
        for label, verdict, expected, back, hits in rows:
            ok = verdict == expected
            failures += not ok
            mark = "ok" if ok else "MISMATCH"
            print(f"  {label:<18} verdict={verdict:<8} expected={expected:<8} "
                  f"max_backflow={back:.6g} hits={hits} [{mark}]")
        summary[name] = [
            {"experiment": label, "verdict": verdict, "expected": expected,
             "max_backflow": back, "hits": hits}
            for label, verdict, expected, back, hits in rows
        ]

    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        path = os.path.join(args.out_dir, "arrow_suite.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"\nwrote {path}")

    print(f"\n{failures} mismatching verdict(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
