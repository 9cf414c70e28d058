"""Run the metatheory checks over a batch of generated systems.

    python scripts/metatheory_at_scale.py --count 500 --depth 12

Prints one summary line per check and a final count of counterexamples.
Use ``--records`` to get one JSON line per failing record instead.
"""

import argparse
import json
import random
import time

from pmps import metatheory as MT
from pmps.generate import generate_systems, perturb
from pmps.typing import TypeCheckError, typecheck


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--depth", type=int, default=12)
    ap.add_argument("--perturbed", type=int, default=100)
    ap.add_argument("--records", action="store_true")
    args = ap.parse_args()

    systems = generate_systems(args.count, seed=args.seed)
    rng = random.Random(args.seed)
    failures = {}
    t0 = time.perf_counter()
    for s in systems:
        for rep in MT.run_all(s.gamma, s.process, args.depth, rng):
            bad = rep.failures()
            failures[rep.name] = failures.get(rep.name, 0) + len(bad)
            if args.records:
                for r in bad:
                    print(json.dumps({"seed": s.seed, **r.to_json()}))

    rejected = with_error = 0
    for s in systems[:args.perturbed]:
        bad = perturb(s)
        try:
            typecheck(bad.gamma, bad.process)
        except TypeCheckError:
            rejected += 1
        if MT.error_edges(bad.process, args.depth):
            with_error += 1

    for name, n in sorted(failures.items()):
        print(f"{name}: {n} counterexamples over {len(systems)} systems")
    n = min(args.perturbed, len(systems))
    print(f"perturbed: {rejected}/{n} rejected by typecheck, {with_error}/{n} with an error edge")
    print(f"total counterexamples: {sum(failures.values())} ({time.perf_counter() - t0:.1f}s)")


if __name__ == "__main__":
    main()
