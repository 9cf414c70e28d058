"""Compare Monte Carlo estimates against the exact answer across many seeds.

    python scripts/monte_carlo_seeds.py --seeds 100 --runs 10000
"""

import argparse
import os

from pmps import query as Q
from pmps import semantics as M
from pmps.syntax import parse_file

HERE = os.path.dirname(os.path.abspath(__file__))
DEFAULT_FILE = os.path.join(HERE, "..", "protocols", "twobuyers.pmps")
DEFAULT_QUERY = 'sent(as,"The Art of War") | sent(as,0195014766) & chose(ab, quote/3)'


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--file", default=DEFAULT_FILE)
    ap.add_argument("--system", default="TwoBuyers")
    ap.add_argument("--query", default=DEFAULT_QUERY)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--runs", type=int, default=10000)
    ap.add_argument("--depth", type=int, default=20)
    args = ap.parse_args()

    with open(args.file, encoding="utf-8") as fh:
        p = parse_file(fh.read()).systems[args.system]
    exact = Q.event_probability(M.build_graph(p, args.depth, unroll=True), args.query)
    print(f"exact: {exact.lo}" if exact.exact else f"exact range: [{exact.lo}, {exact.hi}]")
    inside = 0
    for seed in range(args.seeds):
        r = Q.monte_carlo(p, args.query, args.runs, seed)
        dist = max(float(exact.lo) - r.estimate, r.estimate - float(exact.hi), 0.0)
        ok = dist <= 5 * r.stderr
        inside += ok
        print(f"seed {seed}: {r.estimate:.4f} ± {r.stderr:.4f}" + ("" if ok else "  outside 5 stderr"))
    print(f"{inside}/{args.seeds} within 5 standard errors")


if __name__ == "__main__":
    main()
