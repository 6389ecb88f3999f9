"""Incomplete-gossip probability after a fixed number of rounds versus a
Poisson number of rounds with the same mean, on the reference network.

Shows where the hitting-time bound lines apply: with exactly m rounds the
rate (1/m) ln P tends to ln(alpha)/L, while Poisson mixing gives
-(1 - alpha^(1/L)) in the limit.
"""

import csv
import math
import sys
from pathlib import Path

from _common import parser

from gossipqcd.config import load_config
from gossipqcd.gossip import incomplete_after_rounds, incomplete_probability, subset_distribution_exact
from gossipqcd.markov import bound_params
from gossipqcd.topology import averaged_matrix

if __name__ == "__main__":
    p = parser(__doc__.splitlines()[0], "fixed-rounds")
    p.add_argument("--owner", type=int, default=0)
    p.add_argument("--max-rounds", type=int, default=60)
    a = p.parse_args()
    cfg = load_config(a.config)
    bp = bound_params(averaged_matrix(cfg.distribution), a.owner, cfg.window)
    fixed_probs = incomplete_after_rounds(cfg.distribution, a.owner, a.max_rounds)
    out = Path(a.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fixed-rounds.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rounds", "fixed_rate", "poisson_rate", "upper_rate", "lower_rate", "poisson_limit"])
        for m in range(1, a.max_rounds + 1):
            fixed = math.log(fixed_probs[m]) / m
            sd = subset_distribution_exact(cfg.distribution, float(m), a.owner, cfg.tail_eps)
            poisson = math.log(incomplete_probability(sd)) / m
            limit = -(1 - bp.alpha ** (1 / bp.window))
            w.writerow([m] + [format(x, ".17g") for x in (fixed, poisson, bp.upper_rate, bp.lower_rate, limit)])
    sys.exit(0)
