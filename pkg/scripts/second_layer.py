"""Exact (1/gamma) ln P(incomplete gossip) next to the hitting-time bound lines."""

import sys

from _common import parser

from gossipqcd.cli import main

if __name__ == "__main__":
    p = parser(__doc__, "second-layer")
    p.add_argument("--gammas", default="20..60:2")
    p.add_argument("--L", default="15")
    a = p.parse_args()
    sys.exit(main(["second-layer", a.config, "--gammas", a.gammas, "--L", a.L, "--owner", "all", "-o", a.output_dir]))
