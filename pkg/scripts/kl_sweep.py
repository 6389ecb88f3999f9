"""Exact distributed KL number against gamma, with its asymptotic bounds."""

import sys

from _common import parser

from gossipqcd.cli import main

if __name__ == "__main__":
    p = parser(__doc__, "kl-sweep")
    p.add_argument("--gammas", default="0..60:2")
    a = p.parse_args()
    sys.exit(main(["kl-sweep", a.config, "--gammas", a.gammas, "--owner", "all", "-o", a.output_dir]))
