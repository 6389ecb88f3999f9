"""Bound parameters alpha, beta and their rates for windows L = 1..15."""

import sys

from _common import parser

from gossipqcd.cli import main

if __name__ == "__main__":
    p = parser(__doc__, "bounds")
    p.add_argument("--L", default="1..15")
    a = p.parse_args()
    sys.exit(main(["bounds", a.config, "--L", a.L, "-o", a.output_dir]))
