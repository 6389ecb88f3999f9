"""False-alarm decay against CADD_1 for every detector, with rate fits.

Full scale (10^5 trials per threshold) takes about four minutes per core.
"""

import sys

from _common import parser

from gossipqcd.cli import main

if __name__ == "__main__":
    p = parser(__doc__.splitlines()[0], "first-layer")
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    sys.exit(main(["first-layer", a.config, "--seed", str(a.seed), "--trials", str(a.trials),
                   "--workers", str(a.workers), "-o", a.output_dir]))
