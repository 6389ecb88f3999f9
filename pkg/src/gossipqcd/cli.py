"""Command-line entry point.

Each subcommand resolves its options against the config, runs, writes one or
two CSV files plus ``<subcommand>-manifest.json`` into the output directory.
``rerun`` replays a manifest. Exit status: 0 success, 1 runtime error,
2 usage error. Errors are printed as one ``CODE: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional

from . import __version__
from .config import config_from_dict, config_to_dict, load_config, mode_label, parse_modes, with_seed
from .errors import GossipQCDError, MissingSeed
from .experiments import ExperimentConfig, first_layer, kl_convergence_sweep, second_layer_curve
from .gossip import mask_members, subset_distribution_exact, subset_distribution_mc
from .markov import bounds_vs_window
from .topology import averaged_matrix
from .validation import run_invariant_suite

log = logging.getLogger("gossipqcd")

FLOAT_FORMAT = ".17g"


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, FLOAT_FORMAT)
    try:
        return format(float(value), FLOAT_FORMAT) if hasattr(value, "dtype") and value.dtype.kind == "f" else str(value)
    except (TypeError, AttributeError):
        return str(value)


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in columns])


def parse_range(text: str, kind=float) -> list:
    """``"1..15"`` (inclusive), ``"20..60:5"`` (with step) or ``"2,4,8"``."""
    text = text.strip()
    try:
        if ".." in text:
            bounds, _, step = text.partition(":")
            lo, hi = (kind(x) for x in bounds.split(".."))
            step = kind(step) if step else kind(1)
            if step <= 0 or hi < lo:
                raise ValueError
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return [kind(lo + k * step) for k in range(count)]
        return [kind(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}; use a..b, a..b:step or a,b,c") from None


# ---------------------------------------------------------------- subcommands


def _owners(cfg: ExperimentConfig, owner) -> list[int]:
    return list(range(cfg.node_count)) if owner == "all" else [int(owner)]


FIRST_LAYER_COLUMNS = [
    "mode", "sensor", "A", "cadd1", "cadd1_se", "pfa", "pfa_se", "ln_pfa",
    "ln_pfa_se", "false_alarms", "pfa_trials", "cadd_trials", "add", "add_se", "censored", "horizon",
]
DECAY_COLUMNS = ["mode", "sensor", "slope", "stderr", "target_rate", "intercept", "r_squared", "points"]


def run_first_layer(cfg: ExperimentConfig, opts: dict, out: Path, workers: int = 1) -> list[str]:
    from dataclasses import replace

    cfg = replace(
        cfg,
        modes=parse_modes(opts["modes"], cfg.node_count),
        thresholds=tuple(opts["thresholds"]),
        trials_per_threshold=opts["trials"],
    )
    results = first_layer(cfg, workers=workers)
    rows, fits = [], []
    for res in results:
        for p in res.points:
            rows.append(
                {
                    "mode": res.mode.kind, "sensor": res.mode.sensor, "A": p.threshold,
                    "cadd1": p.cadd1, "cadd1_se": p.cadd1_se, "pfa": p.pfa, "pfa_se": p.pfa_se,
                    "ln_pfa": p.log_pfa, "ln_pfa_se": p.log_pfa_se, "false_alarms": p.false_alarms,
                    "pfa_trials": p.pfa_trials, "cadd_trials": p.cadd_trials, "add": p.add,
                    "add_se": p.add_se, "censored": p.censored, "horizon": p.horizon,
                }
            )
        f = res.fit
        fits.append(
            {
                "mode": res.mode.kind, "sensor": res.mode.sensor, "target_rate": res.target,
                "slope": f.slope if f else math.nan, "stderr": f.slope_stderr if f else math.nan,
                "intercept": f.intercept if f else math.nan, "r_squared": f.r_squared if f else math.nan,
                "points": f.points if f else 0,
            }
        )
    write_csv(out / "first-layer.csv", FIRST_LAYER_COLUMNS, rows)
    write_csv(out / "decay-fits.csv", DECAY_COLUMNS, fits)
    return ["first-layer.csv", "decay-fits.csv"]


SECOND_LAYER_COLUMNS = ["gamma", "owner", "incomplete_probability", "rate", "upper_rate", "lower_rate", "window", "method"]


def run_second_layer(cfg, opts, out, workers=1):
    rows = []
    for owner in _owners(cfg, opts["owner"]):
        rows += second_layer_curve(cfg, opts["gammas"], owner, opts["L"])
    write_csv(out / "second-layer.csv", SECOND_LAYER_COLUMNS, rows)
    return ["second-layer.csv"]


KL_COLUMNS = ["gamma", "owner", "exact_dkl", "thm4_lower", "thm4_upper", "centralized_kl"]


def run_kl_sweep(cfg, opts, out, workers=1):
    rows = []
    for owner in _owners(cfg, opts["owner"]):
        rows += kl_convergence_sweep(cfg, opts["gammas"], owner, opts["L"])
    write_csv(out / "kl-sweep.csv", KL_COLUMNS, rows)
    return ["kl-sweep.csv"]


BOUNDS_COLUMNS = ["L", "alpha", "beta", "upper_rate", "lower_rate"]


def run_bounds(cfg, opts, out, workers=1):
    params = bounds_vs_window(averaged_matrix(cfg.distribution), opts["target"], opts["L"])
    rows = [
        {"L": bp.window, "alpha": bp.alpha, "beta": bp.beta, "upper_rate": bp.upper_rate, "lower_rate": bp.lower_rate}
        for bp in params
    ]
    write_csv(out / "bounds.csv", BOUNDS_COLUMNS, rows)
    return ["bounds.csv"]


GOSSIP_COLUMNS = ["gamma", "owner", "subset_mask", "subset", "probability", "method", "stderr"]


def run_gossip_stats(cfg, opts, out, workers=1):
    import numpy as np

    rows = []
    for owner in _owners(cfg, opts["owner"]):
        dists = []
        if opts["method"] in ("exact", "both"):
            dists.append(subset_distribution_exact(cfg.distribution, opts["gamma"], owner, cfg.tail_eps))
        if opts["method"] in ("mc", "both"):
            rng = np.random.default_rng(np.random.SeedSequence(cfg.master_seed, spawn_key=(8, owner)))
            dists.append(subset_distribution_mc(cfg.distribution, opts["gamma"], owner, opts["trials"], rng))
        for sd in dists:
            for mask in range(sd.probs.size):
                if not mask >> owner & 1:
                    continue
                rows.append(
                    {
                        "gamma": opts["gamma"], "owner": owner, "subset_mask": mask,
                        "subset": " ".join(str(j) for j in mask_members(mask, sd.node_count)),
                        "probability": float(sd.probs[mask]), "method": sd.method,
                        "stderr": float(sd.stderr[mask]) if sd.stderr is not None else None,
                    }
                )
    write_csv(out / "gossip-stats.csv", GOSSIP_COLUMNS, rows)
    return ["gossip-stats.csv"]


def run_validate(cfg, opts, out, workers=1):
    results = run_invariant_suite(cfg)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    write_csv(
        out / "validate.csv",
        ["check", "passed", "detail"],
        [{"check": r.name, "passed": r.passed, "detail": r.detail} for r in results],
    )
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise GossipQCDError(f"invariant checks failed: {', '.join(failed)}")
    return ["validate.csv"]


RUNNERS: dict[str, Callable] = {
    "first-layer": run_first_layer,
    "second-layer": run_second_layer,
    "kl-sweep": run_kl_sweep,
    "bounds": run_bounds,
    "gossip-stats": run_gossip_stats,
    "validate": run_validate,
}


def needs_seed(sub: str, cfg: ExperimentConfig, opts: dict) -> bool:
    if sub == "first-layer":
        return True
    if sub == "gossip-stats":
        return opts["method"] != "exact"
    if sub in ("second-layer", "kl-sweep"):
        from .gossip import EXACT_NODE_CAP

        return not (cfg.distribution.enumerated and cfg.node_count <= EXACT_NODE_CAP)
    return False


def resolve_options(sub: str, args: argparse.Namespace, cfg: ExperimentConfig) -> dict:
    """Materialize every option so a manifest replays without defaults."""
    if sub == "first-layer":
        modes = args.modes.split(",") if args.modes else [mode_label(m) for m in cfg.all_modes()]
        return {
            "modes": modes,
            "thresholds": args.thresholds if args.thresholds is not None else list(cfg.thresholds),
            "trials": args.trials if args.trials is not None else cfg.trials_per_threshold,
        }
    if sub in ("second-layer", "kl-sweep"):
        default = [g for g in cfg.gamma_grid if g >= 20] if sub == "second-layer" else list(cfg.gamma_grid)
        return {
            "gammas": args.gammas if args.gammas is not None else default,
            "owner": args.owner,
            "L": args.L if args.L is not None else cfg.window,
        }
    if sub == "bounds":
        return {"L": args.L if args.L is not None else list(range(1, cfg.window + 1)), "target": args.target}
    if sub == "gossip-stats":
        return {
            "gamma": args.gamma if args.gamma is not None else cfg.gamma,
            "owner": args.owner,
            "method": args.method,
            "trials": args.trials if args.trials is not None else cfg.trials_per_threshold,
        }
    return {}


def execute(sub: str, cfg: ExperimentConfig, opts: dict, out: Path, workers: int = 1) -> list[str]:
    if needs_seed(sub, cfg, opts) and cfg.master_seed is None:
        raise MissingSeed(f"{sub} needs --seed (or simulation.seed in the config)")
    out.mkdir(parents=True, exist_ok=True)
    outputs = RUNNERS[sub](cfg, opts, out, workers)
    manifest = {
        "tool": "gossipqcd",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "subcommand": sub,
        "master_seed": cfg.master_seed,
        "options": opts,
        "config": config_to_dict(cfg),
        "outputs": outputs,
    }
    (out / f"{sub}-manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return outputs


def rerun(manifest_path: Path, out: Path, workers: int = 1) -> list[str]:
    from .errors import ParseError

    try:
        manifest = json.loads(Path(manifest_path).read_text())
        sub = manifest["subcommand"]
        cfg = with_seed(config_from_dict(manifest["config"]), manifest.get("master_seed"))
        opts = manifest["options"]
    except (OSError, ValueError, KeyError) as exc:
        raise ParseError(f"cannot read manifest {manifest_path}: {exc}") from exc
    if sub not in RUNNERS:
        raise ParseError(f"manifest names unknown subcommand {sub!r}")
    return execute(sub, cfg, opts, out, workers)


# ---------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gossipqcd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gossipqcd {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress warnings")
    subs = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    def add(name, help_text, aliases=()):
        p = subs.add_parser(name, help=help_text, aliases=list(aliases))
        p.add_argument("config", help="TOML config file ('reference.cfg' resolves to the bundled one)")
        p.add_argument("-o", "--output-dir", type=Path, default=Path("."))
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides simulation.seed)")
        p.set_defaults(command=name)
        return p

    p = add("first-layer", "false-alarm probability vs delay and decay-rate fits")
    p.add_argument("--modes", help="comma list, e.g. centralized,isolated:0,distributed")
    p.add_argument("--thresholds", type=parse_range, help="comma list of thresholds A")
    p.add_argument("--trials", type=int, help="trials per threshold and run kind")
    p.add_argument("--workers", type=int, default=1)

    for name, aliases, text in (
        ("second-layer", (), "exact log incomplete-gossip probability over gamma"),
        ("kl-sweep", ("kl-bounds",), "exact distributed KL number and its bounds over gamma"),
    ):
        p = add(name, text, aliases)
        p.add_argument("--gammas", type=parse_range)
        p.add_argument("--owner", default="0", help="sensor index or 'all'")
        p.add_argument("--L", type=int, help="hitting-time window")

    p = add("bounds", "hitting-tail bound parameters over the window L")
    p.add_argument("--L", type=lambda s: parse_range(s, int), help="e.g. 1..15")
    p.add_argument("--target", type=int, default=0)

    p = add("gossip-stats", "reach-set distribution at one sensor")
    p.add_argument("--gamma", type=float)
    p.add_argument("--owner", default="0", help="sensor index or 'all'")
    p.add_argument("--method", choices=("exact", "mc", "both"), default="exact")
    p.add_argument("--trials", type=int)

    add("validate", "run the invariant suite")

    p = subs.add_parser("rerun", help="replay a run manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("-o", "--output-dir", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s %(message)s")
    workers = getattr(args, "workers", 1)
    try:
        if args.command == "rerun":
            rerun(args.manifest, args.output_dir, workers)
            return 0
        cfg = with_seed(load_config(args.config), args.seed)
        opts = resolve_options(args.command, args, cfg)
        if "owner" in opts and opts["owner"] != "all":
            opts["owner"] = int(opts["owner"])
        execute(args.command, cfg, opts, args.output_dir, workers)
        return 0
    except MissingSeed as exc:
        print(exc.one_line(), file=sys.stderr)
        return 2
    except GossipQCDError as exc:
        print(exc.one_line(), file=sys.stderr)
        return 1
    except (ValueError, IndexError, OSError) as exc:
        print(f"E_RUNTIME: {' '.join(str(exc).split())}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
