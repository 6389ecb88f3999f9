"""Shared argument handling for the experiment scripts."""

import argparse
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def parser(description: str, default_out: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default="reference.cfg")
    p.add_argument("--seed", type=int, default=20240601)
    p.add_argument("-o", "--output-dir", default=str(ROOT / "results" / default_out))
    return p
