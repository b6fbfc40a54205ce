"""Helpers shared by the experiment scripts."""

import argparse
from pathlib import Path

from wavefocus.config import load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def parser(description: str, default_config: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", type=Path, default=CONFIGS / default_config)
    p.add_argument("--out", type=Path, help="output directory, overrides output_dir")
    return p


def load(args):
    config = load_config(args.config)
    return config, args.out if args.out is not None else Path(config.output_dir)
