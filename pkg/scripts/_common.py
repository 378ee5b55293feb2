"""Helpers shared by the experiment scripts."""

import argparse
import dataclasses
from pathlib import Path

from erase.cli import scene_spec
from erase.config import load_json, pipeline_config

ROOT = Path(__file__).resolve().parents[1]


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", type=Path, default=ROOT / "configs" / "default.json")
    p.add_argument("--seed", type=int, default=None, help="scene seed")
    p.add_argument("--trials", type=int, default=None, help="override the number of trials")
    return p


def load(args):
    raw = load_json(args.config)
    spec = scene_spec(raw, args.seed)
    if args.trials is not None:
        spec = dataclasses.replace(spec, n_trials=args.trials)
        spec.validate()
    return spec, pipeline_config(raw)
