"""Experiment configuration files: {q, n, reps, blocks, seed, thresholds}."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

REQUIRED_KEYS = ("q", "n", "reps", "blocks", "seed", "thresholds")


def packaged_configs() -> list:
    return sorted(p.name for p in resources.files(__package__).joinpath("configs").iterdir()
                  if p.name.endswith(".json"))


def load_config(name_or_path) -> dict:
    """Load a config by path, or by the file name of a packaged config."""
    path = Path(name_or_path)
    if path.exists():
        text = path.read_text()
    else:
        res = resources.files(__package__).joinpath("configs", str(name_or_path))
        if not res.is_file():
            raise FileNotFoundError(f"no config file {name_or_path!r}")
        text = res.read_text()
    cfg = json.loads(text)
    missing = [k for k in REQUIRED_KEYS if k not in cfg]
    if missing:
        raise ValueError(f"config lacks keys {missing}")
    return cfg


def default_thresholds(experiment: str) -> dict:
    names = {"clt": "clt_q0.5.json", "lds": "lds_q0.5.json", "block_lds_tail": "block_tail_q0.5.json"}
    return dict(load_config(names[experiment])["thresholds"])
