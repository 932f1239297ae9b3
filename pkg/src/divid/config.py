"""Run configuration: flags > config file > built-in defaults.

The DIVID_HOME environment variable sets the artifact root (cache, default
output locations); everything else comes from flags or the config file.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .schedule import config_digest, read_sampler_config

DEFAULTS = {
    "total_steps": 1000,
    "ddim_steps": 20,
    "eta": 0.0,
    "seed": 0,
    "beta_start": None,  # None -> scaled defaults from the schedule module
    "beta_end": None,
}

ENV_HOME = "DIVID_HOME"


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)
    output_root: Path = field(default_factory=Path.cwd)

    @property
    def digest(self) -> str:
        return config_digest(self.values)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)


def resolve_config(flag_values: dict, config_file: str | None = None) -> RunConfig:
    """Merge: explicit flags override config-file keys, which override defaults.
    Flag values of None mean "not given"."""
    values = dict(DEFAULTS)
    if config_file:
        values.update(read_sampler_config(config_file))
    values.update({k: v for k, v in flag_values.items() if v is not None})
    root = Path(os.environ.get(ENV_HOME, os.getcwd()))
    return RunConfig(values=values, output_root=root)
