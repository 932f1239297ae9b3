"""Noise schedules and sampler configuration.

Timesteps are 1-based: t runs over [1, T]. alpha_bar(0) == 1 by convention
(the clean-image endpoint). Schedule tables are kept in float64 so the
running product stays stable for large T.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UsageError

DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    total_steps: int
    betas: np.ndarray        # shape (T,), float64, values in (0, 1)
    alphas: np.ndarray       # 1 - betas
    alpha_bars: np.ndarray   # cumulative product of alphas

    def alpha_bar(self, t: int) -> float:
        """alpha_bar at timestep t, with alpha_bar(0) == 1."""
        if t == 0:
            return 1.0
        if not 1 <= t <= self.total_steps:
            raise UsageError(f"timestep {t} outside [0, {self.total_steps}]")
        return float(self.alpha_bars[t - 1])

    def alpha(self, t: int) -> float:
        if not 1 <= t <= self.total_steps:
            raise UsageError(f"timestep {t} outside [1, {self.total_steps}]")
        return float(self.alphas[t - 1])


def build_schedule(total_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta schedule from beta_start to beta_end over total_steps."""
    if total_steps < 1:
        raise UsageError(f"total_steps must be >= 1, got {total_steps}")
    if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
        raise UsageError(f"betas must lie in (0, 1), got [{beta_start}, {beta_end}]")
    if beta_start > beta_end:
        raise UsageError(f"beta_start {beta_start} > beta_end {beta_end}")
    betas = np.linspace(beta_start, beta_end, total_steps, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(total_steps, betas, alphas, alpha_bars)


def default_schedule(total_steps: int) -> NoiseSchedule:
    """Linear schedule with the 1000-step endpoints rescaled by 1000/T."""
    scale = 1000.0 / total_steps
    return build_schedule(total_steps, DEFAULT_BETA_START * scale, DEFAULT_BETA_END * scale)


def select_ddim_timesteps(total_steps: int, ddim_steps: int) -> list[int]:
    """Uniformly spaced ascending subsequence of [1, T], ending exactly at T.

    Spacing is uniform to within +/-1; fractional positions round down.
    """
    if ddim_steps < 1:
        raise UsageError(f"ddim_steps must be >= 1, got {ddim_steps}")
    if ddim_steps > total_steps:
        raise UsageError(f"ddim_steps {ddim_steps} exceeds total_steps {total_steps}")
    return [(i * total_steps) // ddim_steps for i in range(1, ddim_steps + 1)]


@dataclass(frozen=True)
class SamplerConfig:
    ddim_steps: int
    eta: float = 0.0
    timestep_subsequence: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.ddim_steps < 1:
            raise UsageError(f"ddim_steps must be >= 1, got {self.ddim_steps}")
        if self.eta < 0:
            raise UsageError(f"eta must be >= 0, got {self.eta}")
        if self.timestep_subsequence:
            seq = self.timestep_subsequence
            if any(b <= a for a, b in zip(seq, seq[1:])):
                raise UsageError("timestep subsequence must be strictly ascending")

    def timesteps(self, schedule: NoiseSchedule) -> list[int]:
        if self.timestep_subsequence:
            if self.timestep_subsequence[-1] > schedule.total_steps:
                raise UsageError("timestep subsequence exceeds schedule length")
            return list(self.timestep_subsequence)
        return select_ddim_timesteps(schedule.total_steps, self.ddim_steps)


# Key-value config file (keys: total_steps, beta_start, beta_end, ddim_steps, eta, seed).

_INT_KEYS = {"total_steps", "ddim_steps", "seed"}
_FLOAT_KEYS = {"beta_start", "beta_end", "eta"}


def write_sampler_config(path, values: dict) -> None:
    unknown = set(values) - _INT_KEYS - _FLOAT_KEYS
    if unknown:
        raise UsageError(f"unknown sampler config keys: {sorted(unknown)}")
    lines = [f"{k} = {values[k]}" for k in sorted(values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_sampler_config(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in _INT_KEYS:
            values[key] = int(raw)
        elif key in _FLOAT_KEYS:
            values[key] = float(raw)
        else:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
    return values


def schedule_from_config(values: dict) -> NoiseSchedule:
    total = int(values["total_steps"])
    scale = 1000.0 / total
    start = values.get("beta_start", DEFAULT_BETA_START * scale)
    end = values.get("beta_end", DEFAULT_BETA_END * scale)
    return build_schedule(total, start, end)


def config_digest(values: dict) -> str:
    """Stable short digest of a config mapping, embedded into artifacts."""
    import hashlib

    blob = json.dumps(values, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
