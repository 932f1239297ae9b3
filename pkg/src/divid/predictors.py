"""Noise-predictor contract and named predictor registry.

A predictor maps (state, timestep) -> predicted noise of identical shape and
must be a pure function of its inputs. Predictors declare whether a single
instance may be shared across workers; non-shareable ones are replicated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import UsageError


class NoisePredictor:
    """Base contract: subclasses implement predict(x, t) -> array like x."""

    resolution: tuple[int, int] = (16, 16)
    channels: int = 3
    shareable: bool = True

    def predict(self, x: np.ndarray, t: int) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray, t: int) -> np.ndarray:
        out = self.predict(x, t)
        if out.shape != x.shape:
            raise UsageError(
                f"predictor output shape {out.shape} != input shape {x.shape}"
            )
        return out

    def replicate(self) -> "NoisePredictor":
        """Per-worker copy; shareable predictors may return self."""
        return self


class ZeroPredictor(NoisePredictor):
    """Predicts zero noise everywhere. Closed-form sampler behavior."""

    def __init__(self, resolution=(16, 16), channels=3):
        self.resolution = tuple(resolution)
        self.channels = channels

    def predict(self, x, t):
        return np.zeros_like(x)


class FunctionPredictor(NoisePredictor):
    """Wraps a plain (x, t) -> array callable; handy for tests and toys."""

    def __init__(self, fn: Callable[[np.ndarray, int], np.ndarray],
                 resolution=(16, 16), channels=3, shareable=True):
        self._fn = fn
        self.resolution = tuple(resolution)
        self.channels = channels
        self.shareable = shareable

    def predict(self, x, t):
        return self._fn(x, t)


@dataclass(frozen=True)
class PredictorSpec:
    name: str
    resolution: tuple[int, int]
    channels: int
    checkpoint: str  # locator string; "" for parameterless predictors
    factory: Callable[..., NoisePredictor]
    requires_checkpoint: bool = False


_REGISTRY: dict[str, PredictorSpec] = {}


def register_predictor(spec: PredictorSpec) -> None:
    if spec.name in _REGISTRY:
        raise UsageError(f"predictor {spec.name!r} already registered")
    _REGISTRY[spec.name] = spec


def predictor_names() -> list[str]:
    return sorted(_REGISTRY)


def get_predictor(name: str, checkpoint: str | None = None) -> NoisePredictor:
    if name not in _REGISTRY:
        raise UsageError(f"unknown predictor {name!r}; known: {predictor_names()}")
    spec = _REGISTRY[name]
    locator = checkpoint if checkpoint is not None else spec.checkpoint
    if spec.requires_checkpoint and not locator:
        raise UsageError(f"predictor {name!r} requires a checkpoint locator")
    return spec.factory(locator) if locator else spec.factory()


register_predictor(PredictorSpec(
    name="zero", resolution=(16, 16), channels=3, checkpoint="",
    factory=lambda: ZeroPredictor(),
))
