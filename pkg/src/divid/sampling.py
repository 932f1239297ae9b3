"""Forward diffusion, DDPM/DDIM reverse steps, and the deterministic
inversion/reconstruction pair used for reconstruction-error extraction.

All operations are pure functions of their inputs. Sampler arithmetic runs in
the dtype of the state array (float32 minimum); schedule coefficients come in
as float64 scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, UsageError
from .predictors import NoisePredictor
from .schedule import NoiseSchedule, SamplerConfig


@dataclass(frozen=True)
class LatentState:
    values: np.ndarray
    t: int


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise UsageError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def forward_diffuse(x0: np.ndarray, t: int, eps: np.ndarray,
                    schedule: NoiseSchedule) -> LatentState:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    if not 1 <= t <= schedule.total_steps:
        raise UsageError(f"timestep {t} outside [1, {schedule.total_steps}]")
    _check_shapes(x0, eps, "forward_diffuse")
    abar = schedule.alpha_bar(t)
    return LatentState(math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * eps, t)


def predict_x0(x_t: LatentState, predictor: NoisePredictor,
               schedule: NoiseSchedule) -> LatentState:
    """x0_hat = (x_t - sqrt(1 - abar_t) eps_theta(x_t, t)) / sqrt(abar_t)."""
    abar = schedule.alpha_bar(x_t.t)
    if abar == 0.0:
        raise NumericError(f"alpha_bar({x_t.t}) == 0: cannot divide")
    eps_hat = predictor(x_t.values, x_t.t)
    x0 = (x_t.values - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)
    return LatentState(x0, 0)


def ddpm_reverse_step(x_t: LatentState, predictor: NoisePredictor,
                      schedule: NoiseSchedule, eps: np.ndarray) -> LatentState:
    """One ancestral step: x_{t-1} from x_t with DDPM step-noise scale."""
    t = x_t.t
    if t < 1:
        raise UsageError(f"ddpm_reverse_step requires t >= 1, got {t}")
    _check_shapes(x_t.values, eps, "ddpm_reverse_step")
    alpha = schedule.alpha(t)
    abar = schedule.alpha_bar(t)
    eps_hat = predictor(x_t.values, t)
    mean = (x_t.values - ((1.0 - alpha) / math.sqrt(1.0 - abar)) * eps_hat) / math.sqrt(alpha)
    sigma = ddim_sigma(schedule, t, t - 1, eta=1.0)
    return LatentState(mean + sigma * eps, t - 1)


def ddim_sigma(schedule: NoiseSchedule, t: int, t_prev: int, eta: float) -> float:
    """sigma = eta * sqrt((1-abar_prev)/(1-abar_t)) * sqrt(1 - abar_t/abar_prev)."""
    if t_prev >= t:
        raise UsageError(f"t_prev {t_prev} must be < t {t}")
    if eta < 0:
        raise UsageError(f"eta must be >= 0, got {eta}")
    if eta == 0.0:
        return 0.0
    abar_t = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t_prev)
    if abar_t == 1.0:
        raise NumericError(f"alpha_bar({t}) == 1: sigma undefined")
    return eta * math.sqrt((1.0 - abar_prev) / (1.0 - abar_t)) \
               * math.sqrt(1.0 - abar_t / abar_prev)


def ddim_step(x_t: LatentState, t_prev: int, predictor: NoisePredictor,
              schedule: NoiseSchedule, sigma: float,
              eps: np.ndarray | None = None) -> LatentState:
    """x_prev = sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev - sigma^2) eps_hat + sigma eps."""
    t = x_t.t
    if t_prev >= t:
        raise UsageError(f"t_prev {t_prev} must be < t {t}")
    abar = schedule.alpha_bar(t)
    abar_prev = schedule.alpha_bar(t_prev)
    radicand = 1.0 - abar_prev - sigma * sigma
    if radicand < 0:
        raise NumericError(
            f"sigma {sigma} too large: 1 - abar_prev - sigma^2 = {radicand} < 0"
        )
    eps_hat = predictor(x_t.values, t)
    x0_hat = (x_t.values - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)
    x_prev = math.sqrt(abar_prev) * x0_hat + math.sqrt(radicand) * eps_hat
    if sigma > 0:
        if eps is None:
            raise UsageError("sigma > 0 requires a noise array")
        _check_shapes(x_t.values, eps, "ddim_step")
        x_prev = x_prev + sigma * eps
    return LatentState(x_prev, t_prev)


def invert(x0: np.ndarray, predictor: NoisePredictor, schedule: NoiseSchedule,
           config: SamplerConfig) -> LatentState:
    """Map an image to noise space: sigma=0 DDIM updates in ascending t.

    Each update evaluates the predictor at the current (less noisy) state but
    with the target timestep, mirroring the reconstruction pass, which
    evaluates at the noisier end of each step pair. The mirrored timestep
    makes the round trip cancel to first order.
    """
    if config.eta != 0.0:
        raise UsageError("inversion is undefined for eta != 0")
    timesteps = config.timesteps(schedule)
    state = LatentState(np.asarray(x0), 0)
    for t_next in timesteps:
        abar = schedule.alpha_bar(state.t)
        abar_next = schedule.alpha_bar(t_next)
        eps_hat = predictor(state.values, t_next)
        x0_hat = (state.values - math.sqrt(1.0 - abar) * eps_hat) / math.sqrt(abar)
        values = math.sqrt(abar_next) * x0_hat + math.sqrt(1.0 - abar_next) * eps_hat
        state = LatentState(values, t_next)
    return state


def reconstruct(x_T: LatentState, predictor: NoisePredictor,
                schedule: NoiseSchedule, config: SamplerConfig,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Reverse pass over the timestep subsequence down to t=0.

    Deterministic when eta=0; eta>0 draws step noise from rng (required then).
    """
    timesteps = config.timesteps(schedule)
    if not timesteps:
        raise UsageError("empty timestep subsequence")
    if x_T.t != timesteps[-1]:
        raise UsageError(
            f"state at t={x_T.t} does not match final subsequence step {timesteps[-1]}"
        )
    if config.eta > 0 and rng is None:
        raise UsageError("eta > 0 requires an rng for step noise")
    state = x_T
    prevs = [0] + timesteps[:-1]
    for t, t_prev in zip(reversed(timesteps), reversed(prevs)):
        sigma = ddim_sigma(schedule, t, t_prev, config.eta)
        eps = rng.standard_normal(state.values.shape).astype(state.values.dtype) \
            if sigma > 0 else None
        state = ddim_step(state, t_prev, predictor, schedule, sigma, eps)
    return state.values
