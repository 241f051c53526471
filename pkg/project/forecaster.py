import logging
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import stats

from project.errors import InsufficientHistoryError, TraceRangeError
from project.market_model import SpotTrace

logger = logging.getLogger(__name__)

DEFAULT_AR_ORDER = 4

HEAVY_TAIL_DF = 3

# 80% of the scaled Student-t mass lies within +-level.
HEAVY_TAIL_SCALE = float(stats.t.ppf(0.9, df=HEAVY_TAIL_DF))


class MagnitudeMode(str, Enum):
    MAGNITUDE_DEPENDENT = "magnitude_dependent"
    FIXED_MAGNITUDE = "fixed_magnitude"


class NoiseDistribution(str, Enum):
    UNIFORM = "uniform"
    HEAVY_TAIL = "heavy_tail"


class Forecast(BaseModel):
    """
    Predictions for slots origin_slot .. origin_slot + horizon. Index 0 is the observed present.
    """

    model_config = ConfigDict(frozen=True)

    origin_slot: int = Field(ge=0)
    horizon: int = Field(ge=0)
    price_pred: Tuple[float, ...]
    avail_pred: Tuple[int, ...]

    @model_validator(mode="after")
    def _check_lengths(self) -> "Forecast":
        if len(self.price_pred) != self.horizon + 1 or len(self.avail_pred) != self.horizon + 1:
            raise ValueError("prediction lengths must equal horizon + 1")
        if any(p < 0 for p in self.price_pred) or any(a < 0 for a in self.avail_pred):
            raise ValueError("predictions must be nonnegative")
        return self


class NoiseSpec(BaseModel):
    """
    Controlled prediction error: relative level, additive or multiplicative, uniform or heavy-tailed.
    """

    model_config = ConfigDict(frozen=True)

    magnitude_mode: MagnitudeMode = MagnitudeMode.MAGNITUDE_DEPENDENT
    distribution: NoiseDistribution = NoiseDistribution.UNIFORM
    level: float = Field(default=0.0, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)


def _round_avail(values: np.ndarray) -> Tuple[int, ...]:
    return tuple(int(v) for v in np.maximum(np.floor(values + 0.5), 0))


def _fit_ar(y: np.ndarray, order: int) -> np.ndarray:
    rows = len(y) - order
    design = np.ones((rows, order + 1))
    for lag in range(1, order + 1):
        design[:, lag] = y[order - lag : len(y) - lag]
    coef, *_ = np.linalg.lstsq(design, y[order:], rcond=None)
    return coef


def _iterate_ar(y: np.ndarray, coef: np.ndarray, steps: int) -> np.ndarray:
    order = len(coef) - 1
    buf = list(y[-order:]) if order else []
    out = []
    for _ in range(steps):
        nxt = coef[0] + sum(coef[lag] * buf[-lag] for lag in range(1, order + 1))
        out.append(nxt)
        buf.append(nxt)
    return np.array(out, dtype=float)


def predict_ar(history: SpotTrace, t: int, horizon: int, order: int = DEFAULT_AR_ORDER) -> Forecast:
    """
    Fits AR(order) with intercept to price and availability separately by least squares on slots 0..t and
    iterates one-step predictions forward.

    Args:
        history (SpotTrace): trace whose slots 0..t are treated as observed; later slots are ignored.
        t (int): current slot.
        horizon (int): number of future slots to predict.
        order (int): autoregressive order.

    Returns:
        Forecast: index 0 holds the observed slot-t values.

    Raises:
        InsufficientHistoryError: fewer than max(order + 1, 2) observed slots; use predict_persistence instead.
    """
    if order < 1:
        raise ValueError("order must be positive")
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if t < 0 or t >= len(history):
        raise TraceRangeError(f"slot {t} outside history of {len(history)} slots")
    observed = t + 1
    if observed < max(order + 1, 2):
        raise InsufficientHistoryError(
            f"AR({order}) needs {max(order + 1, 2)} observed slots, have {observed}; fall back to persistence"
        )
    prices = history.prices[:observed]
    avails = history.avails[:observed].astype(float)
    price_ahead = _iterate_ar(prices, _fit_ar(prices, order), horizon)
    avail_ahead = _iterate_ar(avails, _fit_ar(avails, order), horizon)
    return Forecast(
        origin_slot=t,
        horizon=horizon,
        price_pred=(float(prices[-1]),) + tuple(float(p) for p in np.maximum(price_ahead, 0.0)),
        avail_pred=(int(avails[-1]),) + _round_avail(avail_ahead),
    )


def predict_persistence(history: SpotTrace, t: int, horizon: int) -> Forecast:
    """Repeats the observed slot-t values over the whole window."""
    if t < 0 or t >= len(history):
        raise TraceRangeError(f"slot {t} outside history of {len(history)} slots")
    slot = history.slots[t]
    return Forecast(
        origin_slot=t,
        horizon=horizon,
        price_pred=(slot.spot_price,) * (horizon + 1),
        avail_pred=(slot.spot_avail,) * (horizon + 1),
    )


def predict_perfect(truth: SpotTrace, t: int, horizon: int) -> Forecast:
    return predict_noisy_oracle(truth, t, horizon, NoiseSpec(level=0.0))


def _draw_errors(noise: NoiseSpec, t: int, tau: int) -> np.ndarray:
    rng = np.random.default_rng([noise.seed, t, tau])
    if noise.distribution is NoiseDistribution.UNIFORM:
        return rng.uniform(-noise.level, noise.level, size=2)
    return noise.level * rng.standard_t(HEAVY_TAIL_DF, size=2) / HEAVY_TAIL_SCALE


def series_means(trace: SpotTrace) -> Tuple[float, float]:
    """Mean spot price and mean availability over the whole trace."""
    return float(trace.prices.mean()), float(trace.avails.astype(float).mean())


def predict_noisy_oracle(
    truth: SpotTrace,
    t: int,
    horizon: int,
    noise: NoiseSpec,
    series_mean: Optional[Tuple[float, float]] = None,
) -> Forecast:
    """
    Perturbs the true future with per-slot errors. Magnitude-dependent noise scales the true value,
    fixed-magnitude noise scales the series mean (of `truth` unless series_mean is given). Each (seed, t, tau)
    has its own generator, so overlapping windows at different t draw independently and results never depend
    on call order.

    Args:
        truth (SpotTrace): must cover slots t..t+horizon.
        t (int): origin slot; tau = 0 is returned unperturbed.
        horizon (int): window length.
        noise (NoiseSpec): error law and level.
        series_mean (Optional[Tuple[float, float]]): price and availability means that scale
            fixed-magnitude noise. Pass the experiment trace's means when `truth` is only a job window.

    Returns:
        Forecast: perturbed predictions, prices clamped at 0, availability rounded to nonnegative integers.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    if t < 0 or t + horizon >= len(truth):
        raise TraceRangeError(
            f"truth covers {len(truth)} slots, need slots {t}..{t + horizon}"
        )
    prices = truth.prices
    avails = truth.avails.astype(float)
    window_p = prices[t : t + horizon + 1].copy()
    window_a = avails[t : t + horizon + 1].copy()
    if noise.level > 0 and horizon > 0:
        fixed = noise.magnitude_mode is MagnitudeMode.FIXED_MAGNITUDE
        mean_p, mean_a = series_mean if series_mean is not None else series_means(truth)
        for tau in range(1, horizon + 1):
            eps_p, eps_a = _draw_errors(noise, t, tau)
            if fixed:
                window_p[tau] += eps_p * mean_p
                window_a[tau] += eps_a * mean_a
            else:
                window_p[tau] *= 1.0 + eps_p
                window_a[tau] *= 1.0 + eps_a
    return Forecast(
        origin_slot=t,
        horizon=horizon,
        price_pred=tuple(float(p) for p in np.maximum(window_p, 0.0)),
        avail_pred=_round_avail(window_a),
    )


def prediction_budget(truth: SpotTrace, forecasts: Sequence[Forecast], omega: int, n_max: int) -> float:
    """
    Utility-level omega-step prediction error accumulated over forecasts. For one slot the largest cost gap
    any feasible allocation can see is n_max * |p - p_hat|, since at most n_max spot instances are rented.
    """
    budget = 0.0
    for fc in forecasts:
        if fc.horizon < omega:
            continue
        target = fc.origin_slot + omega
        if target >= len(truth):
            continue
        budget += n_max * abs(truth.slots[target].spot_price - fc.price_pred[omega])
    return budget


def cheap_availability(forecasts: Sequence[Forecast], omega: int, threshold: float) -> float:
    """
    Largest omega-step availability prediction among forecasts whose omega-step price is at or under
    `threshold`; 0 when none is.
    """
    best = 0
    for fc in forecasts:
        if fc.horizon >= omega and fc.price_pred[omega] <= threshold:
            best = max(best, fc.avail_pred[omega])
    return float(best)
