"""
Сжатое (tanh) гауссово распределение для головы актора SAC.

Выход сети делится пополам: первая половина - среднее, вторая - log std.
Действие получается как mid + scale * tanh(mean + std * noise), где
mid/scale - середина и полуширина диапазона действий.
"""

from __future__ import annotations
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..models.errors import DimensionMismatchError

LOG_STD_BOUNDS = (-20.0, 2.0)
# Сжатие масштаба, чтобы действие никогда не достигало границ точно
SCALE_SHRINK = 1e-6
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_LOG_2 = np.log(2.0)


@dataclass(frozen=True, eq=False)
class SquashedSample:
    """Выборка действия и промежуточные величины для обратного прохода"""
    action: np.ndarray
    log_prob: np.ndarray
    squashed: np.ndarray     # tanh(u)
    std: np.ndarray
    noise: np.ndarray
    clip_mask: np.ndarray    # 1 там, где log std не обрезан
    scale: np.ndarray


def _split_head(head_output: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    head_output = np.asarray(head_output, dtype=np.float64)
    if head_output.shape[-1] % 2:
        raise DimensionMismatchError("squashed-Gaussian head output", head_output.shape[-1] + 1,
                                     head_output.shape[-1])
    if not np.all(np.isfinite(head_output)):
        raise ValueError("squashed-Gaussian head output contains non-finite entries")
    half = head_output.shape[-1] // 2
    return head_output[..., :half], head_output[..., half:]


def _bounds(action_low: np.ndarray, action_high: np.ndarray, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    low = np.asarray(action_low, dtype=np.float64)
    high = np.asarray(action_high, dtype=np.float64)
    if low.shape != (dim,) or high.shape != (dim,):
        raise DimensionMismatchError("action bounds", dim, low.size)
    mid = 0.5 * (high + low)
    scale = 0.5 * (high - low) * (1.0 - SCALE_SHRINK)
    return mid, scale


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def log_one_minus_tanh_sq(u: np.ndarray) -> np.ndarray:
    """Устойчивое log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u))"""
    return 2.0 * (_LOG_2 - u - _softplus(-2.0 * u))


def sample_squashed_gaussian(head_output: np.ndarray,
                             noise: np.ndarray,
                             action_low: np.ndarray,
                             action_high: np.ndarray,
                             log_std_bounds: Tuple[float, float] = LOG_STD_BOUNDS) -> SquashedSample:
    """
    Репараметризованная выборка действия и его логарифм плотности

    Args:
        head_output: [mean, log_std] (вектор или батч)
        noise: Стандартный нормальный шум той же формы, что mean

    Returns:
        SquashedSample; log_prob учитывает поправку замены переменных tanh
        и аффинного масштабирования в диапазон действий
    """
    mean, raw_log_std = _split_head(head_output)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != mean.shape:
        raise DimensionMismatchError("noise", mean.shape[-1], noise.shape[-1] if noise.ndim else 0)
    mid, scale = _bounds(action_low, action_high, mean.shape[-1])

    low_bound, high_bound = log_std_bounds
    log_std = np.clip(raw_log_std, low_bound, high_bound)
    clip_mask = ((raw_log_std >= low_bound) & (raw_log_std <= high_bound)).astype(np.float64)
    std = np.exp(log_std)

    u = mean + std * noise
    squashed = np.tanh(u)
    action = mid + scale * squashed

    log_prob = np.sum(
        -0.5 * noise * noise - log_std - _HALF_LOG_2PI - log_one_minus_tanh_sq(u) - np.log(scale),
        axis=-1,
    )
    return SquashedSample(action=action, log_prob=log_prob, squashed=squashed, std=std,
                          noise=noise, clip_mask=clip_mask, scale=np.broadcast_to(scale, mean.shape))


def squashed_gaussian_backward(sample: SquashedSample,
                               action_grad: np.ndarray,
                               log_prob_grad: np.ndarray) -> np.ndarray:
    """
    Градиент по выходу сети [mean, log_std] при фиксированном шуме

    action_grad - dL/da той же формы, что действие; log_prob_grad - dL/dlog_prob
    (скаляр на пример).
    """
    action_grad = np.asarray(action_grad, dtype=np.float64)
    log_prob_grad = np.asarray(log_prob_grad, dtype=np.float64)[..., None]
    t = sample.squashed
    grad_u = action_grad * sample.scale * (1.0 - t * t) + log_prob_grad * 2.0 * t
    grad_mean = grad_u
    grad_log_std = (grad_u * sample.std * sample.noise - log_prob_grad) * sample.clip_mask
    return np.concatenate([grad_mean, grad_log_std], axis=-1)


def deterministic_action(head_output: np.ndarray, action_low: np.ndarray, action_high: np.ndarray) -> np.ndarray:
    """Детерминированное действие: tanh(mean), масштабированное в диапазон"""
    mean, _ = _split_head(head_output)
    mid, scale = _bounds(action_low, action_high, mean.shape[-1])
    return mid + scale * np.tanh(mean)


def squashed_gaussian_log_prob(head_output: np.ndarray,
                               action: np.ndarray,
                               action_low: np.ndarray,
                               action_high: np.ndarray,
                               log_std_bounds: Tuple[float, float] = LOG_STD_BOUNDS) -> np.ndarray:
    """Логарифм плотности заданного действия (обратное отображение через atanh)"""
    mean, raw_log_std = _split_head(head_output)
    mid, scale = _bounds(action_low, action_high, mean.shape[-1])
    log_std = np.clip(raw_log_std, *log_std_bounds)
    squashed = (np.asarray(action, dtype=np.float64) - mid) / scale
    if np.any(np.abs(squashed) >= 1.0):
        raise ValueError("action lies outside the open support of the squashed distribution")
    u = np.arctanh(squashed)
    noise = (u - mean) / np.exp(log_std)
    return np.sum(
        -0.5 * noise * noise - log_std - _HALF_LOG_2PI - log_one_minus_tanh_sq(u) - np.log(scale),
        axis=-1,
    )
