"""Renyi-DP accountant for the Poisson-subsampled Gaussian mechanism."""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from ..errors import AccountingError, CalibrationError, ValidationError

log = logging.getLogger(__name__)

DEFAULT_ORDERS: tuple[float, ...] = (1.25, 1.5, 1.75, *map(float, range(2, 65)), 128.0, 256.0)

SIGMA_BRACKET = (1e-2, 1e4)


@dataclass(frozen=True)
class DpConfig:
    """DP-SGD parameters. ``target_epsilon=inf`` means the no-noise baseline."""

    noise_multiplier: float
    sampling_rate: float
    steps: int
    delta: float
    clip_norm: float = 1.0
    target_epsilon: float = math.inf

    def __post_init__(self):
        if not self.clip_norm > 0:
            raise ValidationError("clip_norm must be > 0")
        if not self.noise_multiplier >= 0:
            raise ValidationError("noise_multiplier must be >= 0")
        if not 0 < self.sampling_rate <= 1:
            raise ValidationError("sampling_rate must lie in (0, 1]")
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if not self.target_epsilon > 0:
            raise ValidationError("target_epsilon must be > 0 or inf")
        if math.isinf(self.target_epsilon) != (self.noise_multiplier == 0):
            raise ValidationError("target_epsilon=inf if and only if noise_multiplier=0")

    @property
    def noiseless(self) -> bool:
        return self.noise_multiplier == 0

    @classmethod
    def calibrated(
        cls,
        target_epsilon: float,
        delta: float,
        sampling_rate: float,
        steps: int,
        clip_norm: float = 1.0,
    ) -> "DpConfig":
        sigma = calibrate_sigma(target_epsilon, delta, sampling_rate, max(steps, 1))
        return cls(sigma, sampling_rate, steps, delta, clip_norm, target_epsilon)


@dataclass(frozen=True)
class DpBudget:
    """What the user asks for; resolved into a :class:`DpConfig` once the data size is known."""

    target_epsilon: float
    delta: float
    clip_norm: float = 1.0

    def __post_init__(self):
        if not self.target_epsilon > 0:
            raise ValidationError("target_epsilon must be > 0 or inf")
        if not 0 < self.delta < 1:
            raise ValidationError("delta must lie in (0, 1)")
        if not self.clip_norm > 0:
            raise ValidationError("clip_norm must be > 0")

    def for_training(self, n: int, batch_size: int, epochs: int) -> DpConfig:
        """Config for ``epochs`` passes of Poisson sampling at ``q = batch_size / n``."""
        q = min(1.0, batch_size / n)
        steps = epochs * math.ceil(1 / q - 1e-12)
        if math.isinf(self.target_epsilon):
            return DpConfig(0.0, q, steps, self.delta, self.clip_norm)
        return DpConfig.calibrated(self.target_epsilon, self.delta, q, steps, self.clip_norm)


@dataclass(frozen=True)
class RdpCurve:
    orders: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.orders) != len(self.values):
            raise ValidationError("orders and values differ in length")
        if any(b <= a for a, b in zip(self.orders, self.orders[1:])):
            raise ValidationError("orders must be strictly increasing")
        if any(a <= 1 for a in self.orders):
            raise ValidationError("orders must exceed 1")
        if any(not (math.isfinite(v) and v >= 0) for v in self.values):
            raise ValidationError("RDP values must be finite and non-negative")


@dataclass(frozen=True)
class PrivacySpent:
    epsilon: float
    delta: float
    order: float | None = None


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    """log E[(p1/p0)^alpha] for the subsampled Gaussian at integer alpha."""
    k = np.arange(alpha + 1, dtype=np.float64)
    log_binom = gammaln(alpha + 1) - gammaln(k + 1) - gammaln(alpha - k + 1)
    terms = log_binom + k * math.log(q) + (alpha - k) * math.log1p(-q) + (k * k - k) / (2 * sigma**2)
    return float(logsumexp(terms))


def rdp_subsampled_gaussian(
    sigma: float, q: float, steps: int, orders: Sequence[float] = DEFAULT_ORDERS
) -> RdpCurve:
    """RDP of ``steps`` compositions of the subsampled Gaussian mechanism.

    At ``q == 1`` the exact Gaussian value ``steps * alpha / (2 sigma^2)`` is
    used at every order. For ``q < 1`` only integer orders are computable
    with the binomial expansion; the others are dropped.
    """
    if not sigma > 0:
        raise ValidationError("sigma must be > 0")
    if not 0 < q <= 1:
        raise ValidationError("q must lie in (0, 1]")
    if steps < 0:
        raise ValidationError("steps must be >= 0")
    kept_orders, values = [], []
    for alpha in sorted(set(float(a) for a in orders)):
        if alpha <= 1:
            continue
        if q == 1.0:
            value = steps * alpha / (2 * sigma**2)
        elif alpha.is_integer():
            value = steps * _log_a_int(q, sigma, int(alpha)) / (alpha - 1)
        else:
            continue
        if math.isfinite(value):
            kept_orders.append(alpha)
            values.append(max(value, 0.0))
    if not kept_orders:
        raise AccountingError(f"no usable RDP order among {list(orders)} (q={q})")
    return RdpCurve(tuple(kept_orders), tuple(values))


def rdp_to_dp(curve: RdpCurve, delta: float) -> PrivacySpent:
    """Standard conversion: eps = min_a [rdp(a) + log(1/delta) / (a - 1)]."""
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    if not curve.orders:
        raise AccountingError("empty RDP curve")
    orders = np.asarray(curve.orders)
    eps = np.asarray(curve.values) + math.log(1 / delta) / (orders - 1)
    best = int(np.argmin(eps))
    return PrivacySpent(float(eps[best]), delta, float(orders[best]))


@functools.lru_cache(maxsize=4096)
def _epsilon(sigma: float, q: float, steps: int, delta: float, orders: tuple[float, ...]) -> PrivacySpent:
    return rdp_to_dp(rdp_subsampled_gaussian(sigma, q, steps, orders), delta)


def epsilon_spent(cfg: DpConfig, orders: Sequence[float] = DEFAULT_ORDERS) -> PrivacySpent:
    if cfg.steps == 0:
        return PrivacySpent(0.0, cfg.delta)
    if cfg.noise_multiplier == 0:
        return PrivacySpent(math.inf, cfg.delta)
    return _epsilon(cfg.noise_multiplier, cfg.sampling_rate, cfg.steps, cfg.delta, tuple(orders))


def _eps_for_sigma(sigma, q, steps, delta, orders):
    return _epsilon(sigma, q, steps, delta, orders).epsilon


@functools.lru_cache(maxsize=1024)
def _calibrate(target: float, delta: float, q: float, steps: int, orders: tuple[float, ...]) -> float:
    lo, hi = SIGMA_BRACKET
    if _eps_for_sigma(hi, q, steps, delta, orders) > target:
        raise CalibrationError(
            f"epsilon={target} unreachable: even sigma={hi} exceeds it "
            f"(bracket [{lo}, {hi}], q={q}, steps={steps}, delta={delta})"
        )
    if _eps_for_sigma(lo, q, steps, delta, orders) <= target:
        raise CalibrationError(
            f"epsilon={target} is met by sigma={lo} already; "
            f"no tight sigma in bracket [{lo}, {hi}]"
        )
    # invariant: eps(lo) > target >= eps(hi)
    while hi / lo > 1 + 1e-5:
        mid = math.sqrt(lo * hi)
        if _eps_for_sigma(mid, q, steps, delta, orders) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def calibrate_sigma(
    target_epsilon: float,
    delta: float,
    q: float,
    steps: int,
    orders: Sequence[float] = DEFAULT_ORDERS,
) -> float:
    """Smallest noise multiplier (to 1e-5 relative) whose epsilon stays within target.

    ``target_epsilon = inf`` gives 0 (no noise).
    """
    if math.isinf(target_epsilon) and target_epsilon > 0:
        return 0.0
    if not target_epsilon > 0:
        raise ValidationError("target_epsilon must be > 0")
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    sigma = _calibrate(float(target_epsilon), float(delta), float(q), int(steps), tuple(orders))
    log.debug("calibrated sigma=%.6g for eps=%g q=%g T=%d", sigma, target_epsilon, q, steps)
    return sigma


def with_steps(cfg: DpConfig, steps: int) -> DpConfig:
    return replace(cfg, steps=steps)
