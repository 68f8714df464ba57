"""Per-example clipping and the Gaussian noise step of DP-SGD."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError, ValidationError


def clip_gradient(g: np.ndarray, clip_norm: float) -> np.ndarray:
    """Scale ``g`` by ``min(1, C / ||g||)``; returns ``g`` itself when already inside the ball."""
    if not clip_norm > 0:
        raise ValidationError("clip_norm must be > 0")
    g = np.asarray(g, dtype=np.float64)
    if not np.all(np.isfinite(g)):
        raise NumericError("cannot clip a non-finite gradient")
    norm = float(np.linalg.norm(g))
    if norm <= clip_norm:
        return g
    out = g * (clip_norm / norm)
    # rounding can leave the norm an ulp above C
    n2 = float(np.linalg.norm(out))
    if n2 > clip_norm:
        out = out * (clip_norm / n2)
    return out


def clip_rows(grads: np.ndarray, clip_norm: float) -> np.ndarray:
    """Row-wise ``clip_gradient`` for an (n, P) matrix of per-example gradients."""
    if not clip_norm > 0:
        raise ValidationError("clip_norm must be > 0")
    grads = np.asarray(grads, dtype=np.float64)
    if not np.all(np.isfinite(grads)):
        raise NumericError("cannot clip non-finite gradients")
    norms = np.linalg.norm(grads, axis=1)
    scale = np.minimum(1.0, clip_norm / np.maximum(norms, np.finfo(float).tiny))
    return grads * scale[:, None]


def noisy_batch_gradient(
    per_example: np.ndarray,
    clip_norm: float,
    noise_multiplier: float,
    expected_batch: float,
    rng: np.random.Generator,
    num_params: int | None = None,
) -> np.ndarray:
    """``(sum_i clip(g_i) + N(0, (sigma C)^2 I)) / expected_batch``.

    ``per_example`` may have zero rows (an empty Poisson sample); then
    ``num_params`` gives the output length.
    """
    if noise_multiplier < 0:
        raise ValidationError("noise_multiplier must be >= 0")
    if not expected_batch >= 1:
        raise ValidationError("expected_batch must be >= 1")
    per_example = np.asarray(per_example, dtype=np.float64)
    if per_example.ndim != 2:
        if num_params is None:
            raise ValidationError("per_example must be 2-D or num_params given")
        per_example = per_example.reshape(0, num_params)
    p = per_example.shape[1]
    total = clip_rows(per_example, clip_norm).sum(axis=0) if len(per_example) else np.zeros(p)
    if noise_multiplier > 0:
        total = total + rng.normal(0.0, noise_multiplier * clip_norm, size=p)
    return total / expected_batch
