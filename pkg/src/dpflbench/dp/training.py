"""DP-SGD training loop."""

from __future__ import annotations

import math

import numpy as np

from ..models import Model, per_example_grads, sgd_step, train_sgd
from .accountant import DpConfig, PrivacySpent, epsilon_spent, with_steps
from .mechanism import noisy_batch_gradient


def steps_per_epoch(sampling_rate: float) -> int:
    return math.ceil(1 / sampling_rate - 1e-12)


def expected_batch_size(cfg: DpConfig, n: int) -> int:
    return max(1, round(cfg.sampling_rate * n))


def dpsgd_train(
    model: Model,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: DpConfig,
    lr: float,
    epochs: int,
    rng: np.random.Generator,
) -> tuple[Model, PrivacySpent]:
    """Poisson-sampled DP-SGD for ``epochs * ceil(1/q)`` steps.

    A noiseless config (``target_epsilon = inf``) runs :func:`train_sgd`
    with batch size ``round(q n)`` instead: no clipping, no noise, and the
    exact same trace as plain SGD under the same stream.
    """
    n = len(labels)
    batch = expected_batch_size(cfg, n)
    if cfg.noiseless:
        return train_sgd(model, features, labels, lr, epochs, batch, rng), PrivacySpent(math.inf, cfg.delta)

    steps = epochs * steps_per_epoch(cfg.sampling_rate)
    p = model.spec.num_params
    for _ in range(steps):
        mask = rng.random(n) < cfg.sampling_rate
        if mask.any():
            g = per_example_grads(model, features[mask], labels[mask])
        else:
            g = np.zeros((0, p))
        noisy = noisy_batch_gradient(g, cfg.clip_norm, cfg.noise_multiplier, batch, rng, p)
        model = sgd_step(model, noisy, lr)
    return model, epsilon_spent(with_steps(cfg, steps))
