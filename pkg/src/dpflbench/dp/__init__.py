"""DP-SGD mechanism, RDP accounting, sigma calibration and an enumeration verifier."""

from .accountant import (
    DEFAULT_ORDERS,
    DpBudget,
    DpConfig,
    PrivacySpent,
    RdpCurve,
    calibrate_sigma,
    epsilon_spent,
    rdp_subsampled_gaussian,
    rdp_to_dp,
)
from .mechanism import clip_gradient, clip_rows, noisy_batch_gradient
from .training import dpsgd_train
from .verify import DiscreteMechanism, randomized_response, smallest_epsilon, verify_dp_enumeration

__all__ = [
    "DEFAULT_ORDERS",
    "DiscreteMechanism",
    "DpBudget",
    "DpConfig",
    "PrivacySpent",
    "RdpCurve",
    "calibrate_sigma",
    "clip_gradient",
    "clip_rows",
    "dpsgd_train",
    "epsilon_spent",
    "noisy_batch_gradient",
    "randomized_response",
    "rdp_subsampled_gaussian",
    "rdp_to_dp",
    "smallest_epsilon",
    "verify_dp_enumeration",
]
