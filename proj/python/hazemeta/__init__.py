"""Meta-learned domain-generalizing dehazer: Python bindings for the core ops."""

import torch as _torch  # noqa: F401  (loads the shared libtorch libraries first)

from ._core import (
    Session,
    average_aggregate,
    ce_loss,
    contextual_loss,
    dark_channel_mean,
    dcr_loss,
    distance_aware_aggregate,
    invert_hazy,
    pairwise_mean_distance,
    pixel_loss,
    psnr,
    run_gradient_checks,
    ssim_loss,
    ssim_metric,
    synthesize_hazy,
    transmission_map,
)

__all__ = [
    "Session",
    "average_aggregate",
    "ce_loss",
    "contextual_loss",
    "dark_channel_mean",
    "dcr_loss",
    "distance_aware_aggregate",
    "invert_hazy",
    "pairwise_mean_distance",
    "pixel_loss",
    "psnr",
    "run_gradient_checks",
    "ssim_loss",
    "ssim_metric",
    "synthesize_hazy",
    "transmission_map",
]
