"""Euclidean (MSE), approximated Bures and integrated losses on alpha vectors.

All losses take predictions of shape ``(..., d**2)`` as a Tensor and targets
as an array of the same shape, and return the mean over the batch of the
per-sample value as a scalar Tensor.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DegenerateTarget, ShapeMismatch

NORM_EPS = 1e-12
DEFAULT_BETA = 0.09


@dataclass
class LossConfig:
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")


def _prepare(alpha_hat, alpha):
    alpha_hat = ad.as_tensor(alpha_hat)
    alpha = np.asarray(getattr(alpha, "data", alpha), dtype=np.float64)
    if alpha_hat.shape != alpha.shape:
        raise ShapeMismatch(f"prediction {alpha_hat.shape} vs target {alpha.shape}")
    return alpha_hat, alpha


def mse_distance(alpha_hat, alpha):
    alpha_hat, alpha = _prepare(alpha_hat, alpha)
    diff = alpha_hat - alpha
    return ad.mean(diff * diff)


def bures_approx(alpha_hat, alpha):
    """``1 - cos`` of the angle between prediction and target, batch-averaged."""
    alpha_hat, alpha = _prepare(alpha_hat, alpha)
    t_norm = np.linalg.norm(alpha, axis=-1, keepdims=True)
    if np.any(t_norm <= NORM_EPS):
        raise DegenerateTarget("target alpha vector has (near) zero norm")
    dot = ad.sum_(alpha_hat * (alpha / t_norm), axis=-1, keepdims=True)
    # clamp before the root so a zero prediction has a finite gradient
    p_norm = ad.sqrt(ad.clamp_min(ad.sum_(alpha_hat * alpha_hat, axis=-1, keepdims=True),
                                  NORM_EPS ** 2))
    return ad.mean(1.0 - dot / p_norm)


def integrated_loss(alpha_hat, alpha, cfg=None, parts=False):
    """``β·bures_approx + (1-β)·mse``; with ``parts=True`` also return both terms."""
    beta = (cfg or LossConfig()).beta
    upsilon = bures_approx(alpha_hat, alpha)
    mu = mse_distance(alpha_hat, alpha)
    total = ad.scale(upsilon, beta) + ad.scale(mu, 1.0 - beta)
    if parts:
        return total, upsilon, mu
    return total
