"""Scalar loss formulas over precomputed frames, features and discriminator scores."""

from dataclasses import dataclass

import numpy as np

from .data_io import FeatureTensor, Frame
from .errors import ConfigError, DataError

SCORE_CLAMP = 1e-7


def _values(x):
    if isinstance(x, Frame):
        return x.pixels.astype(np.float64)
    if isinstance(x, FeatureTensor):
        return x.values
    return np.asarray(x, dtype=np.float64)


def mse_loss(a, b):
    """Mean squared difference over all elements of two frames or feature tensors."""
    if type(a) is not type(b) and (isinstance(a, (Frame, FeatureTensor))
                                   or isinstance(b, (Frame, FeatureTensor))):
        raise DataError(f"cannot compare {type(a).__name__} with {type(b).__name__}")
    va, vb = _values(a), _values(b)
    if va.shape != vb.shape:
        raise DataError(f"shape mismatch: {va.shape} vs {vb.shape}")
    return float(np.mean((va - vb) ** 2))


def perceptual_loss(feat_a, feat_b):
    """Mean squared difference between two ``psi`` feature tensors."""
    if feat_a.dim != feat_b.dim:
        raise DataError(f"feature dim mismatch: {feat_a.dim} vs {feat_b.dim}")
    if feat_a.source != "psi" or feat_b.source != "psi":
        raise DataError(f"perceptual loss needs psi features, got {feat_a.source}/{feat_b.source}")
    return float(np.mean((feat_a.values - feat_b.values) ** 2))


@dataclass(frozen=True)
class ScorePair:
    """Discriminator outputs on real and generated inputs, clamped into (0, 1)."""

    real_scores: np.ndarray
    fake_scores: np.ndarray

    def __post_init__(self):
        for name in ("real_scores", "fake_scores"):
            v = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if v.size == 0:
                raise DataError(f"{name} must be nonempty")
            if not np.isfinite(v).all():
                raise DataError(f"{name} contains non-finite values")
            object.__setattr__(self, name, np.clip(v, SCORE_CLAMP, 1.0 - SCORE_CLAMP))


def adversarial_loss(scores):
    """``mean(log D(real)) + mean(log(1 - D(fake)))``.

    Used for both the per-frame quality discriminator and the windowed
    temporal discriminator; only the score lists differ.
    """
    if not isinstance(scores, ScorePair):
        scores = ScorePair(*scores)
    return float(np.mean(np.log(scores.real_scores)) + np.mean(np.log1p(-scores.fake_scores)))


quality_adversarial_loss = adversarial_loss
temporal_adversarial_loss = adversarial_loss


def combined_generator_loss(gw, perceptual, weights=(1.0, 1.0)):
    w_gw, w_p = weights
    if w_gw < 0 or w_p < 0:
        raise ConfigError("loss weights must be >= 0")
    if w_gw == 0 and w_p == 0:
        raise ConfigError("at least one loss weight must be nonzero")
    if not (np.isfinite(gw) and np.isfinite(perceptual)):
        raise DataError("loss inputs must be finite")
    return w_gw * gw + w_p * perceptual


@dataclass(frozen=True)
class LossBreakdown:
    mse: float
    perceptual: float
    gw: float
    quality_adv: float
    temporal_adv: float
    total: float

    @classmethod
    def build(cls, *, mse, perceptual, gw, quality_adv, temporal_adv, weights=(1.0, 1.0)):
        total = combined_generator_loss(gw, perceptual, weights)
        out = cls(mse, perceptual, gw, quality_adv, temporal_adv, total)
        if not all(np.isfinite(v) for v in (mse, perceptual, gw, quality_adv, temporal_adv)):
            raise DataError("loss components must be finite")
        return out
