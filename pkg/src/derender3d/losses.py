"""Attribute prediction loss, masked reprojection loss, and their combination."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Quaternion, ReparamCode, YawAngle
from .raster import SilhouetteImage, masked_l1

DEFAULT_LAMBDA_REPROJ = 0.1


def _as_quaternion(rotation) -> Quaternion:
    """Accept either a YawAngle (constrained mode) or a full Quaternion."""
    if isinstance(rotation, YawAngle):
        return rotation.to_quaternion()
    if isinstance(rotation, Quaternion):
        return rotation
    raise TypeError(f"rotation must be YawAngle or Quaternion, got {type(rotation)!r}")


@dataclass(frozen=True)
class AttributeSet:
    """One side of an attribute comparison: scale, rotation, reparametrized
    translation."""

    scale: tuple[float, float, float]
    rotation: object  # YawAngle or Quaternion
    code: ReparamCode

    def __post_init__(self):
        if any(s <= 0 for s in self.scale):
            raise ValueError("scale components must be positive")
        _as_quaternion(self.rotation)


@dataclass(frozen=True)
class AttributePair:
    predicted: AttributeSet
    target: AttributeSet


def loss_pred(pair: AttributePair) -> float:
    """Squared log-scale error + quaternion double-cover term + offset and
    log-distance squared errors. Zero iff all attributes match (rotation up
    to sign)."""
    p, t = pair.predicted, pair.target
    s_term = sum(
        (math.log(sp) - math.log(st)) ** 2 for sp, st in zip(p.scale, t.scale)
    )
    qd = _as_quaternion(p.rotation).dot(_as_quaternion(t.rotation))
    q_term = 1.0 - qd * qd
    e_term = sum(
        (ep - et) ** 2 for ep, et in zip(p.code.offset_e, t.code.offset_e)
    )
    tau_term = (p.code.log_tau - t.code.log_tau) ** 2
    return s_term + q_term + e_term + tau_term


def loss_reproj(rendered: SilhouetteImage, target: SilhouetteImage,
                mask: np.ndarray) -> float:
    """Mean absolute per-pixel difference over mask-true pixels; 0 if none."""
    if rendered.values.shape != target.values.shape:
        raise ValueError("silhouette dimensions do not match")
    m = np.asarray(mask, dtype=bool)
    if m.shape != rendered.values.shape:
        raise ValueError("mask dimensions do not match")
    return masked_l1(rendered.values, target.values, m)


def loss_total(pair: AttributePair, rendered: SilhouetteImage,
               target: SilhouetteImage, mask: np.ndarray,
               lambda_reproj: float = DEFAULT_LAMBDA_REPROJ) -> float:
    if lambda_reproj < 0:
        raise ValueError("lambda_reproj must be non-negative")
    return loss_pred(pair) + lambda_reproj * loss_reproj(rendered, target, mask)
