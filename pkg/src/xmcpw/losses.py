"""Pointwise binary losses and their propensity-corrected counterparts.

Every loss is split into a positive part ``l+(y_hat)`` (used when the
observed label is 1) and a negative part ``l-(y_hat)`` (observed label 0).
Under the missing-label model (true positives are observed with
probability ``p``, negatives are never flipped) replacing the positive part
by ``(l+ + (p - 1) l-) / p`` keeps the expected loss equal to the expected
loss on the complete labels. The negative part is left untouched.

Margin losses (hinge, squared hinge, 0-1) take a raw score ``z_hat``; the
binary label ``y`` is mapped to ``z = 2y - 1`` internally.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

BCE_EPS = 1e-12


class LossFamily(enum.Enum):
    SQUARED_ERROR = "squared_error"
    ZERO_ONE = "zero_one"
    HINGE = "hinge"
    SQUARED_HINGE = "squared_hinge"
    BCE = "bce"


class LossVariant(enum.Enum):
    PLAIN = "plain"
    UNBIASED = "unbiased"
    CONVEX_WEIGHTED = "convex_weighted"


class WeightScheme(enum.Enum):
    THEORY = "theory"
    EMPIRICAL = "empirical"


class LossConfigError(ValueError):
    """Raised for family/variant combinations that have no meaning."""


_CONVEX_FAMILIES = frozenset({LossFamily.HINGE, LossFamily.SQUARED_HINGE, LossFamily.ZERO_ONE})
_MARGIN_FAMILIES = frozenset({LossFamily.HINGE, LossFamily.SQUARED_HINGE, LossFamily.ZERO_ONE})


def check_propensity(p: float) -> float:
    p = float(p)
    if not (0.0 < p <= 1.0) or math.isnan(p):
        raise ValueError(f"propensity must lie in (0, 1], got {p!r}")
    return p


def _relu(x: float) -> float:
    return x if x > 0.0 else 0.0


def _clamp01(y_hat: float) -> float:
    return min(max(y_hat, BCE_EPS), 1.0 - BCE_EPS)


# (l*_+, l*_-) for each family; margin families receive z_hat
_PARTS: dict[LossFamily, tuple[Callable[[float], float], Callable[[float], float]]] = {
    LossFamily.SQUARED_ERROR: (lambda y: (1.0 - y) ** 2, lambda y: y * y),
    LossFamily.ZERO_ONE: (lambda z: 1.0 if z < 0.0 else 0.0, lambda z: 1.0 if z >= 0.0 else 0.0),
    LossFamily.HINGE: (lambda z: _relu(1.0 - z), lambda z: _relu(1.0 + z)),
    LossFamily.SQUARED_HINGE: (lambda z: _relu(1.0 - z) ** 2, lambda z: _relu(1.0 + z) ** 2),
    LossFamily.BCE: (
        lambda y: -math.log(_clamp01(y)),
        lambda y: -math.log(1.0 - _clamp01(y)),
    ),
}


def plain_parts(family: LossFamily, y_hat: float) -> tuple[float, float]:
    """Return ``(l*_+(y_hat), l*_-(y_hat))`` for the uncorrected loss."""
    pos, neg = _PARTS[family]
    return pos(y_hat), neg(y_hat)


def unbiased_positive_part(l_plus_star: float, l_minus_star: float, p: float) -> float:
    """Positive part that makes the observed-label loss unbiased.

    >>> unbiased_positive_part(1.0, 0.0, 0.5)
    2.0
    """
    p = check_propensity(p)
    return (l_plus_star + (p - 1.0) * l_minus_star) / p


def zero_one_unshifted_positive(z_hat: float, p: float) -> float:
    """Unbiased 0-1 positive part before the constant shift; can be negative."""
    pos, neg = plain_parts(LossFamily.ZERO_ONE, z_hat)
    return unbiased_positive_part(pos, neg, p)


def positive_weight(scheme: WeightScheme, p: float) -> float:
    """Cost multiplier for positives: ``2/p - 1`` (theory) or ``1/p - 1`` (empirical)."""
    p = check_propensity(p)
    if scheme is WeightScheme.THEORY:
        return 2.0 / p - 1.0
    if scheme is WeightScheme.EMPIRICAL:
        return 1.0 / p - 1.0
    raise LossConfigError(f"unknown weight scheme {scheme!r}")


def eval_convex_weighted(family: LossFamily, z: int, z_hat: float, p: float) -> float:
    """Convex upper bound on the shifted unbiased 0-1 loss.

    The coefficient ``(z (1 - p) + 1) / p`` equals ``2/p - 1`` for positives
    and exactly 1 for negatives. For the squared hinge it multiplies the
    squared margin violation (it is not squared itself).
    """
    p = check_propensity(p)
    if z not in (-1, 1):
        raise ValueError(f"signed label must be -1 or +1, got {z!r}")
    coef = (z * (1.0 - p) + 1.0) / p
    violation = _relu(1.0 - z * z_hat)
    if family is LossFamily.HINGE:
        return coef * violation
    if family is LossFamily.SQUARED_HINGE:
        return coef * violation * violation
    if family is LossFamily.ZERO_ONE:
        pos, neg = plain_parts(family, z_hat)
        return coef * (pos if z == 1 else neg)
    raise LossConfigError(f"convex re-weighting is undefined for {family.value}")


@dataclass(frozen=True)
class LossSpec:
    family: LossFamily
    variant: LossVariant = LossVariant.PLAIN
    p: float = 1.0

    def __post_init__(self) -> None:
        check_propensity(self.p)
        if self.variant is LossVariant.CONVEX_WEIGHTED and self.family not in _CONVEX_FAMILIES:
            raise LossConfigError(
                f"convex re-weighting only applies to margin losses, not {self.family.value}"
            )

    def __call__(self, y: int, y_hat: float) -> float:
        return eval_loss(self, y, y_hat)


def eval_loss(spec: LossSpec, y: int, y_hat: float) -> float:
    """Evaluate the loss for binary label ``y`` and prediction ``y_hat``.

    ``y_hat`` is a probability for BCE, a real prediction for squared error and
    a raw margin score for the hinge family and 0-1 loss. The public unbiased
    0-1 loss is the shifted, non-negative form.
    """
    if y not in (0, 1):
        raise ValueError(f"binary label must be 0 or 1, got {y!r}")
    y_hat = float(y_hat)
    family, variant = spec.family, spec.variant

    if variant is LossVariant.CONVEX_WEIGHTED:
        return eval_convex_weighted(family, 2 * y - 1, y_hat, spec.p)

    pos, neg = plain_parts(family, y_hat)
    if y == 0:
        return neg
    if variant is LossVariant.PLAIN:
        return pos
    out = unbiased_positive_part(pos, neg, spec.p)
    if family is LossFamily.ZERO_ONE:
        out += 1.0 / spec.p - 1.0
    return out


def is_margin_family(family: LossFamily) -> bool:
    return family in _MARGIN_FAMILIES
