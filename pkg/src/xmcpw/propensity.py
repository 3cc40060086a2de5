"""Empirical label propensity model.

``p_l = 1 / (1 + C * (N_l + B) ** -A)`` with ``C = (ln N - 1) * (B + 1) ** A``,
where ``N_l`` counts the training positives of label ``l`` and ``N`` is the
number of training points. Natural logarithms throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# name -> (A, B)
DATASET_PARAMS: dict[str, tuple[float, float]] = {
    "eurlex-4k": (0.55, 1.5),
    "amazoncat-13k": (0.55, 1.5),
    "wikipedia-31k": (0.55, 1.5),
    "wikilshtc-325k": (0.5, 0.4),
    "wikipedia-500k": (0.5, 0.4),
    "amazon-670k": (0.6, 2.6),
}


class PropensityError(ValueError):
    pass


@dataclass(frozen=True)
class PropensityParams:
    a: float
    b: float
    n: int

    @property
    def c(self) -> float:
        return (math.log(self.n) - 1.0) * (self.b + 1.0) ** self.a


@dataclass(frozen=True)
class PropensityModel:
    params: PropensityParams
    propensities: np.ndarray

    @property
    def c(self) -> float:
        return self.params.c

    def __len__(self) -> int:
        return len(self.propensities)

    def inverse(self) -> np.ndarray:
        return inverse_propensities(self)


def default_params(dataset_name: str, n: int) -> PropensityParams:
    """Look up the published (A, B) pair for a benchmark dataset name."""
    try:
        a, b = DATASET_PARAMS[dataset_name.strip().lower()]
    except KeyError:
        known = ", ".join(sorted(DATASET_PARAMS))
        raise KeyError(f"no default propensity parameters for {dataset_name!r} (known: {known})") from None
    return PropensityParams(a, b, n)


def from_params(params: PropensityParams, freqs) -> PropensityModel:
    """Build per-label propensities from label frequencies."""
    if not params.a > 0:
        raise PropensityError(f"A must be positive, got {params.a}")
    if not params.b >= 0:
        raise PropensityError(f"B must be non-negative, got {params.b}")
    if params.n < 3 or math.log(params.n) <= 1.0:
        raise PropensityError(f"need ln N > 1 (N >= 3), got N={params.n}")
    counts = np.asarray(freqs, dtype=np.float64)
    if counts.ndim != 1:
        raise PropensityError("label frequencies must be a 1-D vector")
    if np.any(counts < 0):
        raise PropensityError("label frequencies must be non-negative")
    shifted = counts + params.b
    if np.any(shifted <= 0):
        raise PropensityError("B = 0 with an unseen label: log(0) in the propensity formula")
    p = 1.0 / (1.0 + params.c * np.exp(-params.a * np.log(shifted)))
    p.setflags(write=False)
    return PropensityModel(params, p)


def inverse_propensities(model: PropensityModel | np.ndarray) -> np.ndarray:
    props = model.propensities if isinstance(model, PropensityModel) else model
    return 1.0 / np.asarray(props, dtype=np.float64)
