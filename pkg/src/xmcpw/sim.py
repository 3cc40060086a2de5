"""Missing-label simulation and exact checks of the unbiasedness identity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import SparseDataset, add_bias, l2_normalize
from .losses import (
    LossFamily,
    LossVariant,
    WeightScheme,
    check_propensity,
    plain_parts,
    positive_weight,
    unbiased_positive_part,
)
from .ovr import TrainConfig, predict_scores, train
from .solver import SolverConfig, SubproblemLoss

_U53 = 1.0 / (1 << 53)


def coordinate_uniform(seed: int, row: int, col: int) -> float:
    """Uniform draw in [0, 1) keyed by ``(seed, row, col)`` via the Philox counter generator."""
    raw = np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF, counter=[row, col, 0, 0]).random_raw()
    return (int(raw) >> 11) * _U53


@dataclass(frozen=True)
class DropConfig:
    propensities: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        p = np.asarray(self.propensities, dtype=np.float64)
        if np.any(~(p > 0)) or np.any(p > 1):
            raise ValueError("keep probabilities must lie in (0, 1]")


def drop_labels(dataset: SparseDataset, config: DropConfig) -> SparseDataset:
    """Keep each observed positive ``(i, l)`` independently with probability ``p_l``.

    Labels are only ever removed; features are untouched.
    """
    p = np.asarray(config.propensities, dtype=np.float64)
    if len(p) != dataset.num_labels:
        raise ValueError(f"{len(p)} keep probabilities for {dataset.num_labels} labels")
    kept = []
    for i, row in enumerate(dataset.labels):
        keep = [
            l for l in row if p[l] >= 1.0 or coordinate_uniform(config.seed, i, int(l)) < p[l]
        ]
        kept.append(np.asarray(keep, dtype=np.int64))
    return dataset.with_labels(kept)


@dataclass(frozen=True)
class ExpectationCase:
    q: float
    p: float
    y_hat: float
    family: LossFamily
    variant: LossVariant = LossVariant.UNBIASED
    shifted: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        check_propensity(self.p)
        if self.variant is LossVariant.CONVEX_WEIGHTED:
            raise ValueError("convex re-weighted losses are upper bounds, not unbiased estimates")
        if self.shifted and self.family is not LossFamily.ZERO_ONE:
            raise ValueError("only the 0-1 loss has a shifted form")


def exact_expectation_check(case: ExpectationCase) -> tuple[float, float]:
    """Expected loss under complete vs. observed labels, by enumeration.

    The joint law of (true, observed) has three atoms: (1, 1) with mass
    ``q p``, (1, 0) with ``q (1 - p)`` and (0, 0) with ``1 - q``. Returns
    ``(E[l*(Y*)], E[l(Y)])``.
    """
    l_plus_star, l_minus_star = plain_parts(case.family, case.y_hat)
    if case.variant is LossVariant.PLAIN:
        l_plus = l_plus_star
    else:
        l_plus = unbiased_positive_part(l_plus_star, l_minus_star, case.p)
        if case.shifted:
            l_plus += 1.0 / case.p - 1.0

    q, p = case.q, case.p
    atoms = ((q * p, 1, 1), (q * (1.0 - p), 1, 0), (1.0 - q, 0, 0))
    lhs = rhs = 0.0
    for mass, y_true, y_obs in atoms:
        lhs += mass * (l_plus_star if y_true else l_minus_star)
        rhs += mass * (l_plus if y_obs else l_minus_star)
    return lhs, rhs


def exact_grid(margin_points: int = 21, prob_points: int = 20) -> list[ExpectationCase]:
    """Unbiasedness cases over p in {0.1, ..., 1}, q in {0, 1/4, ..., 1} and a prediction grid.

    Margin losses use scores in [-2, 2]; BCE uses probabilities in (0, 1).
    The 0-1 loss is checked in its unshifted form.
    """
    margin = np.linspace(-2.0, 2.0, margin_points)
    prob = np.linspace(0.025, 0.975, prob_points)
    families = (LossFamily.SQUARED_ERROR, LossFamily.BCE, LossFamily.HINGE, LossFamily.ZERO_ONE)
    cases = []
    for family in families:
        grid = prob if family is LossFamily.BCE else margin
        for p in np.arange(1, 11) / 10:
            for q in (0.0, 0.25, 0.5, 0.75, 1.0):
                cases.extend(ExpectationCase(q, float(p), float(y), family) for y in grid)
    return cases


@dataclass
class ExperimentRow:
    p: float
    variant: str
    loss: float
    acc: float
    seed: int = 0

    def line(self) -> str:
        return f"p={self.p:g}, variant={self.variant}, loss={self.loss:.6f}, acc={self.acc:.6f}"


def make_synthetic(
    num_points: int,
    num_features: int,
    num_labels: int,
    seed: int,
    density: float = 0.3,
    noise: float = 0.1,
) -> tuple[SparseDataset, np.ndarray]:
    """Random sparse inputs labelled by a random linear model.

    Each label gets a threshold at a random upper quantile of its scores so
    that positive rates vary between roughly 5% and 30%. Returns the
    unnormalized dataset and the generating weight matrix.
    """
    rng = np.random.default_rng(seed)
    x = sp.random(
        num_points, num_features, density=density, format="csr", random_state=rng,
        data_rvs=lambda size: rng.standard_normal(size),
    )
    w_true = rng.standard_normal((num_labels, num_features))
    scores = np.asarray(x @ w_true.T)
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1))).ravel()
    norms[norms == 0] = 1.0
    scores = scores / norms[:, None] + noise * rng.standard_normal(scores.shape)
    rates = rng.uniform(0.05, 0.3, size=num_labels)
    thresholds = np.array([np.quantile(scores[:, l], 1.0 - rates[l]) for l in range(num_labels)])
    y = scores > thresholds
    labels = [np.flatnonzero(row).astype(np.int64) for row in y]
    return SparseDataset(x, labels, num_labels), w_true


def _full_label_metrics(scores: np.ndarray, dataset: SparseDataset, loss: SubproblemLoss) -> tuple[float, float]:
    z = -np.ones(scores.shape)
    for i, row in enumerate(dataset.labels):
        z[i, row] = 1.0
    m = z * scores
    if loss is SubproblemLoss.SQUARED_HINGE:
        per = np.maximum(0.0, 1.0 - m) ** 2
    else:
        per = np.logaddexp(0.0, -m)
    acc = float(np.mean((scores > 0) == (z > 0)))
    return float(per.mean()), acc


VARIANTS = ("plain", "weighted", "naive")


def variant_positive_cost(variant: str, p: float) -> float:
    if variant == "plain":
        return 1.0
    if variant == "weighted":
        return positive_weight(WeightScheme.THEORY, p)
    if variant == "naive":
        return 1.0 / p
    raise ValueError(f"unknown variant {variant!r}")


def synthetic_experiment(
    num_points: int = 4000,
    num_features: int = 50,
    num_labels: int = 8,
    propensity_grid=(0.1, 0.3, 0.5, 0.7, 1.0),
    seed: int = 0,
    variants=("plain", "weighted"),
    loss: SubproblemLoss = SubproblemLoss.SQUARED_HINGE,
    test_fraction: float = 0.5,
    global_cost: float = 1.0,
) -> list[ExperimentRow]:
    """Train on uniformly dropped labels and score against the complete test labels.

    ``plain`` ignores missing labels, ``weighted`` uses the positive cost
    ``2/p - 1`` and ``naive`` scales only the positive term by ``1/p``.
    """
    if num_labels < 2:
        raise ValueError("synthetic experiment needs at least 2 labels")
    if num_points < 4 or num_features < 1:
        raise ValueError("synthetic experiment needs at least 4 points and 1 feature")
    grid = [check_propensity(p) for p in propensity_grid]
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")

    full, _ = make_synthetic(num_points, num_features, num_labels, seed)
    full = add_bias(l2_normalize(full), 1.0)
    n_test = max(1, int(round(test_fraction * num_points)))
    train_set = full.subset(range(num_points - n_test))
    test_set = full.subset(range(num_points - n_test, num_points))

    rows = []
    for p in grid:
        observed = drop_labels(train_set, DropConfig(np.full(num_labels, p), seed))
        for variant in variants:
            costs = np.full(num_labels, variant_positive_cost(variant, p))
            config = TrainConfig(
                loss=loss,
                solver=SolverConfig(tolerance=1e-6),
                prune_threshold=0.0,
                global_cost=global_cost,
            )
            model = train(observed, None, config, positive_costs=costs)
            test_loss, acc = _full_label_metrics(predict_scores(model, test_set), test_set, loss)
            rows.append(ExperimentRow(p, variant, test_loss, acc, seed))
    return rows
