"""Ranking metrics for multi-label predictions, vanilla and propensity-scored.

All per-example functions take the set of observed positive labels ``y``
and a ranked sequence of predicted label ids (best first). The discount of
rank position ``r`` (1-based) is ``1 / ln(r + 1)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .ovr import TopK, topk_from_scores

log = logging.getLogger(__name__)

PS_METRICS = ("psp", "psndcg")


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")


def _hits(y, ranked: Sequence[int], k: int) -> np.ndarray:
    truth = set(int(l) for l in y)
    top = np.asarray(ranked[:k], dtype=np.int64)
    return top, np.fromiter((int(l) in truth for l in top), dtype=bool, count=len(top))


def _discounts(k: int) -> np.ndarray:
    return 1.0 / np.log(np.arange(2, k + 2, dtype=np.float64))


def _ideal_dcg(num_relevant: int, k: int) -> float:
    return float(_discounts(min(k, num_relevant)).sum())


def precision_at_k(y, ranked: Sequence[int], k: int) -> float:
    _check_k(k)
    _, hit = _hits(y, ranked, k)
    return float(hit.sum()) / k


def dcg_at_k(y, ranked: Sequence[int], k: int) -> float:
    _check_k(k)
    _, hit = _hits(y, ranked, k)
    return float(_discounts(len(hit))[hit].sum())


def ndcg_at_k(y, ranked: Sequence[int], k: int) -> float:
    ideal = _ideal_dcg(len(y), k)
    if ideal == 0.0:
        _check_k(k)
        return 0.0
    return dcg_at_k(y, ranked, k) / ideal


def psp_at_k(y, ranked: Sequence[int], k: int, inv_props: np.ndarray) -> float:
    _check_k(k)
    top, hit = _hits(y, ranked, k)
    return float(np.asarray(inv_props)[top[hit]].sum()) / k


def psdcg_at_k(y, ranked: Sequence[int], k: int, inv_props: np.ndarray) -> float:
    _check_k(k)
    top, hit = _hits(y, ranked, k)
    return float((np.asarray(inv_props)[top] * _discounts(len(top)))[hit].sum())


def psndcg_at_k(y, ranked: Sequence[int], k: int, inv_props: np.ndarray) -> float:
    ideal = _ideal_dcg(len(y), k)
    if ideal == 0.0:
        _check_k(k)
        return 0.0
    return psdcg_at_k(y, ranked, k, inv_props) / ideal


_PER_EXAMPLE = {
    "p": lambda y, r, k, ip: precision_at_k(y, r, k),
    "ndcg": lambda y, r, k, ip: ndcg_at_k(y, r, k),
    "psp": psp_at_k,
    "psndcg": psndcg_at_k,
}


def _ranked_rows(predictions) -> list[Sequence[int]]:
    if isinstance(predictions, TopK):
        return [row for row in predictions.labels]
    return [np.asarray(r, dtype=np.int64) for r in predictions]


def truth_ranking(y, num_labels: int, k: int) -> np.ndarray:
    """Rank the ground truth itself: its labels first, ties by ascending label id."""
    scores = np.zeros((1, num_labels))
    scores[0, np.asarray(list(y), dtype=np.int64)] = 1.0
    return topk_from_scores(scores, k)[0][0]


def mean_metric(metric: str, k: int, predictions, truth: Sequence, inv_props: np.ndarray) -> tuple[float, int]:
    """Mean of a per-example metric; returns ``(mean, skipped)``.

    For the propensity-scored metrics, examples without observed labels are
    left out of the mean and counted in ``skipped``.
    """
    fn = _PER_EXAMPLE[metric]
    rows = _ranked_rows(predictions)
    if len(rows) != len(truth):
        raise ValueError(f"{len(rows)} prediction rows for {len(truth)} ground-truth rows")
    total, count, skipped = 0.0, 0, 0
    for y, ranked in zip(truth, rows):
        if metric in PS_METRICS and len(y) == 0:
            skipped += 1
            continue
        total += fn(y, ranked, k, inv_props)
        count += 1
    return (total / count if count else 0.0), skipped


def normalized_gain(metric: str, k: int, predictions, truth: Sequence, inv_props: np.ndarray) -> float:
    """``100 * G(predictions) / G(truth)`` where ``G`` is the mean metric at ``k``.

    The reference system ranks each example's own ground truth (ties by label
    id). Returns NaN with a warning when the reference gain is zero.
    """
    if metric not in PS_METRICS:
        raise ValueError(f"normalized gain is defined for {PS_METRICS}, not {metric!r}")
    if len(truth) < 1:
        raise ValueError("need at least one test example")
    inv_props = np.asarray(inv_props, dtype=np.float64)
    gain, _ = mean_metric(metric, k, predictions, truth, inv_props)
    ideal_rows = [truth_ranking(y, len(inv_props), k) for y in truth]
    ideal, _ = mean_metric(metric, k, ideal_rows, truth, inv_props)
    if ideal == 0.0:
        log.warning("reference gain for %s@%d is zero; normalized gain undefined", metric, k)
        return math.nan
    return 100.0 * gain / ideal


@dataclass
class MetricsReport:
    ks: list[int]
    values: dict[str, float] = field(default_factory=dict)
    skipped: int = 0

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def lines(self) -> list[str]:
        return [f"{key}={value:.6f}" for key, value in self.values.items()]

    def table(self) -> str:
        names = []
        for key in self.values:
            name = key.split("@")[0]
            if name not in names:
                names.append(name)
        width = max(len(n) for n in names) + 2 if names else 8
        head = "metric".ljust(width) + "".join(f"@{k}".rjust(12) for k in self.ks)
        body = [
            n.ljust(width) + "".join(f"{self.values.get(f'{n}@{k}', math.nan):12.4f}" for k in self.ks)
            for n in names
        ]
        return "\n".join([head, *body])


def evaluate(
    predictions,
    truth: Sequence,
    inv_props: np.ndarray,
    ks: Iterable[int] = (1, 3, 5),
    normalized: bool = True,
) -> MetricsReport:
    ks = sorted(set(int(k) for k in ks))
    for k in ks:
        _check_k(k)
    inv_props = np.asarray(inv_props, dtype=np.float64)
    report = MetricsReport(ks)
    for name in ("p", "ndcg", "psp", "psndcg"):
        for k in ks:
            value, skipped = mean_metric(name, k, predictions, truth, inv_props)
            report.values[f"{name}@{k}"] = value
            report.skipped = max(report.skipped, skipped)
    if normalized:
        for name in PS_METRICS:
            for k in ks:
                report.values[f"norm_{name}@{k}"] = normalized_gain(name, k, predictions, truth, inv_props)
    return report
