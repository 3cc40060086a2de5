"""One-vs-rest training with propensity-weighted positive costs.

Each label gets its own weighted binary subproblem over the shared feature
matrix. Labels are handed out to worker threads from a shared queue, so a
thread that finishes a cheap label immediately picks up the next one. Every
label writes only its own row, which makes the result independent of the
number of threads.
"""

from __future__ import annotations

import logging
import math
import os
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from .data import SparseDataset, add_bias
from .losses import WeightScheme, positive_weight
from .propensity import PropensityModel
from .solver import BinaryProblem, SolverConfig, SubproblemLoss, solve

log = logging.getLogger(__name__)

FORMAT_TAG = "xmcpw"
FORMAT_VERSION = 1
PREDICT_BATCH = 1024


class ModelFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class TrainConfig:
    scheme: WeightScheme = WeightScheme.EMPIRICAL
    loss: SubproblemLoss = SubproblemLoss.SQUARED_HINGE
    solver: SolverConfig = field(default_factory=SolverConfig)
    prune_threshold: float = 0.01
    thread_count: int = 1
    global_cost: float = 1.0

    def __post_init__(self) -> None:
        if not self.prune_threshold >= 0:
            raise ValueError("prune_threshold must be >= 0")
        if not self.global_cost > 0:
            raise ValueError("global_cost must be > 0")
        if self.thread_count < 1:
            raise ValueError("thread_count must be >= 1")


class OvrModel:
    """Per-label sparse weight rows, stored as a CSR matrix ``(num_labels, num_features)``.

    ``num_features`` includes the bias coordinate when ``bias_value`` is set.
    """

    def __init__(
        self,
        weights: sp.csr_matrix,
        bias_value: float | None = None,
        metadata: dict[str, str] | None = None,
    ):
        self.weights = sp.csr_matrix(weights, dtype=np.float64)
        self.weights.sort_indices()
        self.bias_value = bias_value
        self.metadata = dict(metadata or {})

    @property
    def num_labels(self) -> int:
        return self.weights.shape[0]

    @property
    def num_features(self) -> int:
        return self.weights.shape[1]

    @property
    def nnz(self) -> int:
        return int(self.weights.nnz)

    def row(self, label: int) -> list[tuple[int, float]]:
        lo, hi = self.weights.indptr[label], self.weights.indptr[label + 1]
        return [(int(i), float(v)) for i, v in zip(self.weights.indices[lo:hi], self.weights.data[lo:hi])]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OvrModel):
            return NotImplemented
        a, b = self.weights, other.weights
        return (
            a.shape == b.shape
            and self.bias_value == other.bias_value
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )


@dataclass
class TopK:
    """Ranked predictions: row ``i`` holds label ids and scores, best first."""

    labels: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    def row(self, i: int) -> list[tuple[int, float]]:
        return [(int(l), float(s)) for l, s in zip(self.labels[i], self.scores[i])]


def label_costs(props: PropensityModel | np.ndarray, config: TrainConfig) -> np.ndarray:
    p = props.propensities if isinstance(props, PropensityModel) else np.asarray(props, dtype=np.float64)
    return np.array([config.global_cost * positive_weight(config.scheme, float(pl)) for pl in p])


def _sparsify(w: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    keep = np.flatnonzero(np.abs(w) > threshold)
    return keep, w[keep]


def train(
    dataset: SparseDataset,
    propensities: PropensityModel | np.ndarray | None,
    config: TrainConfig = TrainConfig(),
    positive_costs: np.ndarray | None = None,
) -> OvrModel:
    """Train one weighted subproblem per label and collect pruned weight rows.

    ``positive_costs`` overrides the scheme-derived positive cost of every
    label (still multiplied by ``global_cost``).
    """
    num_labels = dataset.num_labels
    if positive_costs is not None:
        costs = config.global_cost * np.asarray(positive_costs, dtype=np.float64)
    elif propensities is None:
        raise ValueError("need propensities or explicit positive costs")
    else:
        costs = label_costs(propensities, config)
    if len(costs) != num_labels:
        raise ValueError(f"{len(costs)} propensities for {num_labels} labels")

    x = dataset.features
    positives = dataset.label_matrix().tocsc()
    positives.sort_indices()
    n = dataset.num_points

    rows: list[tuple[np.ndarray, np.ndarray] | None] = [None] * num_labels
    unconverged: list[int] = []
    lock = threading.Lock()
    work: queue.SimpleQueue[int] = queue.SimpleQueue()
    for label in range(num_labels):
        work.put(label)

    def worker() -> None:
        while True:
            try:
                label = work.get_nowait()
            except queue.Empty:
                return
            signs = -np.ones(n)
            signs[positives.indices[positives.indptr[label] : positives.indptr[label + 1]]] = 1.0
            problem = BinaryProblem(x, signs, costs[label], config.global_cost, config.loss)
            result = solve(problem, config.solver)
            rows[label] = _sparsify(result.w, config.prune_threshold)
            if not result.converged:
                with lock:
                    unconverged.append(label)

    threads = min(config.thread_count, max(num_labels, 1))
    if threads == 1:
        worker()
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for fut in [pool.submit(worker) for _ in range(threads)]:
                fut.result()

    indptr = np.zeros(num_labels + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r[0]) for r in rows])
    indices = np.concatenate([r[0] for r in rows]) if num_labels else np.zeros(0, dtype=np.int64)
    data = np.concatenate([r[1] for r in rows]) if num_labels else np.zeros(0)
    weights = sp.csr_matrix((data, indices, indptr), shape=(num_labels, dataset.num_features))

    if unconverged:
        log.warning("%d of %d labels hit the iteration limit", len(unconverged), num_labels)
    metadata = {
        "scheme": config.scheme.value,
        "loss": config.loss.value,
        "prune_threshold": repr(config.prune_threshold),
        "global_cost": repr(config.global_cost),
        "unconverged": ",".join(str(l) for l in sorted(unconverged)),
    }
    if isinstance(propensities, PropensityModel):
        metadata["A"] = repr(propensities.params.a)
        metadata["B"] = repr(propensities.params.b)
    return OvrModel(weights, dataset.bias, metadata)


def prune(model: OvrModel, threshold: float) -> OvrModel:
    """Drop weights with ``|w| <= threshold``."""
    if not threshold >= 0:
        raise ValueError("threshold must be >= 0")
    w = model.weights.copy()
    w.data[np.abs(w.data) <= threshold] = 0.0
    w.eliminate_zeros()
    meta = dict(model.metadata, prune_threshold=repr(threshold))
    return OvrModel(w, model.bias_value, meta)


def save(model: OvrModel, stream: TextIO) -> None:
    """Write the text model format.

    Header ``xmcpw 1 num_features num_labels bias_value`` (bias 0 means no
    bias column), optional ``#key=value`` metadata lines, then one line per
    label: ``label nnz idx:val ...``.
    """
    bias = model.bias_value if model.bias_value is not None else 0.0
    stream.write(f"{FORMAT_TAG} {FORMAT_VERSION} {model.num_features} {model.num_labels} {bias!r}\n")
    for key in sorted(model.metadata):
        value = str(model.metadata[key])
        if "\n" in value or "=" in key:
            raise ValueError(f"metadata entry {key!r} cannot be serialized")
        stream.write(f"#{key}={value}\n")
    w = model.weights
    for label in range(model.num_labels):
        lo, hi = w.indptr[label], w.indptr[label + 1]
        pairs = " ".join(f"{int(i)}:{float(v)!r}" for i, v in zip(w.indices[lo:hi], w.data[lo:hi]))
        stream.write(f"{label} {hi - lo}" + (f" {pairs}" if pairs else "") + "\n")


def load(stream: TextIO) -> OvrModel:
    lines = iter(stream)
    header = next(lines, "").split()
    if len(header) != 5 or header[0] != FORMAT_TAG:
        raise ModelFormatError("not an xmcpw model header", 1)
    if header[1] != str(FORMAT_VERSION):
        raise ModelFormatError(f"unsupported model version {header[1]!r}", 1)
    try:
        num_features, num_labels = int(header[2]), int(header[3])
        bias = float(header[4])
    except ValueError:
        raise ModelFormatError("malformed header fields", 1) from None

    metadata: dict[str, str] = {}
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    expected = 0
    for lineno, raw in enumerate(lines, start=2):
        line = raw.rstrip("\r\n")
        if line.startswith("#") and expected == 0:
            key, sep, value = line[1:].partition("=")
            if not sep:
                raise ModelFormatError("metadata line without '='", lineno)
            metadata[key] = value
            continue
        if not line.strip():
            continue
        tokens = line.split()
        try:
            label, nnz = int(tokens[0]), int(tokens[1])
        except (ValueError, IndexError):
            raise ModelFormatError("expected 'label nnz idx:val ...'", lineno) from None
        if label != expected:
            raise ModelFormatError(f"expected row for label {expected}, got {label}", lineno)
        if nnz != len(tokens) - 2:
            raise ModelFormatError(f"row announces {nnz} entries but has {len(tokens) - 2}", lineno)
        prev = -1
        for tok in tokens[2:]:
            i_s, sep, v_s = tok.partition(":")
            try:
                i, v = int(i_s), float(v_s)
            except ValueError:
                raise ModelFormatError(f"bad entry {tok!r}", lineno) from None
            if not sep or not prev < i < num_features or not math.isfinite(v):
                raise ModelFormatError(f"bad entry {tok!r}", lineno)
            prev = i
            indices.append(i)
            data.append(v)
        indptr.append(len(indices))
        expected += 1
    if expected != num_labels:
        raise ModelFormatError(f"header announces {num_labels} labels but found {expected}")
    weights = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(num_labels, num_features),
    )
    return OvrModel(weights, bias if bias != 0.0 else None, metadata)


def save_model(model: OvrModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        save(model, fh)


def load_model(path: str | os.PathLike) -> OvrModel:
    with open(path, encoding="ascii") as fh:
        return load(fh)


def topk_from_scores(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-k per row of a dense score matrix; ties go to the smaller label id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    m, num_labels = scores.shape
    k = min(k, num_labels)
    if k == 0:
        return np.zeros((m, 0), dtype=np.int64), np.zeros((m, 0))
    if k < num_labels:
        # every label scoring at least the k-th best value is a candidate
        kth = -np.partition(-scores, k - 1, axis=1)[:, k - 1 : k]
        order = np.empty((m, k), dtype=np.int64)
        for i in range(m):
            cand = np.flatnonzero(scores[i] >= kth[i, 0])
            sub = cand[np.argsort(-scores[i, cand], kind="stable")]
            order[i] = sub[:k]
    else:
        order = np.argsort(-scores, axis=1, kind="stable")
    return order, np.take_along_axis(scores, order, axis=1)


def predict_scores(model: OvrModel, dataset: SparseDataset) -> sp.csr_matrix | np.ndarray:
    x = _aligned_features(model, dataset)
    return np.asarray((x @ model.weights.T).todense())


def _aligned_features(model: OvrModel, dataset: SparseDataset) -> sp.csr_matrix:
    if model.bias_value is not None and dataset.bias is None:
        if dataset.num_features + 1 == model.num_features:
            dataset = add_bias(dataset, model.bias_value)
    if dataset.num_features != model.num_features:
        raise ValueError(f"dataset has {dataset.num_features} features, model expects {model.num_features}")
    return dataset.features


def predict_topk(model: OvrModel, dataset: SparseDataset, k: int) -> TopK:
    """Score every label by ``w_l . x`` and keep the best ``k`` per example."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x = _aligned_features(model, dataset)
    wt = model.weights.T.tocsc()
    k_eff = min(k, model.num_labels)
    labels = np.zeros((x.shape[0], k_eff), dtype=np.int64)
    scores = np.zeros((x.shape[0], k_eff))
    for lo in range(0, x.shape[0], PREDICT_BATCH):
        hi = min(lo + PREDICT_BATCH, x.shape[0])
        dense = np.asarray((x[lo:hi] @ wt).todense())
        labels[lo:hi], scores[lo:hi] = topk_from_scores(dense, k_eff)
    return TopK(labels, scores)
