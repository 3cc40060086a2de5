"""Sparse multi-label datasets in the extreme classification repository format.

The text format is a header line ``num_points num_features num_labels``
followed by one line per example::

    0,2 1:0.5 3:1.0
     0:1.0

i.e. a comma separated label list (empty lists leave a leading space),
then ``index:value`` feature pairs. All indices are 0-based.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp


class DataFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SparseDataset:
    """Row-sparse feature matrix plus one sorted label array per example.

    ``bias`` is ``None`` until :func:`add_bias` appends the constant column;
    afterwards ``num_features`` counts that extra column.
    """

    def __init__(
        self,
        features: sp.csr_matrix,
        labels: list[np.ndarray],
        num_labels: int,
        bias: float | None = None,
    ):
        features = sp.csr_matrix(features, dtype=np.float64)
        if features.shape[0] != len(labels):
            raise ValueError(f"{features.shape[0]} feature rows but {len(labels)} label rows")
        for row in labels:
            if len(row) and (row[0] < 0 or row[-1] >= num_labels):
                raise ValueError(f"label index out of range [0, {num_labels})")
        self.features = features
        self.labels = [np.asarray(r, dtype=np.int64) for r in labels]
        self.num_labels = int(num_labels)
        self.bias = bias

    @property
    def num_points(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.num_points

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseDataset):
            return NotImplemented
        if (self.features.shape, self.num_labels, self.bias) != (
            other.features.shape,
            other.num_labels,
            other.bias,
        ):
            return False
        a, b = self.features, other.features
        a.sort_indices()
        b.sort_indices()
        return (
            np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
            and all(np.array_equal(x, y) for x, y in zip(self.labels, other.labels))
        )

    def example(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(labels, feature_indices, feature_values)`` of example ``i``."""
        lo, hi = self.features.indptr[i], self.features.indptr[i + 1]
        return self.labels[i], self.features.indices[lo:hi], self.features.data[lo:hi]

    def label_matrix(self) -> sp.csr_matrix:
        indptr = np.zeros(self.num_points + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(r) for r in self.labels])
        indices = np.concatenate(self.labels) if self.labels else np.zeros(0, dtype=np.int64)
        data = np.ones(len(indices))
        return sp.csr_matrix((data, indices, indptr), shape=(self.num_points, self.num_labels))

    def subset(self, rows: Iterable[int]) -> "SparseDataset":
        rows = np.asarray(list(rows), dtype=np.int64)
        return SparseDataset(
            self.features[rows], [self.labels[i] for i in rows], self.num_labels, self.bias
        )

    def with_labels(self, labels: list[np.ndarray]) -> "SparseDataset":
        return SparseDataset(self.features, labels, self.num_labels, self.bias)


@dataclass(frozen=True)
class PowerLawFit:
    n1: float
    beta: float
    r2: float


def _parse_int(token: str, what: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise DataFormatError(f"non-integer {what} {token!r}", lineno) from None


def parse_xmc(stream: TextIO | str) -> SparseDataset:
    """Parse a dataset from a text stream (or a string holding the file contents)."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = [ln.rstrip("\r\n") for ln in stream]
    if not lines:
        raise DataFormatError("missing header", 1)

    header = lines[0].split()
    if len(header) != 3:
        raise DataFormatError("header must be 'num_points num_features num_labels'", 1)
    n, d, num_labels = (_parse_int(t, "header field", 1) for t in header)
    if n < 0 or d < 0 or num_labels < 0:
        raise DataFormatError("negative header dimension", 1)

    body = lines[1:]
    while len(body) > n and not body[-1].strip():
        body.pop()
    if len(body) != n:
        raise DataFormatError(f"header announces {n} examples but found {len(body)}", len(lines))

    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    labels: list[np.ndarray] = []
    for offset, line in enumerate(body):
        lineno = offset + 2
        tokens = line.split()
        row_labels: list[int] = []
        if tokens and not line[0].isspace() and ":" not in tokens[0]:
            row_labels = [_parse_int(t, "label", lineno) for t in tokens[0].split(",") if t]
            tokens = tokens[1:]
        row_labels.sort()
        for a, b in zip(row_labels, row_labels[1:]):
            if a == b:
                raise DataFormatError(f"duplicate label {a}", lineno)
        if row_labels and (row_labels[0] < 0 or row_labels[-1] >= num_labels):
            raise DataFormatError(f"label index out of range [0, {num_labels})", lineno)

        row: dict[int, float] = {}
        for tok in tokens:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise DataFormatError(f"expected index:value, got {tok!r}", lineno)
            idx = _parse_int(idx_s, "feature index", lineno)
            try:
                val = float(val_s)
            except ValueError:
                raise DataFormatError(f"non-numeric feature value {val_s!r}", lineno) from None
            if not 0 <= idx < d:
                raise DataFormatError(f"feature index {idx} out of range [0, {d})", lineno)
            if not math.isfinite(val):
                raise DataFormatError(f"non-finite feature value {val_s!r}", lineno)
            if idx in row:
                raise DataFormatError(f"duplicate feature index {idx}", lineno)
            row[idx] = val
        # explicit zeros carry no information in a sparse row
        for idx in sorted(row):
            if row[idx] != 0.0:
                indices.append(idx)
                values.append(row[idx])
        indptr.append(len(indices))
        labels.append(np.asarray(row_labels, dtype=np.int64))

    features = sp.csr_matrix(
        (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
        shape=(n, d),
    )
    return SparseDataset(features, labels, num_labels)


def write_xmc(dataset: SparseDataset, stream: TextIO | None = None) -> str | None:
    """Serialize ``dataset``; returns the text when no stream is given.

    A dataset carrying a bias column is written with that column included.
    """
    out = io.StringIO() if stream is None else stream
    out.write(f"{dataset.num_points} {dataset.num_features} {dataset.num_labels}\n")
    for i in range(dataset.num_points):
        row_labels, idx, val = dataset.example(i)
        parts = [",".join(str(int(l)) for l in row_labels)]
        parts.extend(f"{int(j)}:{float(v)!r}" for j, v in zip(idx, val))
        line = " ".join(parts) if len(parts) > 1 or parts[0] else " "
        out.write(line + "\n")
    if stream is None:
        return out.getvalue()
    return None


def load_xmc(path: str | os.PathLike) -> SparseDataset:
    with open(path, encoding="utf-8") as fh:
        return parse_xmc(fh)


def save_xmc(dataset: SparseDataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        write_xmc(dataset, fh)


def l2_normalize(dataset: SparseDataset) -> SparseDataset:
    """Scale every feature row to unit Euclidean norm; zero rows stay zero."""
    if dataset.bias is not None:
        raise ValueError("normalize before adding the bias column")
    x = dataset.features.copy()
    norms = np.sqrt(np.asarray(x.multiply(x).sum(axis=1)).ravel())
    scale = np.ones_like(norms)
    nz = norms > 0
    scale[nz] = 1.0 / norms[nz]
    x.data *= np.repeat(scale, np.diff(x.indptr))
    return SparseDataset(x, dataset.labels, dataset.num_labels)


def add_bias(dataset: SparseDataset, bias_value: float = 1.0) -> SparseDataset:
    """Append a constant feature column holding ``bias_value`` to every example."""
    if dataset.bias is not None:
        raise ValueError("dataset already has a bias column")
    bias_value = float(bias_value)
    if bias_value == 0.0 or not math.isfinite(bias_value):
        raise ValueError(f"bias value must be finite and non-zero, got {bias_value}")
    col = sp.csr_matrix(np.full((dataset.num_points, 1), bias_value))
    x = sp.hstack([dataset.features, col], format="csr")
    return SparseDataset(x, dataset.labels, dataset.num_labels, bias=bias_value)


def label_frequencies(dataset: SparseDataset) -> np.ndarray:
    """Number of examples carrying each label."""
    if not dataset.labels:
        return np.zeros(dataset.num_labels, dtype=np.int64)
    return np.bincount(np.concatenate(dataset.labels), minlength=dataset.num_labels).astype(np.int64)


def power_law_fit(freqs) -> PowerLawFit:
    """Least-squares fit of ``ln n_(r) = ln n_(1) - beta ln r`` on ranked counts."""
    counts = np.sort(np.asarray(freqs, dtype=np.float64))[::-1]
    counts = counts[counts > 0]
    if len(counts) < 2:
        raise ValueError("power-law fit needs at least two labels with positive counts")
    log_r = np.log(np.arange(1, len(counts) + 1, dtype=np.float64))
    log_n = np.log(counts)
    slope, intercept = np.polyfit(log_r, log_n, 1)
    resid = log_n - (intercept + slope * log_r)
    ss_res = float(resid @ resid)
    ss_tot = float(((log_n - log_n.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(n1=float(math.exp(intercept)), beta=float(-slope), r2=r2)
