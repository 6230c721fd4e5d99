"""Dataset ingestion and partitioning of design points into sub-model groups."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyFile, InvalidGroupCount, ParseError

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-8


@dataclass
class Dataset:
    """Design points ``X`` (n, d) with responses ``y`` (n,).

    ``y_offset`` records the empirical mean subtracted at load time when
    response centering was requested, so predictions can be un-centered.
    """

    X: np.ndarray
    y: np.ndarray
    ids: list | None = None
    y_offset: float = 0.0

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y must have the same number of rows")
        if self.X.shape[0] < 1:
            raise ValueError("dataset must contain at least one point")
        if not np.all(np.isfinite(self.X)) or not np.all(np.isfinite(self.y)):
            raise ValueError("dataset contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class Partition:
    """Group labels over n points, values in {0, ..., p-1}; every group nonempty."""

    labels: np.ndarray
    p: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "labels", labels)
        if labels.min(initial=0) < 0 or labels.max(initial=-1) >= self.p:
            raise InvalidGroupCount("labels out of range for p groups")
        counts = np.bincount(labels, minlength=self.p)
        if np.any(counts == 0):
            raise InvalidGroupCount("every group must be nonempty")

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    def groups(self) -> list:
        """Index arrays of each group, in label order."""
        order = np.argsort(self.labels, kind="stable")
        bounds = np.searchsorted(self.labels[order], np.arange(self.p + 1))
        return [order[bounds[i]:bounds[i + 1]] for i in range(self.p)]


@dataclass
class CsvSchema:
    """Column roles for :func:`load_csv`.

    ``response`` names the response column (default: last column);
    ``features`` lists the design columns (default: all non-response
    columns, in file order).  ``center_response`` subtracts the empirical
    response mean, recording it in ``Dataset.y_offset``.
    """

    response: str | None = None
    features: list | None = field(default=None)
    center_response: bool = False


def load_csv(path, schema: CsvSchema | None = None) -> Dataset:
    """Load a headed CSV file into a Dataset.

    Raises :class:`ParseError` with 1-based line/column positions on any
    cell that does not parse to a finite number, and :class:`EmptyFile`
    when there are no data rows.
    """
    schema = schema or CsvSchema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        header = [h.strip() for h in header]
        response = schema.response if schema.response is not None else header[-1]
        if response not in header:
            raise ParseError(1, 0, f"response column {response!r} not in header")
        features = schema.features
        if features is None:
            features = [h for h in header if h != response]
        for name in features:
            if name not in header:
                raise ParseError(1, 0, f"feature column {name!r} not in header")
        fidx = [header.index(name) for name in features]
        ridx = header.index(response)

        rows_x, rows_y = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(lineno, len(row),
                                 f"expected {len(header)} columns, got {len(row)}")
            parsed = []
            for col in fidx + [ridx]:
                cell = row[col].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(lineno, col + 1,
                                     f"cannot parse {cell!r} as a number") from None
                if not np.isfinite(value):
                    raise ParseError(lineno, col + 1,
                                     f"non-finite value {cell!r}")
                parsed.append(value)
            rows_x.append(parsed[:-1])
            rows_y.append(parsed[-1])

    if not rows_x:
        raise EmptyFile(f"{path} contains no data rows")
    X = np.asarray(rows_x, dtype=float)
    y = np.asarray(rows_y, dtype=float)
    offset = 0.0
    if schema.center_response:
        offset = float(np.mean(y))
        y = y - offset
    return Dataset(X=X, y=y, y_offset=offset)


def load_points_csv(path) -> np.ndarray:
    """Load a headed CSV of bare points (every column is a coordinate)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path} is empty") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(lineno, len(row),
                                 f"expected {len(header)} columns, got {len(row)}")
            parsed = []
            for col, cell in enumerate(row):
                try:
                    value = float(cell.strip())
                except ValueError:
                    raise ParseError(lineno, col + 1,
                                     f"cannot parse {cell!r} as a number") from None
                if not np.isfinite(value):
                    raise ParseError(lineno, col + 1, f"non-finite value {cell!r}")
                parsed.append(value)
            rows.append(parsed)
    if not rows:
        raise EmptyFile(f"{path} contains no data rows")
    return np.asarray(rows, dtype=float)


def _check_group_count(n: int, p: int):
    if not 1 <= p <= n:
        raise InvalidGroupCount(f"cannot split {n} points into {p} groups")


def partition_kmeans(X, p: int, seed: int = 0) -> Partition:
    """Lloyd's algorithm with k-means++ seeding.

    Deterministic given ``seed``; at most 100 iterations or until the
    largest centroid movement drops below 1e-8.  Empty clusters are
    repaired by stealing the farthest point from the largest cluster.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    _check_group_count(n, p)
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centroids = np.empty((p, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = np.sum((X - centroids[0]) ** 2, axis=1)
    for k in range(1, p):
        total = d2.sum()
        if total <= 0.0:
            centroids[k] = X[rng.integers(n)]
        else:
            centroids[k] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - centroids[k]) ** 2, axis=1))

    labels = np.zeros(n, dtype=int)
    for _ in range(KMEANS_MAX_ITER):
        dist = np.sum((X[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dist, axis=1)
        counts = np.bincount(labels, minlength=p)
        for empty in np.flatnonzero(counts == 0):
            donor = int(np.argmax(counts))
            members = np.flatnonzero(labels == donor)
            far = members[np.argmax(
                np.sum((X[members] - centroids[donor]) ** 2, axis=1))]
            labels[far] = empty
            counts[donor] -= 1
            counts[empty] += 1
        new_centroids = np.empty_like(centroids)
        for k in range(p):
            new_centroids[k] = X[labels == k].mean(axis=0)
        move = np.max(np.abs(new_centroids - centroids))
        centroids = new_centroids
        if move < KMEANS_TOL:
            break
    return Partition(labels=labels, p=p)


def partition_random(n: int, p: int, seed: int = 0) -> Partition:
    """Uniformly random balanced partition; group sizes differ by at most 1."""
    _check_group_count(n, p)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    labels = np.empty(n, dtype=int)
    # the first n % p groups receive one extra point
    sizes = np.full(p, n // p)
    sizes[: n % p] += 1
    start = 0
    for k, size in enumerate(sizes):
        labels[perm[start:start + size]] = k
        start += size
    return Partition(labels=labels, p=p)


def partition_consecutive(X, p: int) -> Partition:
    """Contiguous blocks after sorting points by their first coordinate.

    With n = 30 and p = 15 this pairs consecutive points: the two smallest
    form group 0, the next two group 1, and so on.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    _check_group_count(n, p)
    order = np.argsort(X[:, 0], kind="stable")
    sizes = np.full(p, n // p)
    sizes[: n % p] += 1
    labels = np.empty(n, dtype=int)
    start = 0
    for k, size in enumerate(sizes):
        labels[order[start:start + size]] = k
        start += size
    return Partition(labels=labels, p=p)
