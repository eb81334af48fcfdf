"""Gradient batches and the vector statistics shared across the package.

Conventions used everywhere downstream:

* standard deviations are population-style (``ddof=0``);
* the median of an even count is the midpoint of the two central values;
* direction vectors are sign-normalized so their first nonzero entry is
  nonnegative.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateDirectionError, InvalidParameterError

_SIGN_EPS = 1e-12


@dataclass(frozen=True)
class GradientBatch:
    """An ordered set of client gradient vectors with stable client ids.

    ``rows[k]`` belongs to client ``ids[k]``.  Rows are float64, finite, and
    share one dimension; ids are unique.  Instances are immutable — operations
    that "modify" a batch return a new one.
    """

    rows: np.ndarray
    ids: tuple

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] == 0:
            raise InvalidParameterError(
                f"gradient batch must be a nonempty 2-D array, got shape {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise InvalidParameterError("gradient batch contains non-finite values")
        ids = tuple(int(i) for i in self.ids)
        if len(ids) != rows.shape[0]:
            raise InvalidParameterError(
                f"{len(ids)} ids for {rows.shape[0]} gradient rows")
        if len(set(ids)) != len(ids):
            raise InvalidParameterError("client ids must be unique")
        rows = np.ascontiguousarray(rows)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "ids", ids)

    @classmethod
    def from_rows(cls, rows, ids=None) -> "GradientBatch":
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim == 1:
            rows = rows.reshape(1, -1)
        if ids is None:
            ids = range(rows.shape[0])
        return cls(rows=rows, ids=tuple(ids))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def index_of(self, client_id: int) -> int:
        try:
            return self.ids.index(int(client_id))
        except ValueError:
            raise InvalidParameterError(
                f"client id {client_id} not present in batch") from None

    def row_for(self, client_id: int) -> np.ndarray:
        return self.rows[self.index_of(client_id)]

    def subset(self, ids) -> "GradientBatch":
        keep = [self.index_of(i) for i in ids]
        return GradientBatch(rows=self.rows[keep], ids=tuple(self.ids[k] for k in keep))

    def mean(self) -> np.ndarray:
        return self.rows.mean(axis=0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["client_id"] + [f"g{j}" for j in range(self.dim)])
            for cid, row in zip(self.ids, self.rows):
                writer.writerow([cid] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "GradientBatch":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or not header or header[0] != "client_id":
                raise InvalidParameterError(
                    f"{path}: expected a gradient CSV with a 'client_id' header column")
            ids = []
            rows = []
            for rec in reader:
                if not rec:
                    continue
                ids.append(int(rec[0]))
                rows.append([float(v) for v in rec[1:]])
        if not rows:
            raise InvalidParameterError(f"{path}: gradient CSV has no data rows")
        return cls.from_rows(np.array(rows, dtype=np.float64), ids)


def coordinate_median(batch: GradientBatch) -> np.ndarray:
    """Per-coordinate median; even counts take the midpoint of the middle pair."""
    return np.median(batch.rows, axis=0)


def coordinate_std(batch: GradientBatch) -> np.ndarray:
    """Per-coordinate population standard deviation (ddof=0)."""
    return batch.rows.std(axis=0, ddof=0)


def pairwise_sq_dists(rows: np.ndarray) -> np.ndarray:
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    return _kernels.pairwise_sq_dists(rows)


def pairwise_diameter(batch: GradientBatch) -> float:
    """Largest Euclidean distance between any two rows (0.0 for a single row)."""
    if batch.n == 1:
        return 0.0
    return float(np.sqrt(pairwise_sq_dists(batch.rows).max()))


def scalar_projection(vector: np.ndarray, direction: np.ndarray) -> float:
    """Signed length of ``vector`` along ``direction``: <v, u>/||u||."""
    direction = np.asarray(direction, dtype=np.float64)
    nrm = float(np.linalg.norm(direction))
    if nrm == 0.0:
        raise DegenerateDirectionError("cannot project onto a zero direction")
    return float(np.dot(np.asarray(vector, dtype=np.float64), direction) / nrm)


def fix_sign(vector: np.ndarray) -> np.ndarray:
    """Flip ``vector`` if needed so its first nonzero entry is nonnegative."""
    for v in vector:
        if abs(v) > _SIGN_EPS:
            return -vector if v < 0.0 else vector
    return vector


def top_singular_direction(batch: GradientBatch, iterations: int = 50,
                           seed: int = 0) -> np.ndarray:
    """Unit top right-singular vector of the row matrix, via power iteration.

    Runs ``iterations`` rounds of ``v <- normalize(A^T A v)`` from a seeded
    random start, then sign-normalizes.  An all-zero matrix has no preferred
    direction: the first basis vector is returned and a RuntimeWarning issued.
    """
    a = batch.rows
    if not np.any(a):
        warnings.warn("all-zero matrix has no singular direction; returning e1",
                      RuntimeWarning, stacklevel=2)
        e1 = np.zeros(batch.dim)
        e1[0] = 1.0
        return e1
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(batch.dim)
    v /= np.linalg.norm(v)
    for _ in range(iterations):
        w = a.T @ (a @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            # start vector landed exactly in the null space; nudge and go on
            v = rng.standard_normal(batch.dim)
            v /= np.linalg.norm(v)
            continue
        v = w / nrm
    return fix_sign(v)


def smallest_eigenpairs(matrix: np.ndarray, count: int):
    """The ``count`` smallest eigenpairs of a symmetric matrix, ascending.

    Returns a list of ``(eigenvalue, unit_eigenvector)`` with sign-normalized
    vectors.  The input must be square and symmetric to within 1e-9.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidParameterError(f"expected a square matrix, got shape {m.shape}")
    if m.shape[0] == 0:
        raise InvalidParameterError("expected a nonempty matrix")
    if not np.all(np.isfinite(m)):
        raise InvalidParameterError("matrix contains non-finite values")
    if np.max(np.abs(m - m.T)) > 1e-9:
        raise InvalidParameterError("matrix is not symmetric (tolerance 1e-9)")
    count = int(count)
    if count < 1 or count > m.shape[0]:
        raise InvalidParameterError(
            f"requested {count} eigenpairs of a {m.shape[0]}x{m.shape[0]} matrix")
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    return [(float(vals[k]), fix_sign(vecs[:, k].copy())) for k in range(count)]
