"""Gradient-geometry analysis: skew quantification and LLE embedding.

These produce data for external plotting (CSV/JSON via the CLI); nothing here
draws anything.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import attacks, stats
from .errors import InvalidParameterError
from .stats import GradientBatch


@dataclass(frozen=True)
class LleParams:
    """``neighbors=None`` resolves to floor(0.1*m) with a floor of 2."""

    neighbors: int | None = None
    out_dim: int = 2
    regularization: float = 1e-3

    def __post_init__(self):
        if self.neighbors is not None and int(self.neighbors) < 2:
            raise InvalidParameterError("lle neighbors must be >= 2")
        if int(self.out_dim) < 1:
            raise InvalidParameterError("lle out_dim must be >= 1")
        if not (self.regularization > 0.0):
            raise InvalidParameterError("lle regularization must be > 0")

    def resolve_neighbors(self, m: int) -> int:
        if self.neighbors is not None:
            return int(self.neighbors)
        return max(2, int(np.floor(0.1 * m)))


@dataclass(frozen=True)
class SkewReport:
    score: float
    pearson_terms: np.ndarray
    selection: attacks.SkewSelection


def reconstruction_weights(batch: GradientBatch, params: LleParams) -> np.ndarray:
    """Row-stochastic (m, m) LLE weight matrix.

    Row i carries the weights reconstructing point i from its k nearest
    neighbors (self excluded; distance ties prefer the lower index), solved
    from the local Gram system with trace-relative diagonal regularization and
    normalized to sum to one.
    """
    m = batch.n
    k = params.resolve_neighbors(m)
    if k >= m:
        raise InvalidParameterError(f"lle needs neighbors < points, got k={k}, m={m}")
    d2 = stats.pairwise_sq_dists(batch.rows)
    w = np.zeros((m, m))
    for i in range(m):
        ranked = np.lexsort((np.arange(m), d2[i]))
        neigh = np.array([j for j in ranked if j != i][:k])
        z = batch.rows[neigh] - batch.rows[i]
        gram = z @ z.T
        trace = float(np.trace(gram))
        r = params.regularization * (trace / k) if trace > 0.0 else params.regularization
        gram = gram + r * np.eye(k)
        weights = np.linalg.solve(gram, np.ones(k))
        total = weights.sum()
        weights = weights / total if total != 0.0 else np.full(k, 1.0 / k)
        w[i, neigh] = weights
    return w


def lle_embed(batch: GradientBatch, params: LleParams | None = None) -> np.ndarray:
    """(m, out_dim) locally-linear-embedding coordinates.

    Embedding columns are the eigenvectors of M = (I-W)^T (I-W) for the
    out_dim smallest nonzero eigenvalues; the constant near-zero eigenvector
    is discarded, so each column is (numerically) zero-mean.
    """
    params = params or LleParams()
    m = batch.n
    out_dim = int(params.out_dim)
    if m < out_dim + 2:
        raise InvalidParameterError(
            f"lle needs at least out_dim + 2 = {out_dim + 2} points, got {m}")
    w = reconstruction_weights(batch, params)
    iw = np.eye(m) - w
    mat = iw.T @ iw
    pairs = stats.smallest_eigenpairs(mat, out_dim + 1)
    coords = np.column_stack([vec for _, vec in pairs[1:]])
    return coords


def skew_score(honest: GradientBatch, byzantine_count: int = 0) -> SkewReport:
    """How far the honest cloud's median sits from its mean, in spread units.

    score = ||median - mean|| / (pooled std + 1e-12) with pooled std the root
    mean per-coordinate population variance; 0 exactly when median and mean
    coincide.  ``pearson_terms`` holds the per-coordinate analogues
    (median_j - mean_j) / (std_j + 1e-12).  The report also carries the
    skew-selection rerun with the given byzantine count (0 selects every id).
    """
    if honest.n < 2:
        raise InvalidParameterError("skew score needs at least 2 gradients")
    byzantine_count = int(byzantine_count)
    med = stats.coordinate_median(honest)
    mean = honest.mean()
    var = honest.rows.var(axis=0, ddof=0)
    pooled = float(np.sqrt(var.mean()))
    score = float(np.linalg.norm(med - mean) / (pooled + 1e-12))
    terms = (med - mean) / (np.sqrt(var) + 1e-12)
    ctx = attacks.AttackContext(honest=honest, n=honest.n + byzantine_count,
                                f=byzantine_count)
    selection = attacks.strike_stage1_select(ctx)
    return SkewReport(score=score, pearson_terms=terms, selection=selection)


def summarize_runs(best_accuracies) -> tuple:
    """(mean, population std) over per-seed best accuracies."""
    values = np.asarray(list(best_accuracies), dtype=np.float64)
    if values.size == 0:
        raise InvalidParameterError("summarize_runs needs at least one value")
    return float(values.mean()), float(values.std(ddof=0))
