"""Server-side aggregation rules, composition wrappers, and a robustness probe.

Eight base rules (mean, multi_krum, median, rfa, aksel, cclip, dnc, rbtm), two
wrappers that transform the batch before the base rule runs (bucketing, nnm),
and an exhaustive empirical checker for the (f, kappa) aggregation-robustness
inequality on desk-scale batches.

Tie-breaking is by row position inside the batch: multi_krum keeps the
lower-positioned row on equal scores, dnc removes the lower-positioned row
first on equal scores, and nnm prefers the lower-positioned neighbor on equal
distances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import InsufficientClientsError, InvalidParameterError
from .stats import GradientBatch

BASE_RULE_NAMES = ("mean", "multi_krum", "median", "rfa", "aksel", "cclip",
                   "dnc", "rbtm")
WRAPPER_NAMES = ("bucketing", "nnm")


# ---------------------------------------------------------------------------
# parameter records


@dataclass(frozen=True)
class RfaParams:
    iterations: int = 8
    smoothing: float = 1e-6

    def __post_init__(self):
        if int(self.iterations) < 1:
            raise InvalidParameterError("rfa iterations must be >= 1")
        if not (self.smoothing > 0.0):
            raise InvalidParameterError("rfa smoothing must be > 0")


@dataclass(frozen=True)
class CClipParams:
    inner_iterations: int = 1
    clip_radius: float = 10.0
    warm_start: bool = True

    def __post_init__(self):
        if int(self.inner_iterations) < 1:
            raise InvalidParameterError("cclip inner_iterations must be >= 1")
        if not (self.clip_radius > 0.0):
            raise InvalidParameterError("cclip clip_radius must be > 0")


@dataclass(frozen=True)
class DncParams:
    filter_fraction: float = 1.0
    outer_iterations: int = 1
    subsample_dim: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.filter_fraction < 0.0:
            raise InvalidParameterError("dnc filter_fraction must be >= 0")
        if int(self.outer_iterations) < 1:
            raise InvalidParameterError("dnc outer_iterations must be >= 1")
        if int(self.subsample_dim) < 1:
            raise InvalidParameterError("dnc subsample_dim must be >= 1")


@dataclass(frozen=True)
class BucketingParams:
    bucket_size: int = 2
    seed: int = 0

    def __post_init__(self):
        if int(self.bucket_size) < 1:
            raise InvalidParameterError("bucket_size must be >= 1")


@dataclass(frozen=True)
class WrapperSpec:
    kind: str
    bucketing: BucketingParams | None = None

    def __post_init__(self):
        if self.kind not in WRAPPER_NAMES:
            raise InvalidParameterError(
                f"unknown wrapper {self.kind!r}; expected one of {WRAPPER_NAMES}")
        if self.kind == "bucketing" and self.bucketing is None:
            object.__setattr__(self, "bucketing", BucketingParams())
        if self.kind == "nnm" and self.bucketing is not None:
            raise InvalidParameterError("nnm wrapper takes no bucketing params")


_PARAM_TYPES = {"rfa": RfaParams, "cclip": CClipParams, "dnc": DncParams}


@dataclass(frozen=True)
class AggregatorSpec:
    """A base rule plus an ordered wrapper chain, outermost first."""

    name: str
    params: object | None = None
    wrappers: tuple = ()

    def __post_init__(self):
        if self.name not in BASE_RULE_NAMES:
            raise InvalidParameterError(
                f"unknown aggregation rule {self.name!r}; expected one of {BASE_RULE_NAMES}")
        want = _PARAM_TYPES.get(self.name)
        params = self.params
        if want is None:
            if params is not None:
                raise InvalidParameterError(
                    f"rule {self.name!r} takes no parameter record")
        else:
            if params is None:
                params = want()
            elif not isinstance(params, want):
                raise InvalidParameterError(
                    f"rule {self.name!r} expects {want.__name__}, got {type(params).__name__}")
        wrappers = tuple(
            w if isinstance(w, WrapperSpec) else WrapperSpec(kind=str(w))
            for w in self.wrappers)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "wrappers", wrappers)

    def label(self) -> str:
        """Human-readable rule name with wrapper prefixes, outermost first."""
        out = self.name
        for w in reversed(self.wrappers):
            out = f"{w.kind}+{out}"
        return out


@dataclass(frozen=True)
class RobustnessQuery:
    f: int
    kappa: float

    def __post_init__(self):
        if int(self.f) < 0:
            raise InvalidParameterError("robustness query f must be >= 0")
        if not (self.kappa >= 0.0):
            raise InvalidParameterError("robustness query kappa must be >= 0")


@dataclass(frozen=True)
class RobustnessReport:
    passed: bool
    worst_ratio: float
    worst_subset_ids: tuple
    worst_lhs: float
    worst_rhs: float


# ---------------------------------------------------------------------------
# base rules


def aggregate_mean(batch: GradientBatch) -> np.ndarray:
    return batch.mean()


def aggregate_median(batch: GradientBatch) -> np.ndarray:
    return stats.coordinate_median(batch)


def krum_scores(batch: GradientBatch, f: int) -> np.ndarray:
    """Per-row sum of squared distances to its n-f-2 nearest other rows."""
    n = batch.n
    f = int(f)
    if f < 0:
        raise InvalidParameterError("f must be >= 0")
    if n - f - 2 < 1:
        raise InsufficientClientsError(
            f"multi_krum needs at least one scoring neighbor (n >= f+3), "
            f"got n={n}, f={f}")
    d2 = stats.pairwise_sq_dists(batch.rows)
    k = n - f - 2
    scores = np.empty(n)
    for i in range(n):
        others = np.delete(d2[i], i)
        others.sort()
        scores[i] = others[:k].sum()
    return scores


def multi_krum(batch: GradientBatch, f: int) -> np.ndarray:
    scores = krum_scores(batch, f)
    m = batch.n - int(f)
    keep = np.lexsort((np.arange(batch.n), scores))[:m]
    return batch.rows[keep].mean(axis=0)


def rfa_geometric_median(batch: GradientBatch, params: RfaParams | None = None) -> np.ndarray:
    """Smoothed Weiszfeld iteration for the geometric median, from the mean."""
    params = params or RfaParams()
    v = batch.mean()
    for _ in range(int(params.iterations)):
        dist = np.linalg.norm(batch.rows - v, axis=1)
        w = 1.0 / np.maximum(params.smoothing, dist)
        v = (w[:, None] * batch.rows).sum(axis=0) / w.sum()
    return v


def geometric_median_objective(batch: GradientBatch, point: np.ndarray) -> float:
    return float(np.linalg.norm(batch.rows - point, axis=1).sum())


def aksel(batch: GradientBatch) -> np.ndarray:
    med = stats.coordinate_median(batch)
    s = np.einsum("ij,ij->i", batch.rows - med, batch.rows - med)
    keep = s <= np.median(s)
    return batch.rows[keep].mean(axis=0)


def centered_clip(batch: GradientBatch, params: CClipParams | None = None,
                  previous_aggregate: np.ndarray | None = None) -> np.ndarray:
    params = params or CClipParams()
    if previous_aggregate is None:
        previous_aggregate = np.zeros(batch.dim)
    previous_aggregate = np.asarray(previous_aggregate, dtype=np.float64)
    if previous_aggregate.shape != (batch.dim,):
        raise InvalidParameterError(
            f"previous aggregate has shape {previous_aggregate.shape}, "
            f"expected ({batch.dim},)")
    v = previous_aggregate.copy() if params.warm_start else np.zeros(batch.dim)
    tau = float(params.clip_radius)
    for _ in range(int(params.inner_iterations)):
        diff = batch.rows - v
        nrm = np.linalg.norm(diff, axis=1)
        scale = np.ones(batch.n)
        hot = nrm > tau
        scale[hot] = tau / nrm[hot]
        v = v + (scale[:, None] * diff).mean(axis=0)
    return v


def dnc(batch: GradientBatch, f: int, params: DncParams | None = None) -> np.ndarray:
    """Iteratively remove the clients with the largest spectral outlier scores."""
    params = params or DncParams()
    f = int(f)
    if f < 0:
        raise InvalidParameterError("f must be >= 0")
    per_round = int(math.floor(params.filter_fraction * f))
    total = per_round * int(params.outer_iterations)
    if total >= batch.n:
        raise InsufficientClientsError(
            f"dnc would remove {total} of {batch.n} clients")
    rng = np.random.default_rng(int(params.seed))
    survivors = np.arange(batch.n)
    for _ in range(int(params.outer_iterations)):
        sub_dim = min(int(params.subsample_dim), batch.dim)
        coords = rng.choice(batch.dim, size=sub_dim, replace=False)
        if per_round == 0:
            continue
        sub = batch.rows[np.ix_(survivors, coords)]
        mu = sub.mean(axis=0)
        centered = sub - mu
        v = stats.top_singular_direction(GradientBatch.from_rows(centered))
        scores = (centered @ v) ** 2
        # drop the per_round largest scores; equal scores drop the earlier row
        drop = np.lexsort((np.arange(survivors.size), -scores))[:per_round]
        survivors = np.delete(survivors, drop)
    return batch.rows[survivors].mean(axis=0)


def trimmed_mean_rbtm(batch: GradientBatch, f: int) -> np.ndarray:
    """Coordinate-wise mean after trimming the f largest and f smallest values."""
    f = int(f)
    if f < 0:
        raise InvalidParameterError("f must be >= 0")
    if batch.n <= 2 * f:
        raise InsufficientClientsError(
            f"rbtm needs n > 2f, got n={batch.n}, f={f}")
    if f == 0:
        return batch.mean()
    ordered = np.sort(batch.rows, axis=0)
    return ordered[f:batch.n - f].mean(axis=0)


# ---------------------------------------------------------------------------
# wrappers


def bucketing_wrap(batch: GradientBatch, params: BucketingParams,
                   inner: AggregatorSpec, inner_f: int,
                   previous_aggregate: np.ndarray | None = None) -> np.ndarray:
    """Shuffle rows, average consecutive buckets of s, run the inner rule on
    the bucket means with the reduced byzantine budget ceil(f/s)."""
    s = int(params.bucket_size)
    rng = np.random.default_rng(int(params.seed))
    perm = rng.permutation(batch.n)
    shuffled = batch.rows[perm]
    n_buckets = math.ceil(batch.n / s)
    means = np.empty((n_buckets, batch.dim))
    for b in range(n_buckets):
        means[b] = shuffled[b * s:(b + 1) * s].mean(axis=0)
    reduced_f = math.ceil(int(inner_f) / s)
    bucket_batch = GradientBatch.from_rows(means)
    return apply_aggregator(inner, bucket_batch, reduced_f,
                            previous_aggregate=previous_aggregate)


def nnm_mix(batch: GradientBatch, f: int) -> GradientBatch:
    """Replace each row by the mean of its n-f nearest rows (itself included)."""
    f = int(f)
    if f < 0:
        raise InvalidParameterError("f must be >= 0")
    if batch.n <= f:
        raise InsufficientClientsError(
            f"nnm needs n > f, got n={batch.n}, f={f}")
    k = batch.n - f
    d2 = stats.pairwise_sq_dists(batch.rows)
    mixed = np.empty_like(batch.rows)
    for i in range(batch.n):
        near = np.lexsort((np.arange(batch.n), d2[i]))[:k]
        mixed[i] = batch.rows[near].mean(axis=0)
    return GradientBatch(rows=mixed, ids=batch.ids)


def nnm_wrap(batch: GradientBatch, f: int, inner: AggregatorSpec,
             previous_aggregate: np.ndarray | None = None) -> np.ndarray:
    return apply_aggregator(inner, nnm_mix(batch, f), f,
                            previous_aggregate=previous_aggregate)


# ---------------------------------------------------------------------------
# dispatch


def _reseeded(spec: AggregatorSpec, seed: int | None) -> AggregatorSpec:
    """Return a copy of ``spec`` whose seeded components (dnc subsampling,
    bucketing shuffles) use streams derived from ``seed``."""
    if seed is None:
        return spec
    params = spec.params
    if spec.name == "dnc":
        derived = int(np.random.SeedSequence((int(seed), 0x6D0C)).generate_state(1)[0])
        params = DncParams(filter_fraction=params.filter_fraction,
                           outer_iterations=params.outer_iterations,
                           subsample_dim=params.subsample_dim, seed=derived)
    wrappers = []
    for pos, w in enumerate(spec.wrappers):
        if w.kind == "bucketing":
            derived = int(np.random.SeedSequence(
                (int(seed), 0xB0C4, pos)).generate_state(1)[0])
            wrappers.append(WrapperSpec(
                kind="bucketing",
                bucketing=BucketingParams(bucket_size=w.bucketing.bucket_size,
                                          seed=derived)))
        else:
            wrappers.append(w)
    return AggregatorSpec(name=spec.name, params=params, wrappers=tuple(wrappers))


def apply_aggregator(spec: AggregatorSpec, batch: GradientBatch, f: int,
                     previous_aggregate: np.ndarray | None = None,
                     seed: int | None = None) -> np.ndarray:
    """Run ``spec`` on ``batch``: wrappers outermost-first, then the base rule.

    ``previous_aggregate`` is the cross-round state for cclip warm starts.
    ``seed``, when given, rederives the seeds of the seeded components so
    callers can vary them per round without rebuilding the spec.
    """
    spec = _reseeded(spec, seed)
    if spec.wrappers:
        head, rest = spec.wrappers[0], spec.wrappers[1:]
        inner = AggregatorSpec(name=spec.name, params=spec.params, wrappers=rest)
        if head.kind == "bucketing":
            return bucketing_wrap(batch, head.bucketing, inner, f,
                                  previous_aggregate=previous_aggregate)
        return nnm_wrap(batch, f, inner, previous_aggregate=previous_aggregate)
    name = spec.name
    if name == "mean":
        return aggregate_mean(batch)
    if name == "median":
        return aggregate_median(batch)
    if name == "multi_krum":
        return multi_krum(batch, f)
    if name == "rfa":
        return rfa_geometric_median(batch, spec.params)
    if name == "aksel":
        return aksel(batch)
    if name == "cclip":
        return centered_clip(batch, spec.params, previous_aggregate)
    if name == "dnc":
        return dnc(batch, f, spec.params)
    return trimmed_mean_rbtm(batch, f)


# ---------------------------------------------------------------------------
# empirical robustness probe


def check_f_kappa_robustness(batch: GradientBatch, aggregate: np.ndarray,
                             query: RobustnessQuery) -> RobustnessReport:
    """Exhaustively test the aggregation-robustness inequality.

    For every size n-f subset G the aggregate must satisfy
    ``||aggregate - mean_G||^2 <= (kappa/(n-f)) * sum_{i in G} ||g_i - mean_G||^2``.
    Returns the overall verdict and the subset with the largest ratio of
    left-hand to right-hand side (inf when the right side is zero but the left
    is not).  Intended for small n: all C(n, n-f) subsets are enumerated.
    """
    n = batch.n
    f = int(query.f)
    keep = n - f
    if keep <= 0:
        raise InvalidParameterError(f"robustness check needs n > f, got n={n}, f={f}")
    aggregate = np.asarray(aggregate, dtype=np.float64)
    if aggregate.shape != (batch.dim,):
        raise InvalidParameterError(
            f"aggregate has shape {aggregate.shape}, expected ({batch.dim},)")
    kappa = float(query.kappa)
    passed = True
    worst_ratio = -1.0
    worst = (0.0, 0.0, ())
    for subset in itertools.combinations(range(n), keep):
        rows = batch.rows[list(subset)]
        mu = rows.mean(axis=0)
        lhs = float(np.sum((aggregate - mu) ** 2))
        rhs = (kappa / keep) * float(np.sum((rows - mu) ** 2))
        if lhs > rhs:
            passed = False
        if rhs > 0.0:
            ratio = lhs / rhs
        else:
            ratio = 0.0 if lhs == 0.0 else math.inf
        if ratio > worst_ratio:
            worst_ratio = ratio
            worst = (lhs, rhs, tuple(batch.ids[i] for i in subset))
    return RobustnessReport(passed=passed, worst_ratio=worst_ratio,
                            worst_subset_ids=worst[2], worst_lhs=worst[0],
                            worst_rhs=worst[1])
