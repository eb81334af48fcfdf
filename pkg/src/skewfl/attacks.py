"""Byzantine client strategies.

Context-based attacks (lie, ipm, minmax, minsum, mimic, strike) read only the
honest gradients of the current round, packaged in an :class:`AttackContext`,
and emit one vector that every Byzantine client sends.  ``bitflip`` instead
negates each Byzantine client's own honestly computed gradient, and
``labelflip`` acts earlier, on the training labels, so both are driven from
the round loop rather than from this module's dispatcher.

The skew attack runs in two stages: select the n-2f honest gradients with the
highest scalar projection onto the median-minus-mean direction, then push away
from their mean along the coordinate-wise sign of (selected mean - overall
mean), scaled by the per-coordinate spread of the selected set.  The scale is
the largest multiple alpha that keeps the crafted vector within the selected
set's diameter of every selected gradient; alpha is found by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import stats
from .errors import InvalidParameterError
from .stats import GradientBatch

ATTACK_NAMES = ("none", "bitflip", "labelflip", "lie", "ipm", "minmax",
                "minsum", "mimic", "strike")

_DEGENERATE_DIRECTION_NORM = 1e-12


# ---------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class AttackContext:
    """What the adversary can see in one round.

    ``honest`` holds the n-f honest gradients (with their client ids), ``n``
    and ``f`` are the round's totals, and ``byzantine_own`` optionally carries
    the gradients the Byzantine clients would have sent if honest (used only
    by bitflip).  ``honest_mean`` is derived.
    """

    honest: GradientBatch
    n: int
    f: int
    byzantine_own: GradientBatch | None = None
    honest_mean: np.ndarray = field(init=False)

    def __post_init__(self):
        n = int(self.n)
        f = int(self.f)
        if f < 0 or n < 1:
            raise InvalidParameterError(f"bad round sizes n={n}, f={f}")
        if self.honest.n != n - f or n - f < 1:
            raise InvalidParameterError(
                f"expected {n - f} honest gradients (n={n}, f={f}), got {self.honest.n}")
        if self.byzantine_own is not None:
            if self.byzantine_own.dim != self.honest.dim:
                raise InvalidParameterError("byzantine_own dimension mismatch")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "f", f)
        mean = self.honest.mean()
        mean.setflags(write=False)
        object.__setattr__(self, "honest_mean", mean)


@dataclass(frozen=True)
class SkewSelection:
    """Stage-1 output: the search direction, per-client projections, the
    selected id set (descending projection order), and the selected rows'
    summary statistics."""

    direction: np.ndarray
    projections: dict
    selected: tuple
    selected_rows: np.ndarray
    mean_s: np.ndarray
    std_s: np.ndarray
    diameter_s: float


@dataclass(frozen=True)
class StrikeParams:
    nu: float = 1.0
    bisect_tolerance: float = 1e-2
    bisect_max_iters: int = 64

    def __post_init__(self):
        if not (self.nu >= 0.0):
            raise InvalidParameterError("nu must be >= 0")
        if not (self.bisect_tolerance > 0.0):
            raise InvalidParameterError("bisect_tolerance must be > 0")
        if int(self.bisect_max_iters) < 1:
            raise InvalidParameterError("bisect_max_iters must be >= 1")


@dataclass(frozen=True)
class LieParams:
    z: float = 1.5


@dataclass(frozen=True)
class IpmParams:
    epsilon: float = 0.1


@dataclass(frozen=True)
class MinOptParams:
    gamma_init: float = 10.0
    tau: float = 1e-5

    def __post_init__(self):
        if not (self.gamma_init > 0.0):
            raise InvalidParameterError("gamma_init must be > 0")
        if not (self.tau > 0.0):
            raise InvalidParameterError("tau must be > 0")


# ---------------------------------------------------------------------------
# simple strategies


def bitflip_attack(own: np.ndarray) -> np.ndarray:
    return -np.asarray(own, dtype=np.float64)


def labelflip_transform(label: int, num_classes: int) -> int:
    label = int(label)
    num_classes = int(num_classes)
    if not 0 <= label < num_classes:
        raise InvalidParameterError(
            f"label {label} out of range for {num_classes} classes")
    return num_classes - 1 - label


def lie_attack(ctx: AttackContext, params: LieParams | None = None) -> np.ndarray:
    params = params or LieParams()
    mu = ctx.honest_mean
    sigma = stats.coordinate_std(ctx.honest)
    return mu - params.z * sigma


def ipm_attack(ctx: AttackContext, params: IpmParams | None = None) -> np.ndarray:
    params = params or IpmParams()
    return -params.epsilon * ctx.honest_mean


# ---------------------------------------------------------------------------
# feasibility-bounded perturbation strategies


def _gamma_search(feasible, gamma_init: float, tau: float) -> float:
    """Largest gamma >= 0 with feasible(gamma) true, to within tau.

    Assumes feasible(0) holds.  Expands upward by doubling while feasible,
    contracts by halving while not, then bisects the bracket down to tau and
    returns its feasible lower end.
    """
    lo = 0.0
    hi = None
    g = float(gamma_init)
    if feasible(g):
        lo = g
        for _ in range(200):
            g *= 2.0
            if not feasible(g):
                hi = g
                break
            lo = g
        if hi is None:
            return lo
    else:
        hi = g
        for _ in range(200):
            g /= 2.0
            if feasible(g):
                lo = g
                break
            hi = g
    while hi - lo > tau:
        mid = (lo + hi) / 2.0
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def minmax_attack(ctx: AttackContext, params: MinOptParams | None = None) -> np.ndarray:
    """mu + gamma*sigma with the largest gamma keeping the vector within the
    honest diameter of every honest gradient."""
    params = params or MinOptParams()
    mu = ctx.honest_mean
    sigma = stats.coordinate_std(ctx.honest)
    if not np.any(sigma):
        return mu.copy()
    rows = ctx.honest.rows
    bound = stats.pairwise_diameter(ctx.honest)

    def feasible(gamma: float) -> bool:
        cand = mu + gamma * sigma
        return float(np.linalg.norm(rows - cand, axis=1).max()) <= bound

    gamma = _gamma_search(feasible, params.gamma_init, params.tau)
    return mu + gamma * sigma


def minsum_attack(ctx: AttackContext, params: MinOptParams | None = None) -> np.ndarray:
    """As minmax, but bounded by the worst honest sum of squared distances."""
    params = params or MinOptParams()
    mu = ctx.honest_mean
    sigma = stats.coordinate_std(ctx.honest)
    if not np.any(sigma):
        return mu.copy()
    rows = ctx.honest.rows
    d2 = stats.pairwise_sq_dists(rows)
    bound = float(d2.sum(axis=1).max())

    def feasible(gamma: float) -> bool:
        cand = mu + gamma * sigma
        return float(np.sum((rows - cand) ** 2)) <= bound

    gamma = _gamma_search(feasible, params.gamma_init, params.tau)
    return mu + gamma * sigma


def mimic_attack(ctx: AttackContext) -> np.ndarray:
    """Copy the honest gradient most extreme along the top singular direction
    of the centered honest set; ties go to the earlier row."""
    mu = ctx.honest_mean
    centered = ctx.honest.rows - mu
    if not np.any(centered):
        return ctx.honest.rows[0].copy()
    v = stats.top_singular_direction(GradientBatch.from_rows(centered))
    sq = (centered @ v) ** 2
    target = int(np.lexsort((np.arange(ctx.honest.n), -sq))[0])
    return ctx.honest.rows[target].copy()


# ---------------------------------------------------------------------------
# the two-stage skew attack


def strike_stage1_select(ctx: AttackContext) -> SkewSelection:
    """Pick the n-2f honest gradients most aligned with median minus mean.

    Projections are signed lengths along the search direction; the selected
    set keeps the highest ones, ties preferring the lower client id.  When the
    direction is degenerate (norm < 1e-12), projections are all zero and the
    n-2f lowest ids are selected.
    """
    n, f = ctx.n, ctx.f
    keep = n - 2 * f
    if keep < 1:
        raise InvalidParameterError(
            f"skew selection needs n - 2f >= 1, got n={n}, f={f}")
    honest = ctx.honest
    direction = stats.coordinate_median(honest) - ctx.honest_mean
    ids = np.array(honest.ids)
    if float(np.linalg.norm(direction)) < _DEGENERATE_DIRECTION_NORM:
        projections = {int(i): 0.0 for i in ids}
        order = np.argsort(ids)[:keep]
    else:
        proj = np.array([stats.scalar_projection(row, direction)
                         for row in honest.rows])
        projections = {int(i): float(p) for i, p in zip(ids, proj)}
        order = np.lexsort((ids, -proj))[:keep]
    selected = tuple(int(ids[k]) for k in order)
    rows = honest.rows[order]
    sel_batch = GradientBatch.from_rows(rows, selected)
    return SkewSelection(
        direction=direction,
        projections=projections,
        selected=selected,
        selected_rows=rows,
        mean_s=rows.mean(axis=0),
        std_s=rows.std(axis=0, ddof=0),
        diameter_s=stats.pairwise_diameter(sel_batch),
    )


def _strike_excess(alpha: float, base: np.ndarray, step: np.ndarray,
                   rows: np.ndarray, diameter: float) -> float:
    cand = base + alpha * step
    return float(np.linalg.norm(rows - cand, axis=1).max()) - diameter


def strike_bisection(sel: SkewSelection, honest_mean: np.ndarray,
                     params: StrikeParams | None = None) -> float:
    """Root of max_s ||mean_s + alpha*sign(mean_s - mean)*std_s - g_s|| = diameter.

    The excess function is <= 0 at alpha = 0 and grows without bound once the
    perturbation direction is nonzero, so the root is bracketed by doubling
    the upper end from 1 and then bisected.  Stops when the bracket is within
    the relative tolerance AND the midpoint residual is small, or after
    ``bisect_max_iters`` halvings; returns the bracket midpoint.  Degenerate
    selections (zero spread, zero diameter, or a zero perturbation direction)
    return 0.
    """
    params = params or StrikeParams()
    step = np.sign(sel.mean_s - np.asarray(honest_mean, dtype=np.float64)) * sel.std_s
    if sel.diameter_s == 0.0 or not np.any(step):
        return 0.0
    base = sel.mean_s
    rows = sel.selected_rows
    diameter = sel.diameter_s

    hi = 1.0
    for _ in range(200):
        if _strike_excess(hi, base, step, rows, diameter) >= 0.0:
            break
        hi *= 2.0
    lo = 0.0
    width_target = params.bisect_tolerance * max(1.0, hi)
    residual_target = 1e-3 * max(diameter, 1.0)
    for _ in range(int(params.bisect_max_iters)):
        mid = (lo + hi) / 2.0
        excess = _strike_excess(mid, base, step, rows, diameter)
        if hi - lo <= width_target and abs(excess) <= residual_target:
            break
        if excess >= 0.0:
            hi = mid
        else:
            lo = mid
    return (lo + hi) / 2.0


def strike_attack(ctx: AttackContext, params: StrikeParams | None = None) -> np.ndarray:
    """Full pipeline: stage-1 selection, bisection for alpha, then
    mean_s + nu*alpha*sign(mean_s - mean)*std_s."""
    params = params or StrikeParams()
    sel = strike_stage1_select(ctx)
    alpha = strike_bisection(sel, ctx.honest_mean, params)
    step = np.sign(sel.mean_s - ctx.honest_mean) * sel.std_s
    return sel.mean_s + params.nu * alpha * step


# ---------------------------------------------------------------------------
# dispatch

_CONTEXT_ATTACKS = {
    "lie": lambda ctx, p: lie_attack(ctx, p),
    "ipm": lambda ctx, p: ipm_attack(ctx, p),
    "minmax": lambda ctx, p: minmax_attack(ctx, p),
    "minsum": lambda ctx, p: minsum_attack(ctx, p),
    "mimic": lambda ctx, p: mimic_attack(ctx),
    "strike": lambda ctx, p: strike_attack(ctx, p),
}

ATTACK_PARAM_TYPES = {
    "lie": LieParams,
    "ipm": IpmParams,
    "minmax": MinOptParams,
    "minsum": MinOptParams,
    "strike": StrikeParams,
}


def default_attack_params(name: str):
    t = ATTACK_PARAM_TYPES.get(name)
    return t() if t is not None else None


def apply_attack(name: str, ctx: AttackContext, params=None) -> np.ndarray:
    """One shared Byzantine vector for a context-based attack.

    ``bitflip``/``labelflip``/``none`` are not dispatched here: the first two
    act per-client or on the data pipeline, the last sends nothing.
    """
    if name not in _CONTEXT_ATTACKS:
        raise InvalidParameterError(
            f"{name!r} is not a context-based attack; expected one of "
            f"{tuple(_CONTEXT_ATTACKS)}")
    want = ATTACK_PARAM_TYPES.get(name)
    if params is None and want is not None:
        params = want()
    if want is not None and not isinstance(params, want):
        raise InvalidParameterError(
            f"attack {name!r} expects {want.__name__}, got {type(params).__name__}")
    return _CONTEXT_ATTACKS[name](ctx, params)
