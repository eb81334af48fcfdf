"""The federated round protocol.

Each round: sample m of n clients without replacement, have the sampled
honest clients run local SGD and return pseudo-gradients (w_before - w_after),
let the Byzantine clients substitute their submissions per the configured
attack, aggregate with the configured defense, and step the global model by
the aggregate (server learning rate 1).

Determinism: one master seed; every random draw uses a stream derived from
labeled tuples (master_seed, stream_tag, round, client) via numpy
SeedSequence, so results are independent of evaluation order and identical
across backends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, analysis, attacks, models
from .aggregators import AggregatorSpec, apply_aggregator
from .attacks import AttackContext
from .datasets import Dataset
from .errors import (InsufficientClientsError, InvalidParameterError,
                     TrainingDivergenceError)
from .models import ModelSpec
from .stats import GradientBatch

_STREAM_CLIENT = 1
_STREAM_SAMPLE = 2
_STREAM_AGG = 3
_STREAM_INIT = 4


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of integers (order-sensitive)."""
    ss = np.random.SeedSequence(tuple(int(p) for p in parts))
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class FederationSpec:
    n: int
    f: int
    sampled_per_round: int
    rounds: int
    master_seed: int = 0
    byzantine_ids: tuple = None

    def __post_init__(self):
        n, f = int(self.n), int(self.f)
        if n < 1:
            raise InvalidParameterError("need at least one client")
        if not 0 <= f <= n / 2:
            raise InvalidParameterError(
                f"byzantine count must satisfy 0 <= f <= n/2, got f={f}, n={n}")
        m = int(self.sampled_per_round)
        if not 1 <= m <= n:
            raise InvalidParameterError(f"sampled_per_round must be in [1, {n}], got {m}")
        if int(self.rounds) < 1:
            raise InvalidParameterError("rounds must be >= 1")
        ids = self.byzantine_ids
        if ids is None:
            ids = tuple(range(n - f, n))
        else:
            ids = tuple(sorted(int(i) for i in ids))
            if len(ids) != f or len(set(ids)) != f:
                raise InvalidParameterError(
                    f"byzantine_ids must be {f} distinct ids, got {ids}")
            if ids and not (0 <= ids[0] and ids[-1] < n):
                raise InvalidParameterError(f"byzantine_ids out of range: {ids}")
        object.__setattr__(self, "byzantine_ids", ids)

    @property
    def honest_ids(self) -> tuple:
        byz = set(self.byzantine_ids)
        return tuple(i for i in range(int(self.n)) if i not in byz)


@dataclass(frozen=True)
class TrainSpec:
    model: ModelSpec
    learning_rate: float
    local_epochs: int = 1
    batch_size: int = 128
    momentum: float = 0.0
    weight_decay: float = 0.0
    clip_norm: float = 2.0

    def __post_init__(self):
        for name in ("learning_rate", "momentum", "weight_decay"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise InvalidParameterError(f"{name} must be finite and >= 0")
        if not (float(self.clip_norm) > 0.0):
            raise InvalidParameterError("clip_norm must be > 0")
        if int(self.local_epochs) < 0:
            raise InvalidParameterError("local_epochs must be >= 0")
        if int(self.batch_size) < 1:
            raise InvalidParameterError("batch_size must be >= 1")


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    seed: int
    attack: str
    defense: str
    sampled_ids: tuple
    accuracy: float
    aggregate: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= float(self.accuracy) <= 1.0:
            raise InvalidParameterError(
                f"accuracy must be in [0, 1], got {self.accuracy}")

    def to_json(self) -> str:
        payload = {
            "round": int(self.round_index),
            "seed": int(self.seed),
            "attack": self.attack,
            "defense": self.defense,
            "sampled": [int(i) for i in self.sampled_ids],
            "accuracy": float(self.accuracy),
            "aggregate": [float(v) for v in self.aggregate],
            "diagnostics": self.diagnostics,
        }
        return json.dumps(payload)


@dataclass(frozen=True)
class ExperimentResult:
    records: tuple
    best_accuracy: float
    best_round: int
    final_params: np.ndarray


# ---------------------------------------------------------------------------
# client-side training


def local_update(params: np.ndarray, shard: Dataset, spec: TrainSpec,
                 seed: int, round_index: int | None = None,
                 client_id: int | None = None) -> np.ndarray:
    """Pseudo-gradient of one client: w_before - w_after of local SGD.

    Empty shards and zero-epoch configurations return the zero vector.
    """
    params = np.asarray(params, dtype=np.float64)
    m = spec.model
    if params.shape != (m.param_dim,):
        raise InvalidParameterError(
            f"parameter vector has shape {params.shape}, expected ({m.param_dim},)")
    epochs = int(spec.local_epochs)
    if shard.size == 0 or epochs == 0:
        return np.zeros(m.param_dim)
    if shard.dim != m.features:
        raise InvalidParameterError(
            f"shard has {shard.dim} features, model expects {m.features}")
    rng = np.random.default_rng(int(seed))
    order = np.concatenate([rng.permutation(shard.size) for _ in range(epochs)])
    order = np.ascontiguousarray(order, dtype=np.int64)
    w = params.copy()
    vel = np.zeros_like(w)
    args = (w, vel, shard.features, shard.labels, order, epochs,
            int(spec.batch_size), m.num_classes)
    tail = (float(spec.learning_rate), float(spec.momentum),
            float(spec.weight_decay), float(spec.clip_norm))
    if m.kind == "softmax_linear":
        _kernels.softmax_sgd(*args, *tail)
    else:
        _kernels.mlp_sgd(*args, m.hidden, *tail)
    if not np.all(np.isfinite(w)):
        raise TrainingDivergenceError(
            "local training produced non-finite parameters",
            round_index=round_index, client_id=client_id)
    return params - w


def evaluate_accuracy(spec: ModelSpec, params: np.ndarray, dataset: Dataset) -> float:
    """Top-1 accuracy; argmax score ties resolve to the lowest class index."""
    if dataset.size == 0:
        raise InvalidParameterError("cannot evaluate on an empty dataset")
    pred = models.predict(spec, params, dataset.features)
    return float(np.mean(pred == dataset.labels))


def _flipped(shard: Dataset, num_classes: int) -> Dataset:
    return Dataset(features=shard.features,
                   labels=num_classes - 1 - shard.labels)


# ---------------------------------------------------------------------------
# the round loop


def run_round(params: np.ndarray, fed: FederationSpec, train: TrainSpec,
              defense: AggregatorSpec, attack_name: str, attack_params,
              shards, t: int, test_data: Dataset,
              previous_aggregate: np.ndarray | None = None):
    """Execute round ``t`` and return (updated params, RoundRecord).

    ``shards`` maps client id -> Dataset.  ``previous_aggregate`` carries the
    cclip warm start across rounds (None on round 0).
    """
    if attack_name not in attacks.ATTACK_NAMES:
        raise InvalidParameterError(
            f"unknown attack {attack_name!r}; expected one of {attacks.ATTACK_NAMES}")
    n, m = int(fed.n), int(fed.sampled_per_round)
    byz = set(fed.byzantine_ids)
    rng = np.random.default_rng(derive_seed(fed.master_seed, _STREAM_SAMPLE, t))
    sampled = np.sort(rng.choice(n, size=m, replace=False))
    honest_sampled = [int(i) for i in sampled if i not in byz]
    byz_sampled = [int(i) for i in sampled if i in byz]
    f_round = len(byz_sampled)

    def honest_grad(cid: int) -> np.ndarray:
        return local_update(params, shards[cid], train,
                            derive_seed(fed.master_seed, _STREAM_CLIENT, t, cid),
                            round_index=t, client_id=cid)

    submissions = {cid: honest_grad(cid) for cid in honest_sampled}
    diagnostics = {}
    if byz_sampled:
        if attack_name == "none":
            for cid in byz_sampled:
                submissions[cid] = honest_grad(cid)
        elif attack_name == "bitflip":
            for cid in byz_sampled:
                submissions[cid] = attacks.bitflip_attack(honest_grad(cid))
        elif attack_name == "labelflip":
            c = train.model.num_classes
            for cid in byz_sampled:
                submissions[cid] = local_update(
                    params, _flipped(shards[cid], c), train,
                    derive_seed(fed.master_seed, _STREAM_CLIENT, t, cid),
                    round_index=t, client_id=cid)
        else:
            if not honest_sampled:
                raise InsufficientClientsError(
                    f"round {t} sampled no honest clients; "
                    f"attack {attack_name!r} needs at least one")
            honest_batch = GradientBatch(
                rows=np.stack([submissions[cid] for cid in honest_sampled]),
                ids=tuple(honest_sampled))
            ctx = AttackContext(honest=honest_batch, n=m, f=f_round)
            if attack_name == "strike":
                sp = attack_params or attacks.StrikeParams()
                sel = attacks.strike_stage1_select(ctx)
                alpha = attacks.strike_bisection(sel, ctx.honest_mean, sp)
                step = np.sign(sel.mean_s - ctx.honest_mean) * sel.std_s
                vector = sel.mean_s + sp.nu * alpha * step
                diagnostics = {
                    "alpha": float(alpha),
                    "selected_count": len(sel.selected),
                    "skew_score": float(
                        analysis.skew_score(honest_batch, byzantine_count=f_round).score),
                }
            else:
                vector = attacks.apply_attack(attack_name, ctx, attack_params)
            for cid in byz_sampled:
                submissions[cid] = vector

    batch = GradientBatch(
        rows=np.stack([submissions[int(cid)] for cid in sampled]),
        ids=tuple(int(cid) for cid in sampled))
    aggregate = apply_aggregator(defense, batch, f_round,
                                 previous_aggregate=previous_aggregate,
                                 seed=derive_seed(fed.master_seed, _STREAM_AGG, t))
    new_params = params - aggregate
    record = RoundRecord(
        round_index=t,
        seed=int(fed.master_seed),
        attack=attack_name,
        defense=defense.label(),
        sampled_ids=tuple(int(i) for i in sampled),
        accuracy=evaluate_accuracy(train.model, new_params, test_data),
        aggregate=aggregate,
        diagnostics=diagnostics,
    )
    return new_params, record


def run_experiment(train_data: Dataset, test_data: Dataset, shards,
                   fed: FederationSpec, train: TrainSpec,
                   defense: AggregatorSpec, attack_name: str = "none",
                   attack_params=None) -> ExperimentResult:
    """Run all rounds; report every RoundRecord plus the best test accuracy."""
    del train_data  # shards already reference the training samples
    params = models.init_params(train.model,
                                seed=derive_seed(fed.master_seed, _STREAM_INIT))
    records = []
    previous = None
    for t in range(int(fed.rounds)):
        params, record = run_round(params, fed, train, defense, attack_name,
                                   attack_params, shards, t, test_data,
                                   previous_aggregate=previous)
        records.append(record)
        previous = record.aggregate
    best_round = max(range(len(records)),
                     key=lambda k: (records[k].accuracy, -k))
    return ExperimentResult(
        records=tuple(records),
        best_accuracy=records[best_round].accuracy,
        best_round=best_round,
        final_params=params,
    )


def build_shards(data: Dataset, assignment) -> dict:
    """Client id -> Dataset view, from per-client index lists."""
    return {cid: data.subset(idx) for cid, idx in enumerate(assignment)}
