"""Experiment configuration: a flat ``section.key = value`` document.

Grammar:

* one ``key = value`` assignment per line; keys are bare (``defense``) or
  single-dotted (``train.learning_rate``) lower_snake identifiers
* ``#`` starts a comment (outside quotes); blank lines are ignored
* values: integers, floats, ``true``/``false``, double-quoted strings, or
  ``[...]`` lists of those (no nesting)

Every key has a documented default, so the empty document is a valid
experiment.  Unknown keys are errors (with their line number), as are keys
that do not apply to the chosen attack/defense.  ``emit_config`` writes the
canonical form; parse(emit(parse(text))) == parse(text).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

from .aggregators import (AggregatorSpec, BucketingParams, CClipParams,
                          DncParams, RfaParams, WrapperSpec)
from .attacks import (ATTACK_NAMES, IpmParams, LieParams, MinOptParams,
                      StrikeParams)
from .errors import ConfigError, InvalidParameterError, SkewflError
from .models import ModelSpec
from .simulation import FederationSpec, TrainSpec

SWEEP_AXES = ("beta", "byz_ratio", "clients", "nu")

SWEEP_GRIDS = {
    "beta": (0.1, 0.2, 0.5, 0.7, 0.9, "IID"),
    "byz_ratio": (0.1, 0.2, 0.3, 0.4),
    "clients": (10, 30, 50, 70, 90),
    "nu": tuple(0.25 * i for i in range(1, 9)),
}

IID_BETA = 1e6

_KEY_RE = re.compile(r"^[a-z_][a-z0-9_]*(\.[a-z_][a-z0-9_]*)?$")
_INT_RE = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True)
class DatasetSettings:
    num_classes: int = 10
    dim: int = 32
    per_class: int = 100
    separation: float = 6.0
    seed: int | None = None

    def __post_init__(self):
        if int(self.num_classes) < 2:
            raise InvalidParameterError("dataset needs at least 2 classes")
        if int(self.dim) < 1 or int(self.per_class) < 1:
            raise InvalidParameterError("dataset dim and per_class must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSettings
    partition_beta: float
    partition_seed: int | None
    partition_iid: bool
    federation: FederationSpec  # master_seed is a placeholder; set per run
    train: TrainSpec
    defense: AggregatorSpec
    attack: str
    attack_params: object | None
    seeds: tuple
    output_dir: str
    sweep_axis: str | None = None
    sweep_values: tuple | None = None


@dataclass(frozen=True)
class SweepSpec:
    base: ExperimentConfig
    axis: str
    values: tuple

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise InvalidParameterError(
                f"unknown sweep axis {self.axis!r}; expected one of {SWEEP_AXES}")
        if not self.values:
            raise InvalidParameterError("sweep needs at least one axis value")


# ---------------------------------------------------------------------------
# lexical layer


def _parse_atom(text: str, line_no: int):
    text = text.strip()
    if not text:
        raise ConfigError("empty value", line=line_no)
    if text.startswith('"'):
        if len(text) < 2 or not text.endswith('"') or '"' in text[1:-1]:
            raise ConfigError(f"malformed string {text!r}", line=line_no)
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    if _INT_RE.match(text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse value {text!r}", line=line_no) from None


def _strip_comment(line: str) -> str:
    out = []
    in_string = False
    for ch in line:
        if ch == '"':
            in_string = not in_string
        elif ch == "#" and not in_string:
            break
        out.append(ch)
    return "".join(out)


def _scan(text: str) -> dict:
    """{key: (value, line_no)} with duplicate and syntax checking."""
    entries = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}",
                              line=line_no)
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY_RE.match(key):
            raise ConfigError(f"bad key {key!r}", line=line_no)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (first on line "
                              f"{entries[key][1]})", line=line_no)
        value = value.strip()
        if value.startswith("["):
            if not value.endswith("]"):
                raise ConfigError("unterminated list", line=line_no)
            body = value[1:-1].strip()
            items = ([] if not body
                     else [_parse_atom(p, line_no) for p in body.split(",")])
            entries[key] = (items, line_no)
        else:
            entries[key] = (_parse_atom(value, line_no), line_no)
    return entries


class _KeyBag:
    """Typed, consumption-tracked access to scanned entries."""

    def __init__(self, entries: dict):
        self.entries = entries
        self.used = set()

    def _take(self, key: str, kind, kind_name: str, default):
        if key not in self.entries:
            return default
        self.used.add(key)
        value, line_no = self.entries[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or isinstance(value, bool) != (kind is bool):
            raise ConfigError(f"{key} must be {kind_name}", line=line_no)
        return value

    def get_int(self, key, default=None):
        return self._take(key, int, "an integer", default)

    def get_float(self, key, default=None):
        return self._take(key, float, "a number", default)

    def get_bool(self, key, default=None):
        return self._take(key, bool, "true or false", default)

    def get_str(self, key, default=None):
        return self._take(key, str, "a quoted string", default)

    def get_list(self, key, default=None, item_kind=None, kind_name="values"):
        if key not in self.entries:
            return default
        self.used.add(key)
        value, line_no = self.entries[key]
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a bracketed list", line=line_no)
        if item_kind is not None:
            for item in value:
                ok = isinstance(item, item_kind) and not (
                    isinstance(item, bool) and item_kind is not bool)
                if not ok:
                    raise ConfigError(f"{key} must be a list of {kind_name}",
                                      line=line_no)
        return list(value)

    def line_of(self, key):
        return self.entries[key][1]

    def reject_unused(self, context: dict):
        for key, (_, line_no) in self.entries.items():
            if key in self.used:
                continue
            for prefix, hint in context.items():
                if key.startswith(prefix + "."):
                    raise ConfigError(f"{key} does not apply to {hint}",
                                      line=line_no)
            raise ConfigError(f"unknown key {key!r}", line=line_no)


# ---------------------------------------------------------------------------
# resolution


_DEFENSE_PARAM_KEYS = {
    "rfa": ("iterations", "smoothing"),
    "cclip": ("inner_iterations", "clip_radius", "warm_start"),
    "dnc": ("filter_fraction", "outer_iterations", "subsample_dim", "seed"),
}

_ATTACK_PARAM_KEYS = {
    "strike": ("nu", "bisect_tolerance", "bisect_max_iters"),
    "lie": ("z",),
    "ipm": ("epsilon",),
    "minmax": ("gamma_init", "tau"),
    "minsum": ("gamma_init", "tau"),
}


def _build_defense(bag: _KeyBag) -> AggregatorSpec:
    name = bag.get_str("defense", "mean")
    wrappers = bag.get_list("wrappers", [], item_kind=str, kind_name="strings")
    params = None
    if name == "rfa":
        params = RfaParams(
            iterations=bag.get_int("defense.iterations", 8),
            smoothing=bag.get_float("defense.smoothing", 1e-6))
    elif name == "cclip":
        params = CClipParams(
            inner_iterations=bag.get_int("defense.inner_iterations", 1),
            clip_radius=bag.get_float("defense.clip_radius", 10.0),
            warm_start=bag.get_bool("defense.warm_start", True))
    elif name == "dnc":
        params = DncParams(
            filter_fraction=bag.get_float("defense.filter_fraction", 1.0),
            outer_iterations=bag.get_int("defense.outer_iterations", 1),
            subsample_dim=bag.get_int("defense.subsample_dim", 1000),
            seed=bag.get_int("defense.seed", 0))
    wrapper_specs = []
    for kind in wrappers:
        if kind == "bucketing":
            wrapper_specs.append(WrapperSpec(
                kind="bucketing",
                bucketing=BucketingParams(
                    bucket_size=bag.get_int("defense.bucket_size", 2),
                    seed=bag.get_int("defense.bucket_seed", 0))))
        else:
            wrapper_specs.append(WrapperSpec(kind=kind))
    return AggregatorSpec(name=name, params=params, wrappers=tuple(wrapper_specs))


def _build_attack(bag: _KeyBag):
    name = bag.get_str("attack", "none")
    if name not in ATTACK_NAMES:
        line = bag.line_of("attack") if "attack" in bag.entries else None
        raise ConfigError(
            f"unknown attack {name!r}; expected one of {ATTACK_NAMES}", line=line)
    params = None
    if name == "strike":
        params = StrikeParams(
            nu=bag.get_float("attack.nu", 1.0),
            bisect_tolerance=bag.get_float("attack.bisect_tolerance", 1e-2),
            bisect_max_iters=bag.get_int("attack.bisect_max_iters", 64))
    elif name == "lie":
        params = LieParams(z=bag.get_float("attack.z", 1.5))
    elif name == "ipm":
        params = IpmParams(epsilon=bag.get_float("attack.epsilon", 0.1))
    elif name in ("minmax", "minsum"):
        params = MinOptParams(gamma_init=bag.get_float("attack.gamma_init", 10.0),
                              tau=bag.get_float("attack.tau", 1e-5))
    return name, params


def parse_config(text: str) -> ExperimentConfig:
    """Resolve a configuration document to a fully-defaulted ExperimentConfig."""
    bag = _KeyBag(_scan(text))
    try:
        dataset = DatasetSettings(
            num_classes=bag.get_int("dataset.classes", 10),
            dim=bag.get_int("dataset.dim", 32),
            per_class=bag.get_int("dataset.per_class", 100),
            separation=bag.get_float("dataset.separation", 6.0),
            seed=bag.get_int("dataset.seed", None),
        )
        beta = bag.get_float("partition.beta", 0.5)
        if not beta > 0.0:
            raise ConfigError("partition.beta must be > 0",
                              line=bag.line_of("partition.beta"))
        partition_iid = bag.get_bool("partition.iid", False)
        partition_seed = bag.get_int("partition.seed", None)

        n = bag.get_int("federation.n", 20)
        f = bag.get_int("federation.f", None)
        if f is None:
            f = math.floor(0.2 * n)
        byz_ids = bag.get_list("federation.byzantine_ids", None,
                               item_kind=int, kind_name="integers")
        fed = FederationSpec(
            n=n, f=f,
            sampled_per_round=bag.get_int("federation.sampled_per_round", n),
            rounds=bag.get_int("federation.rounds", 50),
            master_seed=0,
            byzantine_ids=tuple(byz_ids) if byz_ids is not None else None,
        )

        kind = bag.get_str("train.model", "softmax_linear")
        hidden = bag.get_int("train.hidden", 32) if kind == "mlp_one_hidden" else 0
        model = ModelSpec(kind=kind, num_classes=dataset.num_classes,
                          features=dataset.dim, hidden=hidden)
        train = TrainSpec(
            model=model,
            learning_rate=bag.get_float("train.learning_rate", 0.1),
            local_epochs=bag.get_int("train.local_epochs", 1),
            batch_size=bag.get_int("train.batch_size", 128),
            momentum=bag.get_float("train.momentum", 0.0),
            weight_decay=bag.get_float("train.weight_decay", 0.0001),
            clip_norm=bag.get_float("train.clip_norm", 2.0),
        )

        defense = _build_defense(bag)
        attack, attack_params = _build_attack(bag)

        seeds = bag.get_list("seeds", [0], item_kind=int, kind_name="integers")
        if not seeds:
            raise ConfigError("seeds must be nonempty", line=bag.line_of("seeds"))
        output_dir = bag.get_str("output_dir", "out")

        sweep_axis = bag.get_str("sweep.axis", None)
        sweep_values = None
        if sweep_axis is not None:
            if sweep_axis not in SWEEP_AXES:
                raise ConfigError(
                    f"unknown sweep axis {sweep_axis!r}; expected one of {SWEEP_AXES}",
                    line=bag.line_of("sweep.axis"))
            override = bag.get_list("sweep.values", None)
            sweep_values = (tuple(override) if override is not None
                            else SWEEP_GRIDS[sweep_axis])
            _validate_sweep_values(sweep_axis, sweep_values,
                                   bag.line_of("sweep.values")
                                   if "sweep.values" in bag.entries else None)
        elif "sweep.values" in bag.entries:
            raise ConfigError("sweep.values requires sweep.axis",
                              line=bag.line_of("sweep.values"))
    except ConfigError:
        raise
    except SkewflError as exc:
        raise ConfigError(str(exc)) from exc

    bag.reject_unused({
        "attack": f"attack {attack!r}",
        "defense": f"defense {bag.entries.get('defense', ('mean', 0))[0]!r} "
                   f"with wrappers {[w.kind for w in defense.wrappers]}",
    })
    return ExperimentConfig(
        dataset=dataset,
        partition_beta=beta,
        partition_seed=partition_seed,
        partition_iid=partition_iid,
        federation=fed,
        train=train,
        defense=defense,
        attack=attack,
        attack_params=attack_params,
        seeds=tuple(seeds),
        output_dir=output_dir,
        sweep_axis=sweep_axis,
        sweep_values=sweep_values,
    )


def _validate_sweep_values(axis: str, values, line_no):
    for v in values:
        if axis == "beta":
            ok = v == "IID" or (isinstance(v, (int, float))
                                and not isinstance(v, bool) and v > 0)
        elif axis == "clients":
            ok = isinstance(v, int) and not isinstance(v, bool) and v >= 1
        else:
            ok = isinstance(v, (int, float)) and not isinstance(v, bool) and v >= 0
        if not ok:
            raise ConfigError(f"bad {axis} sweep value {v!r}", line=line_no)


# ---------------------------------------------------------------------------
# emission


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return f'"{value}"'
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise InvalidParameterError(f"cannot format config value {value!r}")


def emit_config(config: ExperimentConfig) -> str:
    """Canonical document for a resolved config (round-trips via parse_config)."""
    lines = []

    def put(key, value):
        if value is None:
            return
        lines.append(f"{key} = {_format_value(value)}")

    ds = config.dataset
    put("dataset.classes", ds.num_classes)
    put("dataset.dim", ds.dim)
    put("dataset.per_class", ds.per_class)
    put("dataset.separation", float(ds.separation))
    put("dataset.seed", ds.seed)
    put("partition.beta", float(config.partition_beta))
    put("partition.iid", config.partition_iid)
    put("partition.seed", config.partition_seed)
    fed = config.federation
    put("federation.n", fed.n)
    put("federation.f", fed.f)
    put("federation.byzantine_ids", list(fed.byzantine_ids))
    put("federation.sampled_per_round", fed.sampled_per_round)
    put("federation.rounds", fed.rounds)
    tr = config.train
    put("train.model", tr.model.kind)
    if tr.model.kind == "mlp_one_hidden":
        put("train.hidden", tr.model.hidden)
    put("train.learning_rate", float(tr.learning_rate))
    put("train.local_epochs", tr.local_epochs)
    put("train.batch_size", tr.batch_size)
    put("train.momentum", float(tr.momentum))
    put("train.weight_decay", float(tr.weight_decay))
    put("train.clip_norm", float(tr.clip_norm))
    d = config.defense
    put("defense", d.name)
    if d.wrappers:
        put("wrappers", [w.kind for w in d.wrappers])
        for w in d.wrappers:
            if w.kind == "bucketing":
                put("defense.bucket_size", w.bucketing.bucket_size)
                put("defense.bucket_seed", w.bucketing.seed)
    if d.name == "rfa":
        put("defense.iterations", d.params.iterations)
        put("defense.smoothing", float(d.params.smoothing))
    elif d.name == "cclip":
        put("defense.inner_iterations", d.params.inner_iterations)
        put("defense.clip_radius", float(d.params.clip_radius))
        put("defense.warm_start", d.params.warm_start)
    elif d.name == "dnc":
        put("defense.filter_fraction", float(d.params.filter_fraction))
        put("defense.outer_iterations", d.params.outer_iterations)
        put("defense.subsample_dim", d.params.subsample_dim)
        put("defense.seed", d.params.seed)
    put("attack", config.attack)
    ap = config.attack_params
    if config.attack == "strike":
        put("attack.nu", float(ap.nu))
        put("attack.bisect_tolerance", float(ap.bisect_tolerance))
        put("attack.bisect_max_iters", ap.bisect_max_iters)
    elif config.attack == "lie":
        put("attack.z", float(ap.z))
    elif config.attack == "ipm":
        put("attack.epsilon", float(ap.epsilon))
    elif config.attack in ("minmax", "minsum"):
        put("attack.gamma_init", float(ap.gamma_init))
        put("attack.tau", float(ap.tau))
    put("seeds", list(config.seeds))
    put("output_dir", config.output_dir)
    if config.sweep_axis is not None:
        put("sweep.axis", config.sweep_axis)
        put("sweep.values", list(config.sweep_values))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# sweep derivation


def sweep_spec(config: ExperimentConfig) -> SweepSpec:
    if config.sweep_axis is None:
        raise InvalidParameterError("config has no sweep.axis")
    return SweepSpec(base=config, axis=config.sweep_axis,
                     values=tuple(config.sweep_values))


def cell_config(base: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """The base config with one sweep-axis value applied."""
    if axis == "beta":
        if value == "IID":
            return replace(base, partition_beta=IID_BETA, partition_iid=True,
                           sweep_axis=None, sweep_values=None)
        return replace(base, partition_beta=float(value), partition_iid=False,
                       sweep_axis=None, sweep_values=None)
    if axis == "byz_ratio":
        fed = base.federation
        f = math.floor(float(value) * fed.n)
        new_fed = replace(fed, f=f, byzantine_ids=None)
        return replace(base, federation=new_fed, sweep_axis=None, sweep_values=None)
    if axis == "clients":
        fed = base.federation
        n = int(value)
        ratio = fed.f / fed.n
        f = math.floor(ratio * n)
        m = n if fed.sampled_per_round == fed.n else min(fed.sampled_per_round, n)
        new_fed = replace(fed, n=n, f=f, sampled_per_round=m, byzantine_ids=None)
        return replace(base, federation=new_fed, sweep_axis=None, sweep_values=None)
    if axis == "nu":
        if base.attack != "strike":
            raise InvalidParameterError(
                f"nu sweep requires attack \"strike\", got {base.attack!r}")
        params = replace(base.attack_params, nu=float(value))
        return replace(base, attack_params=params, sweep_axis=None,
                       sweep_values=None)
    raise InvalidParameterError(f"unknown sweep axis {axis!r}")
