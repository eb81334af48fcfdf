"""Experiment orchestration and file emission.

Output layout for a single run::

    <out>/config.resolved.txt
    <out>/summary.csv                 axis,attack,defense,acc_mean,acc_std,seed_count
    <out>/seed_<s>/rounds.jsonl       one JSON object per round, stable key order
    <out>/seed_<s>/acc_vs_round.csv

A sweep adds ``acc_vs_axis.csv``, per-cell directories ``cell_<axis>_<value>/``
with the same per-seed files, ``best_nu.json`` for nu sweeps, and per-cell
``errors.txt`` when individual seeds fail (failures never abort the sweep).

Everything is deterministic given the config text: reruns produce
byte-identical files.
"""

from __future__ import annotations

import concurrent.futures
import json
import math
import os
from dataclasses import replace

import numpy as np

from . import datasets
from .analysis import LleParams, lle_embed, skew_score, summarize_runs
from .config import (SWEEP_AXES, ExperimentConfig, cell_config, emit_config,
                     sweep_spec)
from .datasets import PartitionSpec, dirichlet_partition, iid_partition
from .errors import SkewflError
from .simulation import (ExperimentResult, build_shards, derive_seed,
                         run_experiment)
from .stats import GradientBatch

_STREAM_DATA = 5
_STREAM_PARTITION = 6
_STREAM_TEST_NOISE = 7

SUMMARY_HEADER = "axis,attack,defense,acc_mean,acc_std,seed_count"


# ---------------------------------------------------------------------------
# run assembly


def make_datasets(config: ExperimentConfig, master_seed: int):
    """(train, test) blobs; test shares the class means, fresh noise."""
    ds = config.dataset
    dseed = ds.seed if ds.seed is not None else derive_seed(master_seed, _STREAM_DATA)
    train = datasets.generate_synthetic_dataset(
        ds.num_classes, ds.dim, ds.per_class, ds.separation, dseed)
    test = datasets.generate_synthetic_dataset(
        ds.num_classes, ds.dim, ds.per_class, ds.separation, dseed,
        noise_seed=derive_seed(dseed, _STREAM_TEST_NOISE))
    return train, test


def make_partition(config: ExperimentConfig, labels, master_seed: int):
    pseed = (config.partition_seed if config.partition_seed is not None
             else derive_seed(master_seed, _STREAM_PARTITION))
    n = config.federation.n
    if config.partition_iid:
        return iid_partition(labels, n, pseed)
    return dirichlet_partition(labels, n,
                               PartitionSpec(beta=config.partition_beta, seed=pseed))


def run_single_seed(config: ExperimentConfig, master_seed: int) -> ExperimentResult:
    train_data, test_data = make_datasets(config, master_seed)
    assignment = make_partition(config, train_data.labels, master_seed)
    shards = build_shards(train_data, assignment)
    fed = replace(config.federation, master_seed=int(master_seed))
    return run_experiment(train_data, test_data, shards, fed, config.train,
                          config.defense, config.attack, config.attack_params)


# ---------------------------------------------------------------------------
# writers


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise SkewflError(f"{path}: {exc}") from exc


def write_rounds_jsonl(records, path) -> None:
    _write_text(path, "".join(r.to_json() + "\n" for r in records))


def write_acc_vs_round(records, path) -> None:
    lines = ["round,accuracy"]
    lines += [f"{r.round_index},{repr(float(r.accuracy))}" for r in records]
    _write_text(path, "\n".join(lines) + "\n")


def format_summary_rows(rows) -> str:
    lines = [SUMMARY_HEADER]
    for axis, attack, defense, mean, std, count in rows:
        lines.append(f"{axis},{attack},{defense},{repr(float(mean))},"
                     f"{repr(float(std))},{int(count)}")
    return "\n".join(lines) + "\n"


def _emit_seed_outputs(out_dir: str, seed: int, result: ExperimentResult) -> None:
    seed_dir = os.path.join(out_dir, f"seed_{seed}")
    os.makedirs(seed_dir, exist_ok=True)
    write_rounds_jsonl(result.records, os.path.join(seed_dir, "rounds.jsonl"))
    write_acc_vs_round(result.records, os.path.join(seed_dir, "acc_vs_round.csv"))


# ---------------------------------------------------------------------------
# the `run` command


def run_command(config: ExperimentConfig, out_dir: str | None = None,
                jobs: int = 1) -> list:
    """Run every seed, emit per-seed files plus the one-row summary.

    Returns the summary rows (also written to ``summary.csv``).
    """
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    _write_text(os.path.join(out_dir, "config.resolved.txt"), emit_config(config))
    seeds = list(config.seeds)
    if jobs > 1 and len(seeds) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_seed_worker,
                                    [(config, s) for s in seeds]))
    else:
        results = [run_single_seed(config, s) for s in seeds]
    for seed, result in zip(seeds, results):
        _emit_seed_outputs(out_dir, seed, result)
    mean, std = summarize_runs([r.best_accuracy for r in results])
    rows = [("-", config.attack, config.defense.label(), mean, std, len(seeds))]
    _write_text(os.path.join(out_dir, "summary.csv"), format_summary_rows(rows))
    return rows


def _seed_worker(item):
    config, seed = item
    return run_single_seed(config, seed)


# ---------------------------------------------------------------------------
# the `sweep` command


def _cell_dir_name(axis: str, value) -> str:
    return f"cell_{axis}_{value}"


def _run_cell(item):
    """One sweep cell: all seeds, own output directory, failures recorded.

    Returns (axis_label, attack, defense, mean, std, ok_count, cell_mean_map).
    """
    base, axis, value, out_dir = item
    cell_out = os.path.join(out_dir, _cell_dir_name(axis, value))
    os.makedirs(cell_out, exist_ok=True)
    errors = []
    best = []
    try:
        cfg = cell_config(base, axis, value)
    except SkewflError as exc:
        cfg = None
        errors.append(f"cell: {exc}")
    if cfg is not None:
        for seed in cfg.seeds:
            try:
                result = run_single_seed(cfg, seed)
            except SkewflError as exc:
                errors.append(f"seed {seed}: {exc}")
                continue
            _emit_seed_outputs(cell_out, seed, result)
            best.append(result.best_accuracy)
    if errors:
        _write_text(os.path.join(cell_out, "errors.txt"),
                    "\n".join(errors) + "\n")
    if best:
        mean, std = summarize_runs(best)
    else:
        mean, std = math.nan, math.nan
    return (str(value), base.attack, base.defense.label(), mean, std, len(best))


def sweep_command(config: ExperimentConfig, out_dir: str | None = None,
                  jobs: int = 1) -> list:
    """Run the configured axis sweep; one summary row per axis value."""
    spec = sweep_spec(config)
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    _write_text(os.path.join(out_dir, "config.resolved.txt"), emit_config(config))
    items = [(spec.base, spec.axis, v, out_dir) for v in spec.values]
    if jobs > 1 and len(items) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, items))
    else:
        rows = [_run_cell(item) for item in items]
    _write_text(os.path.join(out_dir, "summary.csv"), format_summary_rows(rows))
    axis_lines = ["axis,acc_mean,acc_std"]
    axis_lines += [f"{r[0]},{repr(float(r[3]))},{repr(float(r[4]))}" for r in rows]
    _write_text(os.path.join(out_dir, "acc_vs_axis.csv"),
                "\n".join(axis_lines) + "\n")
    if spec.axis == "nu":
        scored = [(r[3], i) for i, r in enumerate(rows)
                  if not math.isnan(r[3])]
        if scored:
            _, best_idx = min(scored)
            payload = {"best_nu": float(spec.values[best_idx]),
                       "acc_mean": float(rows[best_idx][3])}
            _write_text(os.path.join(out_dir, "best_nu.json"),
                        json.dumps(payload) + "\n")
    return rows


# ---------------------------------------------------------------------------
# the `report` command


def report_command(out_dir: str) -> list:
    """Rebuild summary.csv (and acc_vs_round.csv files) from rounds.jsonl."""
    groups = {}
    for root, _dirs, files in sorted(os.walk(out_dir)):
        if "rounds.jsonl" not in files:
            continue
        path = os.path.join(root, "rounds.jsonl")
        with open(path) as fh:
            recs = [json.loads(line) for line in fh if line.strip()]
        if not recs:
            continue
        lines = ["round,accuracy"]
        lines += [f"{r['round']},{repr(float(r['accuracy']))}" for r in recs]
        _write_text(os.path.join(root, "acc_vs_round.csv"),
                    "\n".join(lines) + "\n")
        parent = os.path.dirname(os.path.relpath(path, out_dir))
        group = os.path.dirname(parent) if parent else ""
        label = "-"
        base = os.path.basename(group)
        if base.startswith("cell_"):
            rest = base[len("cell_"):]
            for axis in SWEEP_AXES:
                if rest.startswith(axis + "_"):
                    label = rest[len(axis) + 1:]
                    break
            else:
                label = rest
        key = (group, label, recs[0]["attack"], recs[0]["defense"])
        groups.setdefault(key, []).append(max(r["accuracy"] for r in recs))
    rows = []
    for (group, label, attack, defense), best in sorted(groups.items()):
        mean, std = summarize_runs(best)
        rows.append((label, attack, defense, mean, std, len(best)))
    _write_text(os.path.join(out_dir, "summary.csv"), format_summary_rows(rows))
    return rows


# ---------------------------------------------------------------------------
# the `partition` and `analyze` commands


def partition_command(config: ExperimentConfig, out_dir: str | None = None) -> str:
    """Emit partition.csv for the first configured seed; returns the path."""
    out_dir = out_dir or config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    master = int(config.seeds[0])
    train_data, _ = make_datasets(config, master)
    assignment = make_partition(config, train_data.labels, master)
    path = os.path.join(out_dir, "partition.csv")
    datasets.save_partition_csv(path, train_data.labels, assignment)
    return path


def analyze_command(input_csv: str, out_dir: str, neighbors: int | None = None,
                    byzantine: int = 0) -> dict:
    """LLE + skew analysis of a gradient CSV dump.

    Writes embedding.csv (client ids plus one id=-1 row for the honest mean,
    embedded alongside the inputs) and skew.json; returns the skew payload.
    """
    os.makedirs(out_dir, exist_ok=True)
    batch = GradientBatch.from_csv(input_csv)
    report = skew_score(batch, byzantine_count=byzantine)
    with_mean = GradientBatch.from_rows(
        np.vstack([batch.rows, batch.mean()]),
        ids=list(batch.ids) + [-1])
    params = LleParams(neighbors=neighbors)
    coords = lle_embed(with_mean, params)
    lines = ["client_id,x,y"]
    for cid, (x, y) in zip(with_mean.ids, coords):
        lines.append(f"{cid},{repr(float(x))},{repr(float(y))}")
    _write_text(os.path.join(out_dir, "embedding.csv"), "\n".join(lines) + "\n")
    sel = report.selection
    dist = {str(cid): float(np.linalg.norm(batch.row_for(cid) - sel.mean_s))
            for cid in batch.ids}
    payload = {
        "score": float(report.score),
        "selected": [int(i) for i in sel.selected],
        "mean_s": [float(v) for v in sel.mean_s],
        "distances": dist,
    }
    _write_text(os.path.join(out_dir, "skew.json"),
                json.dumps(payload) + "\n")
    return payload
