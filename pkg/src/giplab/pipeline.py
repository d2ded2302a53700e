"""End-to-end runs: pretrain, probe, and the (p1, p2) sweep.

Each run writes its artifacts under an output directory plus a JSON
manifest describing exactly what produced them. Metrics and sweep rows
contain no timestamps or absolute paths, so identical inputs reproduce
identical bytes; wall-clock time lives only in the manifest.
"""

from __future__ import annotations

import dataclasses
import json
import multiprocessing
import os
import time
from dataclasses import dataclass

from .config import TrainConfig, config_echo_line
from .data import dataset_fingerprint, load_dataset
from .errors import CompatibilityError, ConfigError, GiplabError
from .evaluation import (
    EmbeddingTable,
    cmsp,
    embed_dataset,
    linear_probe,
    write_embedding_csv,
)
from .graphs import Graph
from .training import TrainResult, load_checkpoint, pretrain, save_checkpoint

THREADS_ENV = "GIPLAB_THREADS"

CHECKPOINT_FILE = "checkpoint.ckpt"
TRACE_FILE = "loss_trace.csv"
METRICS_FILE = "metrics.csv"
EMBEDDINGS_FILE = "embeddings.csv"
SWEEP_FILE = "sweep.csv"

METRICS_HEADER = (
    "checkpoint,dataset,folds,seed,accuracy_mean,accuracy_std,cmsp,cmsp_degenerate,manifest"
)
SWEEP_HEADER = "p1,p2,seed,accuracy,cmsp,status"


def _fmt(x: float) -> str:
    return "%.17g" % x


@dataclass(frozen=True)
class RunManifest:
    """What produced a set of artifacts: inputs, content hash, timing."""

    command: str
    config_echo: str
    seed: int
    dataset: str
    dataset_fingerprint: str
    artifacts: dict
    wall_clock_seconds: float


def write_manifest(manifest: RunManifest, path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(eq=False)
class PretrainOutcome:
    result: TrainResult
    checkpoint_path: str
    trace_path: str
    manifest: RunManifest


def _write_trace(trace, path: str) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("step,epoch,loss\n")
        for step, epoch, value in trace:
            fh.write(f"{step},{epoch},{_fmt(value)}\n")


def run_pretrain(config: TrainConfig, out_dir: str) -> PretrainOutcome:
    """Train per config, then write checkpoint, loss trace, and manifest."""
    started = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    dataset = load_dataset(config.dataset)
    result = pretrain(dataset, config)
    resolved = config.with_updates(input_dim=result.encoder_config.input_dim)

    ckpt_path = os.path.join(out_dir, CHECKPOINT_FILE)
    trace_path = os.path.join(out_dir, TRACE_FILE)
    save_checkpoint(result.params, resolved, ckpt_path, result.objective_state)
    _write_trace(result.trace, trace_path)

    manifest = RunManifest(
        command="pretrain",
        config_echo=config_echo_line(resolved),
        seed=config.seed,
        dataset=config.dataset,
        dataset_fingerprint=dataset_fingerprint(dataset),
        artifacts={"checkpoint": CHECKPOINT_FILE, "loss_trace": TRACE_FILE},
        wall_clock_seconds=time.perf_counter() - started,
    )
    write_manifest(manifest, os.path.join(out_dir, "manifest_pretrain.json"))
    return PretrainOutcome(result, ckpt_path, trace_path, manifest)


@dataclass(frozen=True)
class MetricsRecord:
    """One probe measurement; serialized as a metrics.csv row."""

    checkpoint: str
    dataset: str
    folds: int
    seed: int
    accuracy_mean: float
    accuracy_std: float
    cmsp: float
    cmsp_degenerate: bool
    manifest: str

    def as_row(self) -> str:
        return ",".join(
            [
                self.checkpoint,
                self.dataset,
                str(self.folds),
                str(self.seed),
                _fmt(self.accuracy_mean),
                _fmt(self.accuracy_std),
                _fmt(self.cmsp),
                "true" if self.cmsp_degenerate else "false",
                self.manifest,
            ]
        )


def _append_metrics_row(record: MetricsRecord, path: str) -> None:
    fresh = not os.path.exists(path)
    with open(path, "a", newline="\n", encoding="utf-8") as fh:
        if fresh:
            fh.write(METRICS_HEADER + "\n")
        fh.write(record.as_row() + "\n")


def run_probe(
    checkpoint_path: str,
    out_dir: str,
    dataset: str | None = None,
    folds: int = 10,
    seed: int = 0,
) -> tuple[MetricsRecord, EmbeddingTable]:
    """Probe a checkpoint: embeddings CSV plus one appended metrics row.

    The dataset defaults to the one the checkpoint was trained on. Paths
    inside the row are relative to the output directory.
    """
    started = time.perf_counter()
    ckpt = load_checkpoint(checkpoint_path)
    dataset_name = dataset if dataset is not None else ckpt.config.dataset
    graphs = load_dataset(dataset_name)
    enc_cfg = ckpt.config.encoder_config()
    if graphs[0].feature_dim != enc_cfg.input_dim:
        raise CompatibilityError(
            f"dataset {dataset_name} has feature dim {graphs[0].feature_dim}, "
            f"checkpoint expects {enc_cfg.input_dim}"
        )
    os.makedirs(out_dir, exist_ok=True)

    table = embed_dataset(graphs, ckpt.params, enc_cfg)
    sep = cmsp(table)
    probe = linear_probe(table, k_folds=folds, seed=seed)
    write_embedding_csv(table, os.path.join(out_dir, EMBEDDINGS_FILE))

    record = MetricsRecord(
        checkpoint=os.path.relpath(checkpoint_path, out_dir),
        dataset=dataset_name,
        folds=folds,
        seed=seed,
        accuracy_mean=probe.mean_accuracy,
        accuracy_std=probe.std_accuracy,
        cmsp=sep.value,
        cmsp_degenerate=sep.degenerate,
        manifest="manifest_probe.json",
    )
    _append_metrics_row(record, os.path.join(out_dir, METRICS_FILE))
    manifest = RunManifest(
        command="probe",
        config_echo=config_echo_line(ckpt.config),
        seed=seed,
        dataset=dataset_name,
        dataset_fingerprint=dataset_fingerprint(graphs),
        artifacts={"metrics": METRICS_FILE, "embeddings": EMBEDDINGS_FILE},
        wall_clock_seconds=time.perf_counter() - started,
    )
    write_manifest(manifest, os.path.join(out_dir, "manifest_probe.json"))
    return record, table


@dataclass(frozen=True)
class SweepCell:
    p1: float
    p2: float
    seed: int
    accuracy: float
    cmsp: float
    status: str

    def as_row(self) -> str:
        return ",".join(
            [
                _fmt(self.p1),
                _fmt(self.p2),
                str(self.seed),
                _fmt(self.accuracy),
                _fmt(self.cmsp),
                self.status,
            ]
        )


def _cell_config(base: TrainConfig, p1: float, p2: float, seed: int) -> TrainConfig:
    return base.with_updates(
        seed=seed,
        view1=dataclasses.replace(base.view1, p=p1),
        view2=dataclasses.replace(base.view2, p=p2),
    )


def run_cell(
    base: TrainConfig,
    p1: float,
    p2: float,
    seed: int,
    folds: int = 10,
    dataset: list[Graph] | None = None,
) -> SweepCell:
    """One grid point end to end, in memory; failures become a status."""
    try:
        cfg = _cell_config(base, p1, p2, seed)
        graphs = dataset if dataset is not None else load_dataset(cfg.dataset)
        result = pretrain(graphs, cfg)
        table = embed_dataset(graphs, result.params, result.encoder_config)
        probe = linear_probe(table, k_folds=folds, seed=seed)
        sep = cmsp(table)
        return SweepCell(p1, p2, seed, probe.mean_accuracy, sep.value, "ok")
    except GiplabError as exc:
        note = f"{type(exc).__name__}: {exc}".replace(",", ";").replace("\n", " ")
        return SweepCell(p1, p2, seed, float("nan"), float("nan"), note)


def _worker(args) -> SweepCell:
    base, p1, p2, seed, folds = args
    return run_cell(base, p1, p2, seed, folds)


def sweep_parallelism(num_cells: int) -> int:
    """Worker count: min(cells, cpu count), capped by the environment."""
    workers = min(num_cells, os.cpu_count() or 1)
    raw = os.environ.get(THREADS_ENV)
    if raw is not None:
        try:
            cap = int(raw)
        except ValueError:
            cap = 0
        if cap < 1:
            raise ConfigError(
                f"{THREADS_ENV} must be a positive integer, got {raw!r}"
            )
        workers = min(workers, cap)
    return max(1, workers)


def run_sweep(
    base: TrainConfig,
    p_values: list[float],
    seeds: list[int],
    folds: int = 10,
    out_dir: str = ".",
) -> list[SweepCell]:
    """Square (p1, p2) grid x seeds; writes sweep.csv in grid order.

    Each cell is a pure function of (base config, p1, p2, seed), so cells
    may run in parallel; results are written in deterministic order either
    way. A failed cell records its error and the sweep continues.
    """
    if not p_values or not seeds:
        raise ConfigError("sweep needs at least one p value and one seed")
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"grid value must be in [0, 1], got {p}")
    started = time.perf_counter()
    os.makedirs(out_dir, exist_ok=True)
    jobs = [
        (base, p1, p2, seed, folds)
        for p1 in p_values
        for p2 in p_values
        for seed in seeds
    ]
    workers = sweep_parallelism(len(jobs))
    if workers == 1:
        cells = [_worker(j) for j in jobs]
    else:
        with multiprocessing.Pool(workers) as pool:
            cells = list(pool.imap(_worker, jobs))
    sweep_path = os.path.join(out_dir, SWEEP_FILE)
    with open(sweep_path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(SWEEP_HEADER + "\n")
        for cell in cells:
            fh.write(cell.as_row() + "\n")
    dataset = load_dataset(base.dataset)
    manifest = RunManifest(
        command="sweep",
        config_echo=config_echo_line(base),
        seed=seeds[0],
        dataset=base.dataset,
        dataset_fingerprint=dataset_fingerprint(dataset),
        artifacts={"sweep": SWEEP_FILE},
        wall_clock_seconds=time.perf_counter() - started,
    )
    write_manifest(manifest, os.path.join(out_dir, "manifest_sweep.json"))
    return cells
