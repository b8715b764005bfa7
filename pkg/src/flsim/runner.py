"""Experiment orchestration: wire config, data, protocol, and outputs."""

from __future__ import annotations

import os
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, to_json
from .errors import DataError
from . import data, metrics, nn, protocol, rng
from .attacks import make_plan



def resolve_data_dir(cfg: ExperimentConfig) -> Path:
    if cfg.data_dir:
        return Path(cfg.data_dir)
    env = os.environ.get("FLSIM_DATA_DIR")
    return Path(env) if env else Path("data")


def load_datasets(cfg: ExperimentConfig) -> tuple[data.Dataset, data.Dataset]:
    """(train, test) per the config, with seeded subsampling when limited."""
    if cfg.dataset == "synth":
        s = cfg.synth
        train = data.synth_dataset(s.num_classes, s.per_class, s.dim, s.separation,
                                   rng.derive_key(cfg.seed, "synth-train"),
                                   name="synth-train")
        test = data.synth_dataset(s.num_classes, s.test_per_class, s.dim, s.separation,
                                  rng.derive_key(cfg.seed, "synth-test"),
                                  name="synth-test")
    else:
        root = resolve_data_dir(cfg)
        train = data.load_mnist(root, "train")
        test = data.load_mnist(root, "test")
    if cfg.train_limit is not None:
        train = data.subsample(train, cfg.train_limit, cfg.seed, "train")
    if cfg.test_limit is not None:
        test = data.subsample(test, cfg.test_limit, cfg.seed, "test")
    return train, test


def build_partitions(cfg: ExperimentConfig, train: data.Dataset) -> list[data.Partition]:
    if cfg.partition == "iid":
        return data.partition_iid(train, cfg.clients, cfg.seed)
    return data.partition_label_shards(train, cfg.clients,
                                       cfg.shards_per_client, cfg.seed)


def build_model_spec(cfg: ExperimentConfig, train: data.Dataset) -> nn.ModelSpec:
    num_classes = 10 if cfg.dataset == "mnist" else cfg.synth.num_classes
    sample_shape = tuple(train.images.shape[1:])
    if cfg.model == "cnn":
        if sample_shape != (28, 28):
            raise DataError(
                f"cnn model expects 28x28 images, dataset has {sample_shape}")
        return nn.cnn_spec((1, 28, 28), num_classes)
    if len(sample_shape) == 2:
        input_shape = (1,) + sample_shape
    else:
        input_shape = (1, 1, int(np.prod(sample_shape)))
    return nn.mlp_spec(input_shape, hidden=(200,), num_classes=num_classes)


def simulate(cfg: ExperimentConfig, *, threads: int | None = None,
             no_timing: bool = False, payload_hook=None, progress=None):
    """Run the configured experiment in memory.

    Returns (records, server, clients).  `progress(record)` is called
    after every round when given.
    """
    train, test = load_datasets(cfg)
    partitions = build_partitions(cfg, train)
    spec = build_model_spec(cfg, train)
    server, clients = protocol.initialize(cfg, spec, partitions)
    hyper = protocol.Hyper.from_config(cfg)
    plan = make_plan(cfg.attack.kind, cfg.attack.fraction, cfg.attack.sigma,
                     cfg.clients, cfg.seed)
    sizes = [len(p) for p in partitions]
    evaluator = metrics.make_evaluator(spec, test, sizes)
    records = []
    for _ in range(cfg.rounds):
        server, record = protocol.run_round(
            server, clients, hyper, plan, cfg.seed,
            evaluator=evaluator, payload_hook=payload_hook,
            threads=threads, timing=not no_timing)
        records.append(record)
        if progress is not None:
            progress(record)
    return records, server, clients


def default_threads() -> int:
    return os.cpu_count() or 1


def run_experiment(cfg: ExperimentConfig, *, threads: int | None = None,
                   no_timing: bool = False, hist: bool = False,
                   log=None) -> list[metrics.RoundRecord]:
    """Run and write metrics.csv, config.json, and optional histograms.

    On failure any partially written outputs are removed (and the output
    directory too, if this call created it).
    """
    if log is None:
        def log(msg):
            print(msg, file=sys.stderr)
    out_dir = Path(cfg.out_dir)
    created_dir = not out_dir.exists()
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    payload_hook = None
    if hist:
        def payload_hook(round_index, payloads):
            stats = metrics.payload_norm_stats(list(payloads.values()))
            path = out_dir / f"hist_round_{round_index}.csv"
            with open(path, "wb") as fh:
                metrics.emit_histogram_csv(stats, fh)
            written.append(path)

    try:
        config_path = out_dir / "config.json"
        config_path.write_text(to_json(cfg))
        written.append(config_path)

        def progress(record):
            log(f"round {record.round}: accuracy={record.test_accuracy:.4f} "
                f"loss={record.test_loss:.4f}")

        records, _, _ = simulate(cfg, threads=threads, no_timing=no_timing,
                                 payload_hook=payload_hook, progress=progress)
        metrics_path = out_dir / "metrics.csv"
        with open(metrics_path, "wb") as fh:
            metrics.emit_csv(records, fh)
        written.append(metrics_path)
        return records
    except Exception:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        if created_dir:
            try:
                out_dir.rmdir()
            except OSError:
                pass
        raise
