"""Command-line entry point.

Subcommands and exit codes:

  flsim run               run an experiment; 0 ok, 1 config error, 2 data error
  flsim gradcheck         finite-difference gradient audit; 0 iff within gate
  flsim data fetch        download and verify the dataset archives; 2 on failure
  flsim data inspect      print an IDX file header; 2 on malformed input
  flsim partition-report  per-client partition sizes and label diversity

Progress goes to stderr; machine-readable output goes to files, so stdout
stays clean for piping.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import data, gradcheck, runner
from .config import parse_config
from .errors import ConfigError, DataError, FlsimError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_config_flags(p: argparse.ArgumentParser):
    """Every config key is settable from the command line."""
    p.add_argument("--config", metavar="FILE", help="JSON config file")
    p.add_argument("--scheme", choices=["mb", "mub"])
    p.add_argument("--init-mode", dest="init_mode", choices=["server", "icmi"])
    p.add_argument("--model", choices=["mlp", "cnn"])
    p.add_argument("--dataset", choices=["mnist", "synth"])
    p.add_argument("--partition", choices=["iid", "label_shard"])
    p.add_argument("--clients", type=int)
    p.add_argument("--participation", type=float)
    p.add_argument("--rounds", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--local-iters", dest="local_iters", type=int)
    p.add_argument("--attack.kind", dest="attack_kind",
                   choices=["none", "additive_noise", "sign_flip"])
    p.add_argument("--attack.fraction", dest="attack_fraction", type=float)
    p.add_argument("--attack.sigma", dest="attack_sigma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", choices=["single", "double"])
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--train-limit", dest="train_limit", type=int)
    p.add_argument("--test-limit", dest="test_limit", type=int)
    p.add_argument("--shards-per-client", dest="shards_per_client", type=int)


_OVERRIDE_KEYS = [
    ("scheme", "scheme"), ("init_mode", "init_mode"), ("model", "model"),
    ("dataset", "dataset"), ("partition", "partition"), ("clients", "clients"),
    ("participation", "participation"), ("rounds", "rounds"), ("lr", "lr"),
    ("batch_size", "batch_size"), ("local_iters", "local_iters"),
    ("attack_kind", "attack.kind"), ("attack_fraction", "attack.fraction"),
    ("attack_sigma", "attack.sigma"), ("seed", "seed"),
    ("precision", "precision"), ("data_dir", "data_dir"), ("out_dir", "out_dir"),
    ("train_limit", "train_limit"), ("test_limit", "test_limit"),
    ("shards_per_client", "shards_per_client"),
]


def _config_from_args(args) -> "ExperimentConfig":
    overrides = {key: getattr(args, attr) for attr, key in _OVERRIDE_KEYS
                 if getattr(args, attr, None) is not None}
    return parse_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="flsim",
                  description="Deterministic federated-learning simulator",
                  epilog="exit codes: 0 success; 1 configuration error "
                         "(unknown key, bad value, bad flag); 2 data error "
                         "(missing or malformed dataset files, failed fetch). "
                         "gradcheck exits 1 when the gradient error exceeds "
                         "its gate.")
    sub = top.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment", parents=[],
                         description="Run one experiment and write metrics.csv "
                                     "plus the resolved config.json.")
    _add_config_flags(run)
    run.add_argument("--threads", type=int, default=None,
                     help="client-level worker threads (does not change results)")
    run.add_argument("--no-timing", action="store_true",
                     help="zero the wallclock column for byte-exact diffing")
    run.add_argument("--hist", action="store_true",
                     help="also write hist_round_<t>.csv coordinate histograms")

    gc = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    gc.add_argument("--model", choices=["mlp", "cnn", "both"], default="both")
    gc.add_argument("--precision", choices=["single", "double"], default="double")
    gc.add_argument("--trials", type=int, default=100)
    gc.add_argument("--seed", type=int, default=7)
    gc.add_argument("--epsilon", type=float, default=1e-5)

    dat = sub.add_parser("data", help="dataset utilities")
    dat_sub = dat.add_subparsers(dest="data_command", required=True)
    fetch = dat_sub.add_parser("fetch", help="download and verify archives")
    fetch.add_argument("--url", default=data.DEFAULT_MIRROR,
                       help="mirror base URL")
    fetch.add_argument("--data-dir", dest="data_dir", default=None)
    inspect = dat_sub.add_parser("inspect", help="print an IDX header")
    inspect.add_argument("file")

    rep = sub.add_parser("partition-report",
                         help="per-client sizes and distinct-label counts")
    _add_config_flags(rep)

    return top


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    threads = args.threads if args.threads is not None else runner.default_threads()
    records = runner.run_experiment(cfg, threads=threads,
                                    no_timing=args.no_timing, hist=args.hist)
    final = records[-1]
    print(f"done: {len(records)} rounds, final accuracy {final.test_accuracy:.4f}",
          file=sys.stderr)
    return 0


def _cmd_gradcheck(args) -> int:
    report = gradcheck.run_gradcheck(args.model, args.precision, args.trials,
                                     args.seed, args.epsilon)
    print(f"gradcheck: {report.trials} instances, max relative error "
          f"{report.max_error:.3e} (gate {report.gate:.0e})")
    return 0 if report.passed else 1


def _cmd_data(args) -> int:
    if args.data_command == "fetch":
        from .config import ExperimentConfig
        import dataclasses
        cfg = ExperimentConfig()
        if args.data_dir:
            cfg = dataclasses.replace(cfg, data_dir=args.data_dir)
        target = runner.resolve_data_dir(cfg)
        data.fetch_mnist(target, base_url=args.url,
                         log=lambda m: print(m, file=sys.stderr))
        print(f"dataset ready in {target}", file=sys.stderr)
        return 0
    blob = Path(args.file).read_bytes()
    print(data.inspect_idx(blob))
    return 0


def _cmd_partition_report(args) -> int:
    cfg = _config_from_args(args)
    train, _ = runner.load_datasets(cfg)
    parts = runner.build_partitions(cfg, train)
    for p in parts:
        labels = p.labels()
        distinct = len(set(labels.tolist()))
        print(f"client {p.client_id}: size={len(p)} distinct_labels={distinct}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "gradcheck":
            return _cmd_gradcheck(args)
        if args.command == "data":
            return _cmd_data(args)
        if args.command == "partition-report":
            return _cmd_partition_report(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FlsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
