"""Why delta uploads resist payload corruption: the size gap.

After a few warm-up rounds, per-round deltas are orders of magnitude
smaller and tighter than the models themselves.  An attacker who can only
transform its own upload therefore has far less leverage against the
aggregate, which is the entire robustness story in one histogram.
"""

from flsim import config as fc
from flsim import runner, protocol
from flsim.attacks import make_plan
from flsim.metrics import coordinate_std, payload_norm_stats

cfg = fc.from_dict({
    "scheme": "mub", "init_mode": "icmi", "dataset": "synth",
    "partition": "label_shard", "clients": 10, "rounds": 1, "lr": 0.05,
    "seed": 11,
    "synth": {"num_classes": 10, "per_class": 100, "test_per_class": 20,
              "dim": 16, "separation": 6.0},
})

train, test = runner.load_datasets(cfg)
parts = runner.build_partitions(cfg, train)
spec = runner.build_model_spec(cfg, train)
server, clients = protocol.initialize(cfg, spec, parts)
hyper = protocol.Hyper.from_config(cfg)
plan = make_plan("none", 0.0, 0.5, cfg.clients, cfg.seed)

captured = {}
for round_index in range(1, 7):
    server, _ = protocol.run_round(
        server, clients, hyper, plan, cfg.seed,
        payload_hook=lambda r, p: captured.update(p) if r == 6 else None)

updates = [captured[k] for k in sorted(captured)]
models = [c.local_model for c in clients]

for name, payloads in (("deltas", updates), ("models", models)):
    stats = payload_norm_stats(payloads, bins=9)
    print(f"{name}: mean L2 norm {stats.mean_norm:8.4f}   "
          f"coordinate std {coordinate_std(payloads):.5f}")
    peak = stats.hist_counts.max()
    for lo, hi, count in zip(stats.bin_edges[:-1], stats.bin_edges[1:],
                             stats.hist_counts):
        bar = "#" * max(1, int(40 * count / peak)) if count else ""
        print(f"    [{lo:8.4f}, {hi:8.4f})  {count:7d} {bar}")
    print()
