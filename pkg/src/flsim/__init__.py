"""flsim: a deterministic federated-learning simulator.

Clients train from-scratch numpy networks on partitioned data; the server
aggregates either full models or model deltas, optionally under Byzantine
attacks (additive noise, sign flipping).  Every run is a pure function of
its configuration.
"""

from .config import AttackConfig, ExperimentConfig, SynthConfig, parse_config
from .data import (Dataset, Partition, make_batches, partition_iid,
                   partition_label_shards, synth_dataset)
from .errors import (ConfigError, DataError, FlsimError, IdxFormatError,
                     IdxLengthError, InputError, LayoutError)
from .nn import (Batch, GradResult, ModelSpec, ParamVector, cnn_spec,
                 finite_diff_grad, forward, init_params, loss_and_grad,
                 mlp_spec, sgd_step)
from .attacks import (AttackPlan, assign_attackers, attack_additive_noise,
                      attack_sign_flip)
from .protocol import (ClientState, Hyper, ServerState, aggregate,
                       client_local_round_mb, client_local_round_mub,
                       initialize, run_round, select_clients)
from .metrics import (NormStats, RoundRecord, emit_csv, evaluate,
                      payload_norm_stats, reconstruct_global)
from .runner import run_experiment, simulate

__version__ = "0.1.0"

__all__ = [
    "AttackConfig", "AttackPlan", "Batch", "ClientState", "ConfigError",
    "DataError", "Dataset", "ExperimentConfig", "FlsimError", "GradResult",
    "Hyper", "IdxFormatError", "IdxLengthError", "InputError", "LayoutError",
    "ModelSpec", "NormStats", "ParamVector", "Partition", "RoundRecord",
    "ServerState", "SynthConfig", "aggregate", "assign_attackers",
    "attack_additive_noise", "attack_sign_flip", "client_local_round_mb",
    "client_local_round_mub", "cnn_spec", "emit_csv", "evaluate",
    "finite_diff_grad", "forward", "init_params", "initialize",
    "loss_and_grad", "make_batches", "mlp_spec", "parse_config",
    "partition_iid", "partition_label_shards", "payload_norm_stats",
    "reconstruct_global", "run_experiment", "run_round", "select_clients",
    "sgd_step", "simulate", "synth_dataset",
]
