"""Federated protocol engine: client/server state machines and rounds.

Two aggregation schemes share one round structure:

* "mb"  -- clients upload locally trained models; the server broadcasts
  the aggregated model.
* "mub" -- clients upload the difference between their model after and
  before local learning; the server broadcasts the aggregated delta, and
  every client shifts its own model by the incoming delta on receipt.

Either scheme can start from a server-drawn shared model ("server" init)
or from per-client independent draws ("icmi" init).  All randomness comes
from keyed streams, so rounds are reproducible regardless of worker
count; aggregation always reduces in ascending client-id order.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InputError, LayoutError
from .nn import MODEL, UPDATE, ModelSpec, ParamVector, pv_add, pv_sub, run_sgd
from .data import Partition, make_batches
from .attacks import AttackPlan, apply_attack, make_plan
from .metrics import RoundRecord
from .config import ExperimentConfig
from . import nn, rng


@dataclass
class Hyper:
    """Learning-loop knobs shared by every client."""

    eta: float
    batch_size: int
    local_iters: int
    participation: float
    num_clients: int

    def __post_init__(self):
        if self.eta <= 0 or self.batch_size < 1 or self.local_iters < 1:
            raise InputError("eta > 0, batch_size >= 1, local_iters >= 1 required")
        if not 0.0 < self.participation <= 1.0 or self.num_clients < 1:
            raise InputError("participation in (0,1] and num_clients >= 1 required")

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Hyper":
        return cls(cfg.lr, cfg.batch_size, cfg.local_iters,
                   cfg.participation, cfg.clients)


@dataclass
class ClientState:
    """One client's persistent state across rounds.

    `local_model` is the most recently trained model.  `base` is the
    pre-learning state the client keeps in sync with the global run under
    the delta scheme: incoming global deltas fold into `base`, never into
    `local_model`, because the client's own last displacement is already
    part of the aggregated delta it receives back.
    """

    client_id: int
    local_model: ParamVector
    base: ParamVector
    partition: Partition
    malicious: bool
    rng_stream: int  # derived stream id for this client's local draws


@dataclass
class ServerState:
    """Server-side state; `broadcast` kind matches the scheme."""

    scheme: str  # "mb" | "mub"
    init_mode: str  # "server" | "icmi"
    broadcast: ParamVector | None
    accumulated_global: ParamVector | None
    round: int = 1


def initialize(cfg: ExperimentConfig, model_spec: ModelSpec,
               partitions: list[Partition]) -> tuple[ServerState, list[ClientState]]:
    """Build server and client states for round 1.

    Server init gives every client one shared model drawn from the global
    seed; icmi init draws each client's model from its own stream.  Under
    "mub" the first broadcast is the all-zero delta; under "mb" it is the
    shared model (or nothing under icmi, where clients start from their
    own models and the first aggregation defines the first broadcast).
    """
    if len(partitions) != cfg.clients:
        raise InputError(
            f"{cfg.clients} clients configured but {len(partitions)} partitions given")
    dtype = np.float64 if cfg.precision == "double" else np.float32
    plan = make_plan(cfg.attack.kind, cfg.attack.fraction, cfg.attack.sigma,
                     cfg.clients, cfg.seed)

    if cfg.init_mode == "server":
        shared = nn.init_params(model_spec, rng.derive_key(cfg.seed, "init"),
                                "glorot", dtype=dtype)
        models = [shared] * cfg.clients
    else:
        models = [nn.init_params(model_spec, rng.derive_key(cfg.seed, "icmi", k),
                                 "glorot", dtype=dtype)
                  for k in range(cfg.clients)]

    clients = [
        ClientState(
            client_id=k,
            local_model=models[k],
            base=models[k],
            partition=partitions[k],
            malicious=k in plan.attacker_ids,
            rng_stream=rng.derive_key(cfg.seed, "client", k),
        )
        for k in range(cfg.clients)
    ]

    if cfg.scheme == "mub":
        broadcast = nn.init_params(model_spec, 0, "zero", dtype=dtype)
        broadcast = ParamVector(UPDATE, broadcast.values, model_spec)
        accumulated = models[0] if cfg.init_mode == "server" else None
    else:
        broadcast = models[0] if cfg.init_mode == "server" else None
        accumulated = None
    server = ServerState(cfg.scheme, cfg.init_mode, broadcast, accumulated, round=1)
    return server, clients


def select_clients(num_clients: int, participation: float, seed: int,
                   round_index: int) -> list[int]:
    """Seeded sample of max(round(C*K), 1) distinct ids, ascending."""
    if not 0.0 < participation <= 1.0:
        raise InputError("participation must be in (0,1]")
    m = max(round(participation * num_clients), 1)
    if m >= num_clients:
        return list(range(num_clients))
    gen = rng.stream(seed, "select", round_index)
    picked = gen.choice(num_clients, size=m, replace=False)
    return sorted(int(i) for i in picked)


def aggregation_weights(sizes: list[int]) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.int64)
    if np.any(sizes <= 0):
        raise InputError("partition sizes must be positive")
    return sizes.astype(np.float64) / float(sizes.sum())


def aggregate(payloads: list[ParamVector], sizes: list[int]) -> ParamVector:
    """Size-weighted mean, reduced in list order (callers pass ascending id).

    All payloads must share one kind and layout; the result keeps them.
    """
    if not payloads:
        raise InputError("nothing to aggregate")
    if len(payloads) != len(sizes):
        raise InputError("payloads and sizes differ in length")
    first = payloads[0]
    for p in payloads[1:]:
        if p.kind != first.kind:
            raise LayoutError(
                f"cannot aggregate {p.kind} payload with {first.kind} payload")
        if not p.same_layout(first):
            raise LayoutError("payloads have different layouts")
    weights = aggregation_weights(sizes)
    dtype = first.dtype
    acc = np.zeros_like(first.values)
    for w, p in zip(weights, payloads):
        acc += dtype.type(w) * p.values
    return ParamVector(first.kind, acc, first.spec)


def _local_learn(client: ClientState, start: ParamVector, hyper: Hyper,
                 round_index: int) -> ParamVector:
    """N passes of batch SGD from `start` over this client's partition."""
    values = start.values
    for j in range(hyper.local_iters):
        batches = make_batches(client.partition, hyper.batch_size,
                               client.rng_stream, round_index, j)
        values = run_sgd(start.spec, values, batches, hyper.eta)
    return ParamVector(MODEL, values, start.spec)


def client_local_round_mb(client: ClientState, model: ParamVector,
                          hyper: Hyper, round_index: int) -> ParamVector:
    """Model-upload round: train from the broadcast model, upload the result."""
    if model.kind != MODEL:
        raise LayoutError("mb round expects a model broadcast")
    trained = _local_learn(client, model, hyper, round_index)
    client.base = model
    client.local_model = trained
    return trained


def client_local_round_mub(client: ClientState, update: ParamVector,
                           hyper: Hyper, round_index: int) -> ParamVector:
    """Delta-upload round: shift the base, train, upload (after - before).

    The incoming global delta folds into the client's tracked pre-learning
    base (the client's own previous displacement came back inside it);
    training starts there, the trained model is kept, and the upload is
    exactly trained minus shifted base.
    """
    if update.kind != UPDATE:
        raise LayoutError("mub round expects an update broadcast")
    shifted = pv_add(client.base, update)
    trained = _local_learn(client, shifted, hyper, round_index)
    client.base = shifted
    client.local_model = trained
    return pv_sub(trained, shifted)


def run_round(server: ServerState, clients: list[ClientState], hyper: Hyper,
              adversary: AttackPlan, seed: int, *,
              evaluator=None, payload_hook=None, threads: int | None = None,
              timing: bool = True) -> tuple[ServerState, RoundRecord]:
    """Execute one full federated round and advance the server state.

    Selected clients train and upload; malicious uploads are transformed
    by the adversary; the server aggregates over the selected set in
    ascending id order.  Under "mub" every client (selected or not)
    receives the broadcast delta.  `evaluator(server, clients)` may
    supply (accuracy, loss) for the round record.
    """
    started = time.perf_counter()
    t = server.round
    selected = select_clients(hyper.num_clients, hyper.participation, seed, t)
    selected_set = set(selected)

    if server.scheme == "mub":
        incoming = server.broadcast
        for c in clients:
            if c.client_id not in selected_set:
                c.base = pv_add(c.base, incoming)
                c.local_model = pv_add(c.local_model, incoming)

        def work(cid: int) -> ParamVector:
            return client_local_round_mub(clients[cid], incoming, hyper, t)
    else:
        incoming = server.broadcast  # may be None under icmi before round 1

        def work(cid: int) -> ParamVector:
            start = incoming if incoming is not None else clients[cid].local_model
            return client_local_round_mb(clients[cid], start, hyper, t)

    if threads is not None and threads > 1 and len(selected) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            raw = dict(zip(selected, pool.map(work, selected)))
    else:
        raw = {cid: work(cid) for cid in selected}

    payloads = {
        cid: apply_attack(adversary, cid, raw[cid], seed, t) for cid in selected
    }
    if payload_hook is not None:
        payload_hook(t, payloads)

    ordered = [payloads[cid] for cid in selected]
    sizes = [len(clients[cid].partition) for cid in selected]

    if server.scheme == "mub":
        agg = aggregate(ordered, sizes)
        server.broadcast = agg
        if server.accumulated_global is not None:
            server.accumulated_global = pv_add(server.accumulated_global, agg)
    else:
        if incoming is None:
            server.broadcast = aggregate(ordered, sizes)
        else:
            # Anchor the weighted mean at the previous broadcast: with
            # weights summing to 1 this equals the plain mean, and it keeps
            # the arithmetic aligned with the delta scheme's bookkeeping.
            diffs = [pv_sub(p, incoming) for p in ordered]
            server.broadcast = pv_add(incoming, aggregate(diffs, sizes))
    server.round = t + 1

    update_norms = [float(np.linalg.norm(p.values.astype(np.float64)))
                    for p in ordered]
    model_norms = [float(np.linalg.norm(clients[cid].local_model.values.astype(np.float64)))
                   for cid in selected]
    accuracy = loss = None
    if evaluator is not None:
        accuracy, loss = evaluator(server, clients)
    elapsed_ms = (time.perf_counter() - started) * 1000.0 if timing else 0.0
    record = RoundRecord(
        round=t,
        test_accuracy=accuracy,
        test_loss=loss,
        mean_update_norm=float(np.mean(update_norms)),
        mean_model_norm=float(np.mean(model_norms)),
        wallclock_ms=elapsed_ms,
    )
    return server, record
