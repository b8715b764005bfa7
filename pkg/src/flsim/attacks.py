"""Byzantine client behaviour: attacker assignment and payload corruption.

Attacks transform whatever payload a scheme uploads (a model under
model-based aggregation, a delta under update-based aggregation) after
local learning and before aggregation.  Honest payloads pass through
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .nn import ParamVector
from . import rng

NONE = "none"
ADDITIVE_NOISE = "additive_noise"
SIGN_FLIP = "sign_flip"

KINDS = (NONE, ADDITIVE_NOISE, SIGN_FLIP)


@dataclass(frozen=True)
class AttackPlan:
    """Which clients misbehave and how; fixed for a whole run."""

    kind: str = NONE
    fraction: float = 0.0
    sigma: float = 0.5
    attacker_ids: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown attack kind {self.kind!r}")
        if not 0.0 <= self.fraction <= 1.0:
            raise InputError("attacker fraction must be in [0,1]")
        if self.sigma < 0:
            raise InputError("noise sigma must be >= 0")
        object.__setattr__(self, "attacker_ids", frozenset(self.attacker_ids))


def attacker_count(num_clients: int, fraction: float) -> int:
    return round(fraction * num_clients)


def assign_attackers(num_clients: int, fraction: float, seed: int) -> frozenset[int]:
    """Seeded uniform choice of round(fraction * K) attacker ids."""
    if not 0.0 <= fraction <= 1.0:
        raise InputError("attacker fraction must be in [0,1]")
    m = attacker_count(num_clients, fraction)
    if m == 0:
        return frozenset()
    gen = rng.stream(seed, "attackers")
    return frozenset(int(i) for i in gen.choice(num_clients, size=m, replace=False))


def make_plan(kind: str, fraction: float, sigma: float,
              num_clients: int, seed: int) -> AttackPlan:
    ids = assign_attackers(num_clients, fraction, seed) if kind != NONE else frozenset()
    return AttackPlan(kind, fraction, sigma, ids)


def attack_additive_noise(payload: ParamVector, sigma: float,
                          rng_key: int) -> ParamVector:
    """Add iid zero-mean Gaussian noise per coordinate; kind preserved."""
    if sigma < 0:
        raise InputError("sigma must be >= 0")
    if sigma == 0:
        return payload
    gen = rng.stream(rng_key, "noise")
    noise = gen.normal(0.0, sigma, size=payload.values.shape)
    return ParamVector(payload.kind,
                       payload.values + noise.astype(payload.dtype), payload.spec)


def attack_sign_flip(payload: ParamVector) -> ParamVector:
    """Negate every coordinate; magnitude is preserved exactly."""
    return ParamVector(payload.kind, -payload.values, payload.spec)


def apply_attack(plan: AttackPlan, client_id: int, payload: ParamVector,
                 seed: int, round_index: int) -> ParamVector:
    """Transform an outgoing payload if the client is an attacker."""
    if plan.kind == NONE or client_id not in plan.attacker_ids:
        return payload
    if plan.kind == SIGN_FLIP:
        return attack_sign_flip(payload)
    key = rng.derive_key(seed, "attack", round_index, client_id)
    return attack_additive_noise(payload, plan.sigma, key)
