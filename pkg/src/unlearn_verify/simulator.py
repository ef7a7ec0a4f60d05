"""Bernoulli-level model of an MLaaS server and its users.

Privacy enthusiasts each pick a weight-``w`` trigger and a target label,
later ask for deletion, and verify it with backdoored queries. Models are
never trained: a query succeeds with the rate the server's behaviour
implies. Triggers of deleted users can still fire when a retained
enthusiast with the same target label holds a nearly identical trigger.

Randomness is drawn from ``numpy`` PCG64 streams derived from the config
seed with ``SeedSequence`` spawn keys, so each user and query purpose gets
its own stream and results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels
from .core import (
    PRNG_ALGORITHM,
    OutcomeVector,
    Strategy,
    TestPlan,
    check_probability,
    deletion_confidence,
)
from .errors import ConfigError, UsageError
from .estimation import RateEstimate, RateSource
from .multiuser import Population

CONFIG_SCHEMA_VERSION = 1
QUERY_BLOCK = 65536

# spawn-key prefixes of the independent streams
_WORLD_STREAM = 0
_USER_STREAM = 1
_QUERY_STREAM = 2


class Purpose(enum.IntEnum):
    VERIFY = 0
    P_ESTIMATE = 1
    Q_ESTIMATE = 2


class ServerPolicy(str, enum.Enum):
    HONEST = "honest"
    NON_ADAPTIVE = "nonadaptive"
    ADAPTIVE = "adaptive"


def load_config_schema():
    text = resources.files("unlearn_verify").joinpath(
        "schemas/simconfig-v1.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class SimConfig:
    num_users: int
    f_user: float
    image_n: int
    num_labels: int
    base_p: float
    base_q: float
    seed: int
    f_data: float = 50.0
    trigger_w: int = 4
    adaptive_p: float | None = None
    d_collide: int = 2
    delete_fraction: float = 0.5
    threshold_from_estimates: bool = False
    population: tuple | None = None

    def __post_init__(self):
        if self.num_users < 1:
            raise ConfigError("num_users must be >= 1")
        for name in ("f_user", "base_p", "base_q", "delete_fraction"):
            try:
                object.__setattr__(self, name, check_probability(getattr(self, name), name))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if self.adaptive_p is not None:
            object.__setattr__(self, "adaptive_p", check_probability(self.adaptive_p, "adaptive_p"))
        if not (0.0 <= self.f_data <= 100.0):
            raise ConfigError("f_data is a percentage in [0, 100]")
        if not (1 <= self.trigger_w <= self.image_n):
            raise ConfigError(f"trigger_w={self.trigger_w} must lie in [1, image_n={self.image_n}]")
        if self.num_labels < 2:
            raise ConfigError("num_labels must be >= 2")
        if self.d_collide < 0:
            raise ConfigError("d_collide must be >= 0")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.population is not None:
            pop = Population(tuple(tuple(e) for e in self.population))
            object.__setattr__(self, "population", pop.entries)

    @property
    def num_enthusiasts(self):
        # round half up; Python's round() would send 2.5 to 2
        return int(math.floor(self.f_user * self.num_users + 0.5))

    def to_dict(self):
        out = asdict(self)
        if self.population is not None:
            out["population"] = [list(e) for e in self.population]
        return out

    @classmethod
    def from_dict(cls, data, base_dir=None):
        """Validate against the shipped JSON schema and build a config.

        A ``population_csv`` entry is resolved relative to ``base_dir``.
        """
        import jsonschema

        jsonschema.validate(data, load_config_schema())
        data = dict(data)
        data.pop("schema_version", None)
        csv_path = data.pop("population_csv", None)
        if csv_path is not None:
            path = Path(base_dir or ".") / csv_path
            data["population"] = Population.from_csv(path).entries
        return cls(**data)


@dataclass(frozen=True)
class SimUser:
    id: int
    enthusiast: bool
    trigger: tuple | None
    target_label: int | None
    deletion_requested: bool
    p_true: float
    q_true: float

    def trigger_bits(self, image_n):
        bits = np.zeros(image_n, dtype=np.uint8)
        if self.trigger is not None:
            bits[list(self.trigger)] = 1
        return bits


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def build_world(config):
    """Assign enthusiasts, triggers, labels and deletion requests.

    Enthusiasts are a prefix of one seeded permutation and every per-user
    draw has its own stream, so raising ``f_user`` only adds enthusiasts.
    """
    order = _stream(config.seed, _WORLD_STREAM).permutation(config.num_users)
    rank = {int(uid): j for j, uid in enumerate(order[:config.num_enthusiasts])}
    users = []
    for uid in range(config.num_users):
        rng = _stream(config.seed, _USER_STREAM, uid)
        positions = rng.choice(config.image_n, size=config.trigger_w, replace=False)
        label = int(rng.integers(config.num_labels))
        requested = bool(rng.random() < config.delete_fraction)
        enthusiast = uid in rank
        p_true, q_true = config.base_p, config.base_q
        if enthusiast and config.population is not None:
            p_true, q_true = config.population[rank[uid] % len(config.population)]
        users.append(SimUser(
            id=uid,
            enthusiast=enthusiast,
            trigger=tuple(sorted(int(x) for x in positions)) if enthusiast else None,
            target_label=label if enthusiast else None,
            deletion_requested=requested,
            p_true=p_true,
            q_true=q_true,
        ))
    return users


def trigger_distance(a, b):
    """Hamming distance between two equal-weight triggers given as positions."""
    return 2 * (len(a.trigger) - len(set(a.trigger) & set(b.trigger)))


def retained_rate(user, policy, config):
    if ServerPolicy(policy) is ServerPolicy.ADAPTIVE:
        if config.adaptive_p is None:
            raise ConfigError("the adaptive policy needs adaptive_p")
        return config.adaptive_p
    return user.p_true


def is_deleted(user, policy):
    return ServerPolicy(policy) is ServerPolicy.HONEST and user.deletion_requested


def colliders(user, world, policy, d_collide):
    """Retained enthusiasts whose trigger interferes with ``user``'s."""
    return [
        other for other in world
        if other.enthusiast and other.id != user.id and not is_deleted(other, policy)
        and other.target_label == user.target_label
        and trigger_distance(user, other) <= d_collide
    ]


def effective_rate(user, world, policy, config):
    """Backdoor success rate the user observes after requesting deletion."""
    if not user.enthusiast:
        raise UsageError(f"user {user.id} is not a privacy enthusiast")
    if not is_deleted(user, policy):
        return retained_rate(user, policy, config)
    hits = colliders(user, world, policy, config.d_collide)
    if hits:
        return max(retained_rate(o, policy, config) for o in hits)
    return user.q_true


def query_counts(user, rate, n, seed, purpose, trials=1):
    """Success counts of ``trials`` independent runs of ``n`` queries."""
    rate = check_probability(rate, "rate")
    rng = _stream(seed, _QUERY_STREAM, user.id, int(purpose))
    out = np.empty(trials, dtype=np.int64)
    rows_per_block = max(1, QUERY_BLOCK // n)
    done = 0
    while done < trials:
        b = min(rows_per_block, trials - done)
        out[done:done + b] = (rng.random((b, n)) < rate).sum(axis=1)
        done += b
    return out


def run_queries(user, rate, n, seed, purpose=Purpose.VERIFY):
    """One run of ``n`` Bernoulli(``rate``) queries (trial 0 of its stream)."""
    rate = check_probability(rate, "rate")
    rng = _stream(seed, _QUERY_STREAM, user.id, int(purpose))
    return OutcomeVector(rng.random((1, n))[0] < rate)


@dataclass(frozen=True)
class UserOutcome:
    user_id: int
    rate: float
    collided: bool
    p_hat: RateEstimate
    q_hat: RateEstimate
    q_reference: float
    threshold_k: int
    accepts: int
    rejects: int
    estimated_rho: float

    def to_row(self):
        return {
            "user_id": self.user_id, "rate": self.rate, "collided": self.collided,
            "p_hat": str(self.p_hat.r_hat), "q_hat": str(self.q_hat.r_hat),
            "q_reference": self.q_reference, "threshold_k": self.threshold_k,
            "accepts": self.accepts, "rejects": self.rejects,
            "estimated_rho": self.estimated_rho,
        }


@dataclass(frozen=True)
class SimulationResult:
    config: SimConfig
    policy: ServerPolicy
    plan: TestPlan
    trials: int
    users: tuple
    counts: dict = field(default_factory=dict)

    @property
    def decisions(self):
        return sum(self.counts.values())

    def fp_rate(self):
        h0 = self.counts["fp"] + self.counts["tn"]
        return self.counts["fp"] / h0 if h0 else math.nan

    def fn_rate(self):
        h1 = self.counts["fn"] + self.counts["tp"]
        return self.counts["fn"] / h1 if h1 else math.nan

    def to_dict(self):
        return {
            "policy": self.policy.value,
            "n": self.plan.n,
            "alpha": self.plan.alpha,
            "trials": self.trials,
            "f_data": self.config.f_data,
            "counts": dict(self.counts),
            "fp_rate": None if math.isnan(self.fp_rate()) else self.fp_rate(),
            "fn_rate": None if math.isnan(self.fn_rate()) else self.fn_rate(),
            "prng_algorithm": PRNG_ALGORITHM,
            "users": [u.to_row() for u in self.users],
        }

    def write_csv(self, path):
        rows = [u.to_row() for u in self.users]
        fields = list(UserOutcome.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)


def end_to_end(config, policy, plan, trials=1, n_estimate=None):
    """Run the verification phase for every enthusiast who asked for deletion.

    Each such user estimates ``p`` from queries made while their data is
    still in the model, ``q`` from queries with a fresh random trigger, and
    then runs ``trials`` independent verifications of ``plan.n`` queries.
    The acceptance threshold uses the model's deleted-data rate ``q_true``
    unless ``config.threshold_from_estimates`` asks for the estimate.
    """
    policy = ServerPolicy(policy)
    if trials < 1:
        raise UsageError("trials must be >= 1")
    n_est = plan.n if n_estimate is None else n_estimate
    world = build_world(config)
    truth_h0 = policy is ServerPolicy.HONEST
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    outcomes = []
    for user in world:
        if not (user.enthusiast and user.deletion_requested):
            continue
        hits = colliders(user, world, policy, config.d_collide) if is_deleted(user, policy) else []
        rate = effective_rate(user, world, policy, config)
        p_hat = RateEstimate(
            int(query_counts(user, retained_rate(user, policy, config), n_est,
                             config.seed, Purpose.P_ESTIMATE)[0]),
            n_est, RateSource.POST_TRAINING_QUERY)
        q_hat = RateEstimate(
            int(query_counts(user, user.q_true, n_est, config.seed, Purpose.Q_ESTIMATE)[0]),
            n_est, RateSource.ALTERNATE_PATTERN_QUERY)
        q_ref = float(q_hat.r_hat) if config.threshold_from_estimates else user.q_true
        k = int(kernels.threshold(plan.n, plan.log_alpha, q_ref))
        verify = query_counts(user, rate, plan.n, config.seed, Purpose.VERIFY, trials)
        rejects = int((verify > k).sum())
        accepts = trials - rejects
        if truth_h0:
            counts["fp"] += rejects
            counts["tn"] += accepts
        else:
            counts["tp"] += rejects
            counts["fn"] += accepts
        est = deletion_confidence(plan, Strategy(q=float(q_hat.r_hat), p=float(p_hat.r_hat)))
        outcomes.append(UserOutcome(user.id, rate, bool(hits), p_hat, q_hat, q_ref, k,
                                    accepts, rejects, est.rho))
    return SimulationResult(config, policy, plan, trials, tuple(outcomes), counts)
