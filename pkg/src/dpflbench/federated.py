"""Single-process FedAvg simulation with optional client-side DP-SGD."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import seeding
from .data import ClientShard
from .dp.accountant import DpBudget, DpConfig, PrivacySpent, epsilon_spent, with_steps
from .dp.training import dpsgd_train, steps_per_epoch
from .errors import AggregationError, ValidationError
from .models import Model, ModelSpec, evaluate, init_model, train_sgd


@dataclass(frozen=True)
class FlConfig:
    num_clients: int = 10
    fraction: float = 0.5
    rounds: int = 10
    local_epochs: int = 1
    batch_size: int = 32
    lr: float = 0.5
    dp: DpBudget | None = None

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValidationError("num_clients must be >= 1")
        if not 0 < self.fraction <= 1:
            raise ValidationError("fraction must lie in (0, 1]")
        if self.rounds < 1 or self.local_epochs < 1 or self.batch_size < 1:
            raise ValidationError("rounds, local_epochs and batch_size must be >= 1")
        if not self.lr > 0:
            raise ValidationError("lr must be > 0")

    @property
    def clients_per_round(self) -> int:
        return max(1, math.ceil(self.fraction * self.num_clients - 1e-9))

    def client_dp(self, n_examples: int) -> DpConfig | None:
        """Per-client DP config, calibrated for participation in every round."""
        if self.dp is None:
            return None
        return self.dp.for_training(n_examples, self.batch_size, self.rounds * self.local_epochs)


@dataclass(frozen=True)
class ClientState:
    client_id: int
    shard: ClientShard
    seed: int  # derived from (master_seed, client_id, round)

    @classmethod
    def for_round(cls, shard: ClientShard, master_seed: int, round_index: int) -> "ClientState":
        if len(shard) == 0:
            raise ValidationError(f"client {shard.client_id} has an empty shard")
        return cls(shard.client_id, shard, seeding.derive_seed(master_seed, seeding.CLIENT, shard.client_id, round_index))

    @property
    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    client_id: int
    params: np.ndarray = field(repr=False)
    num_examples: int
    privacy: PrivacySpent | None = None
    steps: int = 0


@dataclass(frozen=True)
class RoundRecord:
    round: int
    selected: tuple[int, ...]
    accuracy: float
    privacy: dict[int, PrivacySpent] | None = None


def select_clients(num_clients: int, fraction: float, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform sample of ceil(fraction * N) distinct clients, sorted."""
    if not 0 < fraction <= 1:
        raise ValidationError("fraction must lie in (0, 1]")
    k = max(1, math.ceil(fraction * num_clients - 1e-9))
    if k == num_clients:
        return tuple(range(num_clients))
    return tuple(sorted(int(c) for c in rng.choice(num_clients, size=k, replace=False)))


def local_update(
    global_model: Model,
    client: ClientState,
    features: np.ndarray,
    labels: np.ndarray,
    cfg: FlConfig,
) -> ClientUpdate:
    """Train a copy of the global model on the client's shard.

    ``features``/``labels`` are the full training arrays; the shard selects rows.
    """
    idx = client.shard.indices
    x, y = features[idx], labels[idx]
    rng = client.rng
    dp_cfg = cfg.client_dp(len(idx))
    if dp_cfg is None:
        model = train_sgd(global_model, x, y, cfg.lr, cfg.local_epochs, cfg.batch_size, rng)
        return ClientUpdate(client.client_id, model.params, len(idx))
    round_cfg = with_steps(dp_cfg, cfg.local_epochs * steps_per_epoch(dp_cfg.sampling_rate))
    model, spent = dpsgd_train(global_model, x, y, round_cfg, cfg.lr, cfg.local_epochs, rng)
    return ClientUpdate(client.client_id, model.params, len(idx), spent, round_cfg.steps)


def fedavg(updates: Sequence[ClientUpdate]) -> np.ndarray:
    """Example-weighted mean of client parameters.

    Computed as ``p_0 + sum_k w_k (p_k - p_0)`` so identical updates come back
    unchanged bit for bit, then clamped to the per-coordinate [min, max].
    """
    if not updates:
        raise AggregationError("no client updates to aggregate")
    shapes = {np.shape(u.params) for u in updates}
    if len(shapes) != 1 or len(shapes.pop()) != 1:
        raise AggregationError("client parameter vectors differ in length")
    stack = np.stack([np.asarray(u.params, dtype=np.float64) for u in updates])
    counts = np.array([u.num_examples for u in updates], dtype=np.float64)
    if np.any(counts <= 0):
        raise AggregationError("every update needs num_examples >= 1")
    weights = counts / counts.sum()
    base = stack[0]
    out = base + weights @ (stack - base)
    return np.clip(out, stack.min(axis=0), stack.max(axis=0))


def run_federated(
    shards: Sequence[ClientShard],
    train_x: np.ndarray,
    train_y: np.ndarray,
    test_x: np.ndarray,
    test_y: np.ndarray,
    spec: ModelSpec,
    cfg: FlConfig,
    master_seed: int,
    workers: int = 1,
    initial: Model | None = None,
) -> tuple[Model, list[RoundRecord]]:
    """Select, train locally, average, evaluate; once per round.

    Every random draw comes from a stream derived from ``master_seed``, so the
    result does not depend on ``workers`` or on client completion order.
    """
    if len(shards) != cfg.num_clients:
        raise ValidationError(f"got {len(shards)} shards for {cfg.num_clients} clients")
    if len(test_y) == 0:
        raise ValidationError("test set is empty")
    by_id = {s.client_id: s for s in shards}
    model = initial if initial is not None else init_model(spec, seeding.derive_seed(master_seed, seeding.INIT))
    steps_done = {cid: 0 for cid in by_id}
    dp_cfgs = {cid: cfg.client_dp(len(s)) for cid, s in by_id.items()}
    history: list[RoundRecord] = []

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for r in range(cfg.rounds):
            selected = select_clients(cfg.num_clients, cfg.fraction, seeding.stream(master_seed, seeding.SELECT, r))
            states = [ClientState.for_round(by_id[c], master_seed, r) for c in selected]

            def work(state, model=model):
                return local_update(model, state, train_x, train_y, cfg)

            updates = list(pool.map(work, states)) if pool else [work(s) for s in states]
            model = model.with_params(fedavg(updates))

            privacy = None
            if cfg.dp is not None:
                privacy = {}
                for u in updates:
                    steps_done[u.client_id] += u.steps
                    privacy[u.client_id] = epsilon_spent(with_steps(dp_cfgs[u.client_id], steps_done[u.client_id]))
            history.append(RoundRecord(r, selected, evaluate(model, test_x, test_y), privacy))
    finally:
        if pool:
            pool.shutdown()
    return model, history


def format_round_history(history: Sequence[RoundRecord]) -> str:
    """Delimited text: round, client ids, accuracy, per-client cumulative epsilon."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["round", "clients", "accuracy", "epsilon"])
    for rec in history:
        eps = ""
        if rec.privacy:
            eps = " ".join(f"{c}:{rec.privacy[c].epsilon!r}" for c in sorted(rec.privacy))
        w.writerow([rec.round, " ".join(map(str, rec.selected)), repr(rec.accuracy), eps])
    return buf.getvalue()


def write_round_history(history: Sequence[RoundRecord], path: str | Path) -> None:
    Path(path).write_text(format_round_history(history), encoding="utf-8", newline="\n")
