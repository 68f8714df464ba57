"""Benchmark grid execution: setup x epsilon x model, once per seed."""

from __future__ import annotations

import logging
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import seeding
from ..data import (
    LabeledCorpus,
    PartitionSpec,
    featurize_corpus,
    load_corpus,
    partition,
    split_train_test,
    synth_corpus,
)
from ..dp.accountant import DpBudget
from ..dp.training import dpsgd_train
from ..errors import ExperimentError
from ..federated import FlConfig, run_federated
from ..models import Model, ModelSpec, evaluate, init_model, train_sgd
from .config import DP_SETUPS, MODEL_KINDS, SETUPS, ExperimentConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PreparedData:
    train: LabeledCorpus
    test: LabeledCorpus
    train_x: np.ndarray = field(repr=False)
    test_x: np.ndarray = field(repr=False)
    delta: float

    @property
    def train_y(self) -> np.ndarray:
        return self.train.labels

    @property
    def test_y(self) -> np.ndarray:
        return self.test.labels


@dataclass(frozen=True)
class RawRecord:
    setup: str
    epsilon: float
    model: str
    seed_index: int
    seed: int
    accuracy: float


@dataclass(frozen=True)
class ResultRow:
    setup: str
    epsilon: float
    model: str
    mean_accuracy: float  # percent
    std_accuracy: float  # percent, population std
    n_seeds: int
    delta: float
    wall_time: float = field(default=0.0, compare=False)


def cell_key(setup: str, epsilon: float, model: str):
    """Canonical ordering: setup order of SETUPS, epsilon ascending (inf last), model order."""
    return SETUPS.index(setup), epsilon, MODEL_KINDS.index(model)


def load_dataset(cfg: ExperimentConfig) -> LabeledCorpus:
    d = cfg.data
    if d.source == "synth":
        return synth_corpus(d.synth_examples, d.synth_categories, d.synth_dim, d.synth_separation, d.synth_seed)
    return load_corpus(d.source, d.text_column, d.label_column, d.delimiter)


def prepare_data(cfg: ExperimentConfig, corpus: LabeledCorpus | None = None) -> PreparedData:
    corpus = corpus if corpus is not None else load_dataset(cfg)
    train, test = split_train_test(corpus, cfg.data.train_fraction, cfg.data.split_seed)
    d = cfg.data
    return PreparedData(
        train,
        test,
        featurize_corpus(train, d.feature_dim, d.ngram_max),
        featurize_corpus(test, d.feature_dim, d.ngram_max),
        cfg.resolved_delta(len(train)),
    )


def model_spec(cfg: ExperimentConfig, data: PreparedData, kind: str) -> ModelSpec:
    return ModelSpec(kind, cfg.data.feature_dim, data.train.num_categories, cfg.model.hidden_dim if kind == "mlp" else 0)


def train_centralized(
    cfg: ExperimentConfig, data: PreparedData, kind: str, seed: int, epsilon: float = math.inf
) -> Model:
    """Centralized run; ``epsilon = inf`` is plain mini-batch SGD."""
    spec = model_spec(cfg, data, kind)
    model = init_model(spec, seeding.derive_seed(seed, seeding.INIT))
    rng = seeding.stream(seed, seeding.CENTRAL)
    t = cfg.train
    if math.isinf(epsilon):
        return train_sgd(model, data.train_x, data.train_y, t.lr, t.epochs, t.batch_size, rng)
    budget = DpBudget(epsilon, data.delta, cfg.dp.clip_norm)
    dp_cfg = budget.for_training(len(data.train_y), t.batch_size, t.epochs)
    model, _ = dpsgd_train(model, data.train_x, data.train_y, dp_cfg, t.lr, t.epochs, rng)
    return model


def fl_config(cfg: ExperimentConfig, data: PreparedData, epsilon: float | None) -> FlConfig:
    f = cfg.fl
    dp = None if epsilon is None else DpBudget(epsilon, data.delta, cfg.dp.clip_norm)
    return FlConfig(f.num_clients, f.fraction, f.rounds, f.local_epochs, f.batch_size, f.lr, dp)


def partition_spec(cfg: ExperimentConfig, mode: str, seed: int) -> PartitionSpec:
    f = cfg.fl
    return PartitionSpec(
        mode, f.num_clients, f.num_shards, f.shard_size, f.shards_per_client,
        seeding.derive_seed(seed, seeding.PARTITION),
    )


def run_cell(cfg: ExperimentConfig, data: PreparedData, setup: str, epsilon: float, kind: str, seed: int) -> float:
    """Test accuracy (fraction) of one grid cell for one seed.

    Setups without DP ignore ``epsilon``.
    """
    eps = epsilon if setup in DP_SETUPS else math.inf
    if setup.startswith("centralized"):
        model = train_centralized(cfg, data, kind, seed, eps)
        return evaluate(model, data.test_x, data.test_y)
    mode = "iid" if setup.endswith("-iid") else "noniid"
    shards = partition(data.train, partition_spec(cfg, mode, seed))
    fl = fl_config(cfg, data, eps if setup in DP_SETUPS else None)
    _, history = run_federated(
        shards, data.train_x, data.train_y, data.test_x, data.test_y,
        model_spec(cfg, data, kind), fl, seed,
    )
    return history[-1].accuracy


def aggregate(raw: list[RawRecord], delta: float, times: dict | None = None) -> list[ResultRow]:
    """Mean and population std (in percent) per cell, in canonical order."""
    cells: dict[tuple, list[float]] = {}
    for rec in sorted(raw, key=lambda r: (cell_key(r.setup, r.epsilon, r.model), r.seed_index)):
        cells.setdefault((rec.setup, rec.epsilon, rec.model), []).append(rec.accuracy)
    rows = []
    for (setup, eps, kind), accs in cells.items():
        pct = [100.0 * a for a in accs]
        rows.append(
            ResultRow(
                setup, eps, kind, float(statistics.mean(pct)), float(statistics.pstdev(pct)),
                len(pct), delta, (times or {}).get((setup, eps, kind), 0.0),
            )
        )
    return rows


@dataclass
class ExperimentResult:
    rows: list[ResultRow]
    raw: list[RawRecord]
    data: PreparedData


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, workers: int | None = None) -> ExperimentResult:
    """Run the full grid.

    On a failing cell, rows whose seeds all completed are written to
    ``out_dir`` (when given) before :class:`ExperimentError` is raised.
    """
    from .report import write_outputs

    data = prepare_data(cfg)
    e = cfg.experiment
    cells = sorted(
        ((s, eps, m) for s in e.setups for eps in e.epsilons for m in e.models),
        key=lambda c: cell_key(*c),
    )
    jobs = [(cell, i, seed) for cell in cells for i, seed in enumerate(e.seeds)]
    # DP-free setups do not depend on epsilon: compute once per (setup, model, seed)
    memo: dict[tuple, float] = {}
    times: dict[tuple, float] = {}

    def work(job):
        (setup, eps, kind), i, seed = job
        key = (setup, kind, seed) if setup not in DP_SETUPS else (setup, eps, kind, seed)
        start = time.perf_counter()
        if key not in memo:
            memo[key] = run_cell(cfg, data, setup, eps, kind, seed)
        return RawRecord(setup, eps, kind, i, seed, memo[key]), time.perf_counter() - start

    raw: list[RawRecord] = []
    failure = None
    n_workers = workers or e.workers
    pool = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    try:
        futures = [pool.submit(work, j) for j in jobs] if pool else None
        for idx, job in enumerate(jobs):
            try:
                rec, dt = futures[idx].result() if pool else work(job)
            except Exception as exc:  # noqa: BLE001 - any failure is reported with its cell
                failure = (job, exc)
                break
            raw.append(rec)
            times[job[0]] = times.get(job[0], 0.0) + dt
            log.info("cell %s seed %d: acc=%.4f", job[0], job[2], rec.accuracy)
    finally:
        if pool:
            pool.shutdown(cancel_futures=True)

    if failure is not None:
        (cell, _, seed), exc = failure
        done = {c for c in cells if sum(r.setup == c[0] and r.epsilon == c[1] and r.model == c[2] for r in raw) == len(e.seeds)}
        complete = [r for r in raw if (r.setup, r.epsilon, r.model) in done]
        if out_dir is not None and complete:
            write_outputs(out_dir, cfg, aggregate(complete, data.delta, times), complete, data)
        raise ExperimentError(
            f"cell setup={cell[0]} epsilon={cell[1]} model={cell[2]} seed={seed} failed: {exc}"
        ) from exc

    result = ExperimentResult(aggregate(raw, data.delta, times), raw, data)
    if out_dir is not None:
        write_outputs(out_dir, cfg, result.rows, result.raw, data)
    return result
