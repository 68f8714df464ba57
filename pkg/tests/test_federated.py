import math

import numpy as np
import pytest

from dpflbench import seeding
from dpflbench.data import ClientShard, featurize_corpus, partition_iid, synth_corpus
from dpflbench.dp import DpBudget
from dpflbench.errors import AggregationError, ValidationError
from dpflbench.federated import (
    ClientState,
    ClientUpdate,
    FlConfig,
    fedavg,
    format_round_history,
    local_update,
    run_federated,
    select_clients,
)
from dpflbench.models import ModelSpec, init_model, train_sgd


def test_select_clients_example():
    picked = select_clients(10, 0.5, np.random.default_rng(0))
    assert len(picked) == 5 and len(set(picked)) == 5
    assert list(picked) == sorted(picked) and all(0 <= c < 10 for c in picked)


def test_select_all_clients_in_order():
    assert select_clients(7, 1.0, np.random.default_rng(0)) == tuple(range(7))


def test_select_rounds_up_and_rejects_bad_fraction():
    assert len(select_clients(10, 0.05, np.random.default_rng(0))) == 1
    assert len(select_clients(10, 0.31, np.random.default_rng(0))) == 4
    with pytest.raises(ValidationError):
        select_clients(10, 0.0, np.random.default_rng(0))


def test_selection_frequency_is_uniform():
    rng = np.random.default_rng(1)
    counts = np.zeros(10)
    for _ in range(10_000):
        counts[list(select_clients(10, 0.5, rng))] += 1
    assert np.all(np.abs(counts / 10_000 - 0.5) <= 0.02)


def _update(params, n=1, cid=0):
    return ClientUpdate(cid, np.asarray(params, dtype=np.float64), n)


def test_fedavg_identical_updates_exact():
    p = np.random.default_rng(0).normal(size=13)
    out = fedavg([_update(p, n) for n in (3, 5, 11)])
    assert out.tobytes() == p.tobytes()


def test_fedavg_single_update_exact():
    p = np.random.default_rng(1).normal(size=5)
    assert fedavg([_update(p, 17)]).tobytes() == p.tobytes()


def test_fedavg_examples():
    p = np.array([0.5, -2.0, 3.25])
    np.testing.assert_allclose(fedavg([_update(p), _update(-p)]), 0.0, atol=1e-15)
    assert fedavg([_update([0.0], 1), _update([4.0], 3)])[0] == pytest.approx(3.0, abs=1e-15)


def test_fedavg_equal_weights_is_mean_and_convex():
    rng = np.random.default_rng(2)
    for _ in range(200):
        k, d = int(rng.integers(1, 8)), int(rng.integers(1, 20))
        ps = rng.normal(scale=10, size=(k, d))
        ns = rng.integers(1, 100, size=k)
        out = fedavg([_update(ps[i], int(ns[i])) for i in range(k)])
        assert np.all(out >= ps.min(axis=0)) and np.all(out <= ps.max(axis=0))
        np.testing.assert_allclose(out, (ns @ ps) / ns.sum(), rtol=1e-12, atol=1e-12)
        eq = fedavg([_update(ps[i], 4) for i in range(k)])
        np.testing.assert_allclose(eq, ps.mean(axis=0), rtol=1e-12, atol=1e-12)


def test_fedavg_errors():
    with pytest.raises(AggregationError):
        fedavg([])
    with pytest.raises(AggregationError):
        fedavg([_update([1.0, 2.0]), _update([1.0])])
    with pytest.raises(AggregationError):
        fedavg([_update([1.0], 0)])


@pytest.fixture(scope="module")
def small_task():
    corpus = synth_corpus(600, 2, 32, 6.0, seed=3)
    x = featurize_corpus(corpus, 256)
    y = corpus.labels
    return x[:500], y[:500], x[500:], y[500:]


def test_local_update_noiseless_equals_plain_sgd(small_task):
    x, y, _, _ = small_task
    shard = ClientShard(2, np.arange(100, 200))
    spec = ModelSpec("linear", x.shape[1], 2)
    m0 = init_model(spec, 0)
    state = ClientState.for_round(shard, 7, 3)
    plain_cfg = FlConfig(num_clients=5, batch_size=20, local_epochs=2, lr=0.3)
    dp_inf_cfg = FlConfig(num_clients=5, batch_size=20, local_epochs=2, lr=0.3, dp=DpBudget(math.inf, 1e-5))
    a = local_update(m0, state, x, y, plain_cfg)
    b = local_update(m0, state, x, y, dp_inf_cfg)
    ref = train_sgd(m0, x[100:200], y[100:200], 0.3, 2, 20, seeding.client_stream(7, 2, 3))
    assert a.params.tobytes() == ref.params.tobytes()
    assert b.params.tobytes() == ref.params.tobytes()
    assert a.num_examples == 100


def test_empty_shard_rejected():
    with pytest.raises(ValidationError):
        ClientState.for_round(ClientShard(0, np.arange(0)), 0, 0)


def test_single_client_equals_centralized(small_task):
    x, y, tx, ty = small_task
    spec = ModelSpec("linear", x.shape[1], 2)
    cfg = FlConfig(num_clients=1, fraction=1.0, rounds=1, local_epochs=3, batch_size=25, lr=0.4)
    fl_model, _ = run_federated([ClientShard(0, np.arange(len(y)))], x, y, tx, ty, spec, cfg, master_seed=11)
    central = train_sgd(init_model(spec, seeding.derive_seed(11, seeding.INIT)), x, y, 0.4, 3, 25, seeding.client_stream(11, 0, 0))
    assert fl_model.params.tobytes() == central.params.tobytes()


@pytest.mark.parametrize("dp", [None, DpBudget(2.0, 1e-5)])
def test_parallel_equals_serial(small_task, dp):
    x, y, tx, ty = small_task
    spec = ModelSpec("linear", x.shape[1], 2)
    shards = partition_iid(len(y), 6, 0)
    cfg = FlConfig(num_clients=6, fraction=0.5, rounds=4, batch_size=16, dp=dp)
    serial, h1 = run_federated(shards, x, y, tx, ty, spec, cfg, 5, workers=1)
    threaded, h2 = run_federated(shards, x, y, tx, ty, spec, cfg, 5, workers=4)
    assert serial.params.tobytes() == threaded.params.tobytes()
    assert format_round_history(h1) == format_round_history(h2)


def test_identical_shards_are_symmetric(small_task):
    x, y, tx, ty = small_task
    spec = ModelSpec("linear", x.shape[1], 2)
    # clients carry the same data; swapping ids only changes which stream each uses
    shards = [ClientShard(c, np.arange(200)) for c in range(3)]
    cfg = FlConfig(num_clients=3, fraction=1.0, rounds=1, batch_size=200, lr=0.3)
    model, _ = run_federated(shards, x, y, tx, ty, spec, cfg, 0)
    # full-batch local steps ignore the shuffle, so all clients agree exactly
    start = init_model(spec, seeding.derive_seed(0, seeding.INIT))
    ref = train_sgd(start, x[:200], y[:200], 0.3, 1, 200, np.random.default_rng(0))
    np.testing.assert_allclose(model.params, ref.params, rtol=0, atol=1e-15)


def test_iid_federation_learns():
    corpus = synth_corpus(2500, 2, 512, 7.0, seed=0)
    x, y = featurize_corpus(corpus, 1024), corpus.labels
    spec = ModelSpec("linear", 1024, 2)
    shards = partition_iid(2000, 10, 1)
    cfg = FlConfig(num_clients=10, fraction=0.5, rounds=30, batch_size=32, lr=0.5)
    _, history = run_federated(shards, x[:2000], y[:2000], x[2000:], y[2000:], spec, cfg, 2)
    assert history[-1].accuracy >= 0.90


def test_privacy_bookkeeping(small_task):
    x, y, tx, ty = small_task
    spec = ModelSpec("linear", x.shape[1], 2)
    shards = partition_iid(len(y), 4, 0)
    cfg = FlConfig(num_clients=4, fraction=0.5, rounds=6, batch_size=25, dp=DpBudget(3.0, 1e-5))
    _, history = run_federated(shards, x, y, tx, ty, spec, cfg, 9)
    last = {}
    for rec in history:
        assert set(rec.privacy) == set(rec.selected)
        for cid, spent in rec.privacy.items():
            assert spent.epsilon > last.get(cid, 0.0)
            assert spent.epsilon <= 3.0 + 1e-9
            last[cid] = spent.epsilon
    text = format_round_history(history)
    lines = text.splitlines()
    assert lines[0] == "round,clients,accuracy,epsilon"
    assert len(lines) == 7


def test_config_validation():
    with pytest.raises(ValidationError):
        FlConfig(fraction=1.5)
    with pytest.raises(ValidationError):
        FlConfig(rounds=0)
    assert FlConfig(num_clients=10, fraction=0.5).clients_per_round == 5
    assert FlConfig(num_clients=10, fraction=0.3).clients_per_round == 3


def test_shard_count_mismatch(small_task):
    x, y, tx, ty = small_task
    spec = ModelSpec("linear", x.shape[1], 2)
    with pytest.raises(ValidationError):
        run_federated(partition_iid(len(y), 3, 0), x, y, tx, ty, spec, FlConfig(num_clients=4), 0)
