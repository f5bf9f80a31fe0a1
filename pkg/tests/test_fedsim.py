import numpy as np
import pytest

from fedimb.dataio import make_blobs, partition_rows
from fedimb.diffnet import WeightBlob, serialize_weights
from fedimb.fedsim import (
    LOCALS_COLUMNS,
    ROUNDS_COLUMNS,
    CentralizedConfig,
    ClientError,
    ClientUpdate,
    FederationConfig,
    aggregate,
    build_classifier,
    local_train,
    make_client,
    make_server,
    parse_metric_csv,
    run_centralized,
    run_federation,
)

FAST = FederationConfig(rounds=2, local_epochs=1, batch_size=32)


def _blobs(n=200, seed=0):
    return make_blobs((n - n // 5, n // 5), 2, means=(0.3, 0.7), stddev=0.1, seed=seed)


def _federation(cfg=FAST, n_clients=3, seed=4):
    data = _blobs(300)
    parts = partition_rows(data, n_clients, seed=1)
    clients = [make_client(p.station_id, p.dataset, p.dataset, cfg, seed) for p in parts]
    return make_server(2, data, cfg, seed), clients


# --- aggregation ---------------------------------------------------------------------


def test_aggregate_single_client_identity():
    blob = serialize_weights(build_classifier(3, np.random.default_rng(0)))
    assert aggregate([ClientUpdate("1", blob, 17)]).data == blob.data


def test_aggregate_weighted_mean():
    z, f = WeightBlob.from_arrays([np.zeros((2, 2))]), WeightBlob.from_arrays([np.full((2, 2), 4.0)])
    assert aggregate([(z, 1), (f, 3)]).arrays()[0].tolist() == [[3.0, 3.0], [3.0, 3.0]]


def test_aggregate_errors():
    a = WeightBlob.from_arrays([np.zeros((2, 2))])
    b = WeightBlob.from_arrays([np.zeros((2, 3))])
    with pytest.raises(ValueError, match="shape"):
        aggregate([(a, 1), (b, 1)])
    with pytest.raises(ValueError, match="zero"):
        aggregate([(a, 0), (a, 0)])
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_skips_zero_count_client():
    a = WeightBlob.from_arrays([np.ones((1, 1))])
    b = WeightBlob.from_arrays([np.full((1, 1), 9.0)])
    assert aggregate([ClientUpdate("1", a, 5), ClientUpdate("2", b, 0)]).data == a.data


# --- clients -------------------------------------------------------------------------


def test_zero_local_epochs_returns_global_weights():
    cfg = FederationConfig(rounds=1, local_epochs=0)
    data = _blobs()
    client = make_client("1", data, data, cfg, 0)
    glob = serialize_weights(build_classifier(2, np.random.default_rng(9)))
    update, _ = local_train(client, glob, cfg)
    assert update.blob.data == glob.data and update.sample_count == len(data)


def test_local_train_is_deterministic():
    data = _blobs()
    glob = serialize_weights(build_classifier(2, np.random.default_rng(9), noise_stddev=0.01))
    a, _ = local_train(make_client("1", data, data, FAST, 3), glob, FAST)
    b, _ = local_train(make_client("1", data, data, FAST, 3), glob, FAST)
    assert a.blob.data == b.blob.data != glob.data


def test_update_fits_classifier_shape():
    data = make_blobs((40, 10), 13, seed=0)
    update, _ = local_train(make_client("1", data, data, FAST, 0), make_server(13, data, FAST, 0).global_weights, FAST)
    assert sum(r * c for r, c in update.blob.shapes()) == 46849


def test_empty_client_is_named():
    server, clients = _federation()
    clients[1].train = clients[1].train.subset(np.array([], dtype=int))
    with pytest.raises(ClientError, match=f"station {clients[1].station_id}"):
        run_federation(server, clients, FAST)


# --- federation ----------------------------------------------------------------------


def test_trace_shape_and_csv_round_trip():
    server, clients = _federation()
    trace = run_federation(server, clients, FAST)
    assert [r for r, _ in trace.global_reports] == [1, 2]
    assert [sid for sid, _ in trace.local_reports] == ["1", "2", "3"]
    rounds = parse_metric_csv(trace.rounds_csv())
    assert tuple(rounds[0]) == ROUNDS_COLUMNS
    for row, (_, rep) in zip(rounds, trace.global_reports):
        assert (row["loss"], row["accuracy"], row["auc"], row["g_mean"]) == (rep.loss, rep.accuracy, rep.auc, rep.g_mean)
    locals_ = parse_metric_csv(trace.locals_csv())
    assert tuple(locals_[0]) == LOCALS_COLUMNS
    assert [r["g_mean"] for r in locals_] == [rep.g_mean for _, rep in trace.local_reports]


def test_parallel_clients_match_sequential():
    s1, c1 = _federation()
    seq = run_federation(s1, c1, FAST)
    par_cfg = FederationConfig(rounds=2, local_epochs=1, batch_size=32, parallel_clients=3)
    s2, c2 = _federation(par_cfg)
    par = run_federation(s2, c2, par_cfg)
    assert seq.final_weights.data == par.final_weights.data


def test_federation_is_deterministic():
    a = run_federation(*_federation(), FAST)
    b = run_federation(*_federation(), FAST)
    assert a.final_weights.data == b.final_weights.data


def test_federation_config_validation():
    with pytest.raises(ValueError):
        FederationConfig(rounds=0)
    with pytest.raises(ValueError):
        FederationConfig(noise_stddev=-0.1)


# --- centralized ---------------------------------------------------------------------


def test_centralized_learns_separable_task():
    data = make_blobs((300, 300), 2, means=(0.2, 0.8), stddev=0.05, seed=1)
    res = run_centralized("1", data, data, CentralizedConfig(epochs=30, learning_rate=0.05), 0)
    assert res.report.accuracy > 0.95
    assert len(res.curve) == 30


def test_centralized_threshold_on_feature_zero():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(600, 2))
    from fedimb.dataio import LabeledDataset

    data = LabeledDataset(x, (x[:, 0] > 0.5).astype(int))
    res = run_centralized("1", data, data, CentralizedConfig(epochs=60, learning_rate=0.05), 0)
    assert res.report.accuracy > 0.95


def test_centralized_is_deterministic():
    data = _blobs()
    a = run_centralized("1", data, data, CentralizedConfig(epochs=2), 5)
    b = run_centralized("1", data, data, CentralizedConfig(epochs=2), 5)
    assert serialize_weights(a.net).data == serialize_weights(b.net).data
    assert a.net.n_parameters() == 2 * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64 + 64 * 32 + 32 + 32 + 1
