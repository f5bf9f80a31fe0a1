"""Federated averaging across simulated stations, plus the centralized baseline.

Clients talk to the server only through :class:`ClientUpdate` messages
(serialized weights and a row count).  Datasets never leave a client.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .dataio import LabeledDataset
from .diffnet import SGD, Network, Tape, WeightBlob, bce_loss, deserialize_weights, mlp, serialize_weights
from .diffnet.layers import GaussianNoise
from .diffnet.optim import Optimizer
from .metrics import MetricsReport, evaluate, fmt
from .seeding import rng_for

HIDDEN = ((256, "relu"), (128, "relu"), (64, "relu"), (32, "relu"))


def build_classifier(
    input_dim: int,
    init_rng: np.random.Generator,
    noise_stddev: Optional[float] = None,
    noise_rng: Optional[np.random.Generator] = None,
) -> Network:
    """Dense 256-128-64-32-1 classifier; a Gaussian noise layer follows the
    first dense layer when ``noise_stddev`` is given (federated variant)."""
    spec: list = [HIDDEN[0]]
    if noise_stddev is not None:
        spec.append(("noise", noise_stddev))
    spec += [*HIDDEN[1:], (1, "sigmoid")]
    return mlp(input_dim, spec, init_rng, noise_rng=noise_rng)


def fit_epochs(
    net: Network,
    opt: Optimizer,
    data: LabeledDataset,
    epochs: int,
    batch_size: int,
    rng: np.random.Generator,
) -> list[float]:
    """Shuffled mini-batch training; returns the mean batch loss per epoch."""
    if len(data) == 0:
        raise ValueError("empty training set")
    net.train()
    params = net.parameters()
    y = data.labels.astype(np.float64).reshape(-1, 1)
    curve = []
    for _ in range(epochs):
        perm = rng.permutation(len(data))
        losses = []
        for start in range(0, len(data), batch_size):
            idx = perm[start : start + batch_size]
            with Tape() as tape:
                loss = bce_loss(net(data.features[idx]), y[idx])
            opt.step(params, tape.gradient(loss, params))
            losses.append(float(loss.value))
        curve.append(float(np.mean(losses)))
    return curve


@dataclass(frozen=True)
class FederationConfig:
    rounds: int = 10
    local_epochs: int = 3
    batch_size: int = 64
    learning_rate: float = 0.001
    momentum: float = 0.9
    noise_stddev: float = 0.01
    noise_in_eval: bool = False
    threshold: float = 0.5
    parallel_clients: int = 1

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.local_epochs < 0:
            raise ValueError("local_epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.noise_stddev < 0:
            raise ValueError("noise_stddev must be >= 0")


@dataclass(frozen=True)
class ClientUpdate:
    """The only message a client sends to the server."""

    station_id: Optional[str]
    blob: WeightBlob
    sample_count: int


@dataclass
class ClientState:
    station_id: str
    train: LabeledDataset
    val: LabeledDataset
    net: Network
    optimizer: Optimizer
    rng: np.random.Generator
    history: list[MetricsReport] = field(default_factory=list)
    train_losses: list[float] = field(default_factory=list)

    @property
    def sample_count(self) -> int:
        return len(self.train)


def make_client(
    station_id: str,
    train: LabeledDataset,
    val: LabeledDataset,
    cfg: FederationConfig,
    seed: int,
) -> ClientState:
    net = build_classifier(
        train.n_features,
        rng_for(seed, "init"),
        noise_stddev=cfg.noise_stddev,
        noise_rng=rng_for(seed, f"noise:{station_id}"),
    )
    if cfg.noise_in_eval:
        for layer in net.layers:
            if isinstance(layer, GaussianNoise):
                layer.active_in_eval = True
    return ClientState(
        station_id,
        train,
        val,
        net,
        SGD(cfg.learning_rate, cfg.momentum),
        rng_for(seed, f"shuffle:{station_id}"),
    )


class ClientError(RuntimeError):
    def __init__(self, station_id: str, cause: BaseException):
        super().__init__(f"station {station_id}: {cause}")
        self.station_id = station_id
        self.cause = cause


def local_train(
    client: ClientState, global_weights: WeightBlob, cfg: FederationConfig
) -> tuple[ClientUpdate, MetricsReport]:
    """Load the global weights, train locally, report on the validation split."""
    if client.sample_count == 0:
        raise ValueError(f"station {client.station_id}: empty local training set")
    deserialize_weights(global_weights, client.net)
    if cfg.local_epochs > 0:
        client.train_losses += fit_epochs(
            client.net, client.optimizer, client.train, cfg.local_epochs, cfg.batch_size, client.rng
        )
    report = evaluate(client.net, client.val, cfg.threshold)
    client.history.append(report)
    return ClientUpdate(client.station_id, serialize_weights(client.net), client.sample_count), report


def _canonical(updates) -> list[ClientUpdate]:
    out = []
    for u in updates:
        if not isinstance(u, ClientUpdate):
            blob, count = u
            u = ClientUpdate(None, blob, int(count))
        out.append(u)
    if all(u.station_id is not None for u in out):
        return sorted(out, key=lambda u: (u.station_id, u.blob.data, u.sample_count))
    return sorted(out, key=lambda u: (u.blob.data, u.sample_count))


def aggregate(updates: Sequence[Union[ClientUpdate, tuple]]) -> WeightBlob:
    """Sample-count weighted parameter mean (federated averaging).

    Summation runs in a canonical order (station id, else blob bytes) as
    a running mean ``m += n_i / N_i * (w_i - m)``: identical inputs come
    back bit-exact and the result does not depend on client order.
    """
    ups = _canonical(updates)
    if not ups:
        raise ValueError("no updates to aggregate")
    shapes = ups[0].blob.shapes()
    for u in ups[1:]:
        if u.blob.shapes() != shapes:
            raise ValueError(f"shape mismatch between client blobs ({u.station_id})")
    if any(u.sample_count < 0 for u in ups):
        raise ValueError("negative sample count")
    if sum(u.sample_count for u in ups) == 0:
        raise ValueError("zero total samples")
    mean = ups[0].blob.arrays()
    seen = ups[0].sample_count
    for u in ups[1:]:
        if u.sample_count == 0:
            continue
        seen += u.sample_count
        frac = u.sample_count / seen
        for m, w in zip(mean, u.blob.arrays()):
            m += frac * (w - m)
    return WeightBlob.from_arrays(mean)


@dataclass
class ServerState:
    global_weights: WeightBlob
    net: Network
    test_set: LabeledDataset
    total_rounds: int
    round: int = 0
    history: list[MetricsReport] = field(default_factory=list)


def make_server(input_dim: int, test_set: LabeledDataset, cfg: FederationConfig, seed: int) -> ServerState:
    net = build_classifier(input_dim, rng_for(seed, "init"), noise_stddev=cfg.noise_stddev)
    return ServerState(serialize_weights(net), net, test_set, cfg.rounds)


@dataclass
class FederationTrace:
    global_reports: list[tuple[int, MetricsReport]]
    local_reports: list[tuple[str, MetricsReport]]
    client_history: dict[str, list[MetricsReport]]
    final_weights: WeightBlob

    def rounds_csv(self) -> str:
        return _csv(ROUNDS_COLUMNS, [[r, *_four(rep)] for r, rep in self.global_reports])

    def locals_csv(self) -> str:
        return _csv(LOCALS_COLUMNS, [[sid, "val", *_four(rep)] for sid, rep in self.local_reports])


ROUNDS_COLUMNS = ("round", "loss", "accuracy", "auc", "g_mean")
LOCALS_COLUMNS = ("station_id", "split", "loss", "accuracy", "auc", "g_mean")


def _four(rep: MetricsReport) -> list:
    return [rep.loss, rep.accuracy, rep.auc, rep.g_mean]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def parse_metric_csv(text: str) -> list[dict]:
    """Read rounds.csv / locals.csv back; metric cells become floats or None."""
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rows.append({k: (v if k in ("station_id", "split") else (None if v == "" else float(v))) for k, v in r.items()})
    return rows


def _run_clients(fn, clients: list[ClientState], workers: int) -> list:
    def call(c):
        try:
            return fn(c)
        except Exception as exc:
            raise ClientError(c.station_id, exc) from exc

    if workers <= 1 or len(clients) == 1:
        return [call(c) for c in clients]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(call, clients))


def run_federation(server: ServerState, clients: list[ClientState], cfg: FederationConfig) -> FederationTrace:
    """Broadcast, train every client, aggregate, evaluate; repeat for each round."""
    if not clients:
        raise ValueError("federation needs at least one client")
    global_reports = []
    while server.round < server.total_rounds:
        weights = server.global_weights
        results = _run_clients(lambda c: local_train(c, weights, cfg), clients, cfg.parallel_clients)
        server.global_weights = aggregate([u for u, _ in results])
        server.round += 1
        deserialize_weights(server.global_weights, server.net)
        rep = evaluate(server.net, server.test_set, cfg.threshold)
        server.history.append(rep)
        global_reports.append((server.round, rep))

    def final_eval(c: ClientState) -> tuple[str, MetricsReport]:
        deserialize_weights(server.global_weights, c.net)
        return c.station_id, evaluate(c.net, c.val, cfg.threshold)

    local_reports = _run_clients(final_eval, clients, cfg.parallel_clients)
    return FederationTrace(
        global_reports,
        local_reports,
        {c.station_id: list(c.history) for c in clients},
        server.global_weights,
    )


@dataclass(frozen=True)
class CentralizedConfig:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 0.001
    momentum: float = 0.9
    threshold: float = 0.5


@dataclass
class CentralizedResult:
    station_id: str
    report: MetricsReport
    curve: list[float]
    net: Network


def run_centralized(
    station_id: str,
    train: LabeledDataset,
    test: LabeledDataset,
    cfg: CentralizedConfig,
    seed: int,
) -> CentralizedResult:
    """Train one station's classifier alone (no noise layer) and test it."""
    if len(train) == 0:
        raise ValueError(f"station {station_id}: empty dataset")
    net = build_classifier(train.n_features, rng_for(seed, "init"))
    opt = SGD(cfg.learning_rate, cfg.momentum)
    curve = fit_epochs(net, opt, train, cfg.epochs, cfg.batch_size, rng_for(seed, f"shuffle:{station_id}"))
    return CentralizedResult(station_id, evaluate(net, test, cfg.threshold), curve, net)
