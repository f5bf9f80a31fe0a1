"""The end-to-end pipeline behind ``fedimb run``.

ingest -> split -> clean -> scale -> augment -> train -> evaluate -> write.
Every random draw comes from a generator keyed by the master seed and a
component tag, so a run is fully determined by its resolved config.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import __version__
from .augment import AugmentConfig, SmoteConfig, TrainedGenerator, balance_with_details
from .config import ExperimentConfig, config_to_dict
from .dataio import (
    CleaningReport,
    LabeledDataset,
    StationPartition,
    apply_scaling,
    clean,
    fit_minmax,
    load_csv,
    make_blobs,
    partition_rows,
    split,
    table1_partitions,
)
from .fedsim import (
    FederationTrace,
    make_client,
    make_server,
    run_centralized,
    run_federation,
)
from .metrics import REPORT_COLUMNS, MetricsReport, fmt, mean_report_values, report_row
from .seeding import derive_seed, rng_for

SUMMARY_LABELS = {
    "none": "Imbalanced",
    "cgan": "CGANs",
    "smote": "SMOTE",
    "gan_minority": "Minority GANs",
    "smote_gan": "SMOTE GANs",
    "wgan_gp": "WGANs-GP",
}
# row order of the comparison table
TABLE_ORDER = ("none", "cgan", "smote", "gan_minority", "smote_gan", "wgan_gp")
SUMMARY_COLUMNS = ("Model", "Accuracy", "Loss", "AUC", "G-mean")
STATION_COLUMNS = ("Model", "station_id", "split", "Accuracy", "Loss", "AUC", "G-mean")
MANIFEST_NAME = "manifest.json"


class StageError(RuntimeError):
    """A failure tagged with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PreparedStation:
    station_id: str
    train: LabeledDataset
    val: LabeledDataset
    test: LabeledDataset
    cleaning: CleaningReport
    generator: Optional[TrainedGenerator] = None


@dataclass
class RunResult:
    config: ExperimentConfig
    out_dir: Path
    summary: dict[str, Optional[float]]  # loss, accuracy, auc, g_mean
    stations: list[PreparedStation]
    station_reports: list[tuple[str, str, MetricsReport]]  # (station, split, report)
    trace: Optional[FederationTrace] = None
    files: list[str] = field(default_factory=list)


def _stage(name: str, fn: Callable, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def component_seeds(cfg: ExperimentConfig, station_ids: list[str]) -> dict[str, str]:
    """Every derived seed the run uses, as hex strings (JSON has no u64)."""
    s = cfg.experiment.seed
    tags = ["init", "blobs", "partition", "table1"]
    for sid in station_ids:
        tags += [f"split:{sid}", f"augment:{sid}", f"shuffle:{sid}", f"noise:{sid}"]
    out = {t: f"{derive_seed(s, t):016x}" for t in tags}
    for sid in station_ids:
        out[f"split:{sid}"] = f"{derive_seed(s, f'split:{sid}', cfg.split.seed):016x}"
    return out


def load_stations(cfg: ExperimentConfig) -> list[StationPartition]:
    seed = cfg.experiment.seed
    src = cfg.data.source
    if src == "csv":
        return load_csv(cfg.data.path, cfg.schema)
    if src == "table1":
        return table1_partitions(len(cfg.schema.feature_columns), derive_seed(seed, "table1"), cfg.data.table1_scale)
    b = cfg.blobs
    n_pos = int(round(b.n_rows * b.minority_ratio))
    data = make_blobs(
        (b.n_rows - n_pos, n_pos),
        b.dims,
        means=(b.mean_negative, b.mean_positive),
        stddev=b.stddev,
        seed=derive_seed(seed, "blobs"),
    )
    return partition_rows(data, b.stations, derive_seed(seed, "partition"))


def prepare_station(cfg: ExperimentConfig, part: StationPartition) -> PreparedStation:
    """Split, impute with training medians, min-max scale on the training split."""
    sid = part.station_id
    labeled = part.dataset.subset(part.dataset.labels >= 0)
    spec = dataclasses.replace(cfg.split, seed=derive_seed(cfg.experiment.seed, f"split:{sid}", cfg.split.seed))
    raw_train, raw_val, raw_test = split(labeled, spec)
    train, report = clean(raw_train)
    report.rows_dropped = len(part.dataset) - len(labeled)
    val, _ = clean(raw_val, reference=raw_train)
    test, _ = clean(raw_test, reference=raw_train)
    params = fit_minmax(train)
    return PreparedStation(sid, apply_scaling(train, params), apply_scaling(val, params), apply_scaling(test, params), report)


def augment_station(cfg: ExperimentConfig, st: PreparedStation) -> None:
    aug = AugmentConfig(
        smote=SmoteConfig(cfg.smote.k_neighbors),
        gan=cfg.gan.to_gan_config(),
        smote_gan_keep_smote=cfg.gan.smote_gan_keep_smote,
    )
    rng = rng_for(cfg.experiment.seed, f"augment:{st.station_id}")
    outcome = balance_with_details(st.train, cfg.experiment.method, aug, rng)
    st.train = outcome.dataset
    st.generator = outcome.generator


def write_manifest(path: Path, cfg: ExperimentConfig, station_ids: list[str], files: list[str], **extra) -> None:
    doc = {
        "tool": "fedimb",
        "version": __version__,
        "config": config_to_dict(cfg),
        "seeds": component_seeds(cfg, station_ids),
        "files": files,
        **extra,
    }
    if cfg.data.source == "csv":
        doc["data_sha256"] = hashlib.sha256(Path(cfg.data.path).read_bytes()).hexdigest()
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def summary_row(method: str, values: dict) -> list:
    return [SUMMARY_LABELS[method], values["accuracy"], values["loss"], values["auc"], values["g_mean"]]


def _curve_csv(values: list[float]) -> str:
    return _table(("epoch", "loss"), [[i + 1, v] for i, v in enumerate(values)])


def run_experiment(
    cfg: ExperimentConfig,
    out_dir,
    log: Callable[[str], None] = lambda msg: None,
) -> RunResult:
    """Execute one configured run and write every output under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.experiment.seed
    method = cfg.experiment.method
    mode = cfg.experiment.mode

    parts = _stage("ingest", load_stations, cfg)
    log(f"loaded {len(parts)} station(s) from {cfg.data.source}")
    stations = [_stage(f"prepare:{p.station_id}", prepare_station, cfg, p) for p in parts]
    ids = [s.station_id for s in stations]

    files = ["summary.csv", "reports.csv", "cleaning.txt"]
    files += ["rounds.csv", "locals.csv"] if mode == "federated" else []
    files += [f"curves/{'client' if mode == 'federated' else 'train'}_{sid}.csv" for sid in ids]
    if method not in ("none", "smote"):
        files += [f"curves/gan_{sid}.csv" for sid in ids]
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    write_manifest(out / MANIFEST_NAME, cfg, ids, files, started=started, finished=None)

    for st in stations:
        _stage(f"augment:{st.station_id}", augment_station, cfg, st)
        pos, neg = st.train.counts()
        log(f"station {st.station_id}: {method} -> {pos} rain / {neg} no-rain training rows")

    (out / "curves").mkdir(exist_ok=True)
    written: list[str] = []

    def emit(rel: str, text: str) -> None:
        (out / rel).write_text(text, encoding="utf-8")
        written.append(rel)

    report_rows: list = []
    station_reports: list = []
    trace = None
    if mode == "federated":
        fcfg = cfg.federation
        clients = [make_client(s.station_id, s.train, s.val, fcfg, seed) for s in stations]
        test = LabeledDataset.concat([s.test for s in stations])
        server = make_server(stations[0].train.n_features, test, fcfg, seed)
        trace = _stage("federate", run_federation, server, clients, fcfg)
        final = trace.global_reports[-1][1]
        summary = {k: getattr(final, k) for k in ("loss", "accuracy", "auc", "g_mean")}
        for r, rep in trace.global_reports:
            report_rows.append(report_row(rep, "global", None, r))
            log(f"round {r}: loss={fmt(rep.loss)} acc={fmt(rep.accuracy)} g_mean={fmt(rep.g_mean)}")
        for sid, rep in trace.local_reports:
            report_rows.append(report_row(rep, "local_val", sid, fcfg.rounds))
            station_reports.append((sid, "val", rep))
        emit("rounds.csv", trace.rounds_csv())
        emit("locals.csv", trace.locals_csv())
        for c in clients:
            emit(f"curves/client_{c.station_id}.csv", _curve_csv(c.train_losses))
    else:
        reps = []
        for st in stations:
            res = _stage(f"train:{st.station_id}", run_centralized, st.station_id, st.train, st.test, cfg.centralized, seed)
            reps.append(res.report)
            report_rows.append(report_row(res.report, "station_test", st.station_id, None))
            station_reports.append((st.station_id, "test", res.report))
            emit(f"curves/train_{st.station_id}.csv", _curve_csv(res.curve))
            log(f"station {st.station_id}: g_mean={fmt(res.report.g_mean)}")
        summary = mean_report_values(reps)

    for st in stations:
        if st.generator is not None:
            emit(f"curves/gan_{st.station_id}.csv", st.generator.curves_csv())
    emit("summary.csv", _table(SUMMARY_COLUMNS, [summary_row(method, summary)]))
    emit("reports.csv", _table(REPORT_COLUMNS, report_rows))
    cleaning = "".join(f"station {st.station_id}: {st.cleaning.text(cfg.schema.feature_columns)}\n" for st in stations)
    emit("cleaning.txt", cleaning)

    finished = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    files = sorted(written)
    write_manifest(out / MANIFEST_NAME, cfg, ids, files, started=started, finished=finished)
    return RunResult(cfg, out, summary, stations, station_reports, trace, files)


def load_manifest_config(path) -> ExperimentConfig:
    from .config import ConfigError, config_from_dict

    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return config_from_dict(doc["config"])
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: not a readable run manifest ({exc})") from None
