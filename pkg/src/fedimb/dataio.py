"""Ingestion, cleaning, scaling and splitting of per-station tabular data."""

from __future__ import annotations

import configparser
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass
class LabeledDataset:
    """Feature matrix plus binary labels (1 = rain = minority).

    ``synthetic`` flags rows produced by an augmentation method.  Labels
    of -1 mark a missing target and only exist before :func:`clean`.
    """

    features: np.ndarray
    labels: np.ndarray
    synthetic: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features.reshape(-1, 1)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.synthetic is None:
            self.synthetic = np.zeros(len(self.labels), dtype=bool)
        self.synthetic = np.asarray(self.synthetic, dtype=bool).reshape(-1)
        if not (self.features.shape[0] == len(self.labels) == len(self.synthetic)):
            raise DataError("features, labels and provenance differ in row count")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def counts(self) -> tuple[int, int]:
        """(positives, negatives)."""
        pos = int(np.sum(self.labels == 1))
        return pos, int(np.sum(self.labels == 0))

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.features[idx].copy(), self.labels[idx].copy(), self.synthetic[idx].copy())

    def copy(self) -> "LabeledDataset":
        return self.subset(np.arange(len(self)))

    @staticmethod
    def concat(parts: Sequence["LabeledDataset"]) -> "LabeledDataset":
        return LabeledDataset(
            np.concatenate([p.features for p in parts], axis=0),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.synthetic for p in parts]),
        )


# --- schema -------------------------------------------------------------------

# Numeric columns of the public BOM daily-observation extract.
DEFAULT_FEATURES = (
    "MinTemp", "MaxTemp", "Rainfall", "Evaporation", "Sunshine", "WindGustSpeed",
    "WindSpeed9am", "WindSpeed3pm", "Humidity9am", "Humidity3pm", "Pressure9am",
    "Pressure3pm", "Temp3pm",
)


@dataclass(frozen=True)
class Schema:
    station_column: str = "Station"
    feature_columns: tuple[str, ...] = DEFAULT_FEATURES
    label_column: str = "RainTomorrow"
    positive_label_values: frozenset[str] = frozenset({"Yes", "1"})
    negative_label_values: frozenset[str] = frozenset({"No", "0"})

    def __post_init__(self):
        if not self.feature_columns:
            raise DataError("schema needs at least one feature column")
        if len(set(self.feature_columns)) != len(self.feature_columns):
            raise DataError("duplicate feature columns in schema")
        if self.positive_label_values & self.negative_label_values:
            raise DataError("a label value cannot be both positive and negative")


def _split_list(s: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in s.split(",") if x.strip())


def schema_from_mapping(m: dict) -> Schema:
    known = {"station_column", "feature_columns", "label_column", "positive_label_values", "negative_label_values"}
    unknown = set(m) - known
    if unknown:
        raise DataError(f"unknown schema keys: {sorted(unknown)}")
    kw: dict = {}
    if "station_column" in m:
        kw["station_column"] = m["station_column"]
    if "label_column" in m:
        kw["label_column"] = m["label_column"]
    if "feature_columns" in m:
        kw["feature_columns"] = _split_list(m["feature_columns"])
    for k in ("positive_label_values", "negative_label_values"):
        if k in m:
            kw[k] = frozenset(_split_list(m[k]))
    return Schema(**kw)


def load_schema(path) -> Schema:
    """Read a ``[schema]`` section from a key = value file."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if not cp.read(path, encoding="utf-8"):
        raise DataError(f"cannot read schema file {path}")
    if "schema" not in cp:
        raise DataError(f"{path}: missing [schema] section")
    return schema_from_mapping(dict(cp["schema"]))


# --- stations -----------------------------------------------------------------


def imbalance_ratio(minority: int, majority: int) -> float:
    """Minority share of all observations."""
    if minority < 0 or majority < 0:
        raise ValueError("counts must be non-negative")
    if minority + majority == 0:
        raise ValueError("no observations")
    return minority / (minority + majority)


def round_half_up(x: float, ndigits: int = 2) -> float:
    q = 10**ndigits
    return math.floor(x * q + 0.5) / q


@dataclass
class StationPartition:
    station_id: str
    dataset: LabeledDataset

    @property
    def counts(self) -> tuple[int, int]:
        """(minority, majority) = (rain, no-rain)."""
        return self.dataset.counts()

    @property
    def imbalance_ratio(self) -> float:
        return imbalance_ratio(*self.counts)


# Station, region, rain, no rain, published ratio.
TABLE1 = (
    (1, "Australian Capital Territory", 2016, 7307, 0.22),
    (2, "Australia Offshore Islands", 919, 2045, 0.31),
    (3, "New South Wales", 9305, 32027, 0.23),
    (4, "Northern Territory", 1361, 6421, 0.17),
    (5, "Queensland", 3513, 11600, 0.23),
    (6, "South Australia", 2402, 9710, 0.20),
    (7, "Tasmania", 1460, 4756, 0.23),
    (8, "Victoria", 7217, 23814, 0.23),
    (9, "Western Australia", 3568, 11231, 0.24),
)
TABLE1_TOTAL = 140672


def load_csv(path, schema: Schema) -> list[StationPartition]:
    """Read a CSV into per-station partitions, in order of first appearance.

    Empty cells are missing: NaN for features, label -1 for the target.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        col = {name: i for i, name in enumerate(header)}
        needed = [schema.station_column, schema.label_column, *schema.feature_columns]
        missing = [c for c in needed if c not in col]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}")
        s_idx, y_idx = col[schema.station_column], col[schema.label_column]
        f_idx = [col[c] for c in schema.feature_columns]
        rows: dict[str, tuple[list, list]] = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(rec)} fields, header has {len(header)}")
            token = rec[y_idx].strip()
            if token == "":
                label = -1
            elif token in schema.positive_label_values:
                label = 1
            elif token in schema.negative_label_values:
                label = 0
            else:
                raise DataError(f"{path}: row {lineno}: unmappable label {token!r}")
            feats = []
            for i in f_idx:
                cell = rec[i].strip()
                if cell == "" or cell.upper() == "NA":
                    feats.append(math.nan)
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: row {lineno}: non-numeric value {cell!r} in {header[i]}") from None
            xs, ys = rows.setdefault(rec[s_idx], ([], []))
            xs.append(feats)
            ys.append(label)
    if not rows:
        raise DataError(f"{path}: no data rows")
    d = len(schema.feature_columns)
    return [
        StationPartition(sid, LabeledDataset(np.array(xs, dtype=np.float64).reshape(-1, d), np.array(ys)))
        for sid, (xs, ys) in rows.items()
    ]


def write_csv(path, partitions: Iterable[StationPartition], schema: Schema) -> None:
    """Inverse of :func:`load_csv` (used for fixtures and exports)."""
    pos = sorted(schema.positive_label_values)[0]
    neg = sorted(schema.negative_label_values)[0]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([schema.station_column, *schema.feature_columns, schema.label_column])
        for p in partitions:
            for x, y in zip(p.dataset.features, p.dataset.labels):
                cells = ["" if math.isnan(v) else repr(float(v)) for v in x]
                label = "" if y < 0 else (pos if y == 1 else neg)
                w.writerow([p.station_id, *cells, label])


# --- cleaning -------------------------------------------------------------------


@dataclass
class CleaningReport:
    rows_dropped: int = 0
    cells_imputed: dict[int, int] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return self.rows_dropped == 0 and not self.cells_imputed

    def text(self, columns: Optional[Sequence[str]] = None) -> str:
        lines = [f"rows dropped (missing label): {self.rows_dropped}"]
        for j, n in sorted(self.cells_imputed.items()):
            name = columns[j] if columns else f"feature {j}"
            lines.append(f"imputed {n} cell(s) in {name}")
        return "\n".join(lines) + "\n"


def clean(data: LabeledDataset, reference: Optional[LabeledDataset] = None) -> tuple[LabeledDataset, CleaningReport]:
    """Drop rows without a label and impute missing features with medians.

    Medians come from ``reference`` (the training split) when given,
    otherwise from ``data`` itself.
    """
    report = CleaningReport()
    keep = data.labels >= 0
    report.rows_dropped = int(np.sum(~keep))
    out = data.subset(np.flatnonzero(keep))
    ref = out if reference is None else reference
    missing = np.isnan(out.features)
    if missing.any():
        ref_x = ref.features[ref.labels >= 0] if reference is not None else ref.features
        for j in np.flatnonzero(missing.any(axis=0)):
            col = ref_x[:, j]
            col = col[~np.isnan(col)]
            if col.size == 0:
                raise DataError(f"feature {j} is entirely missing")
            out.features[missing[:, j], j] = np.median(col)
            report.cells_imputed[int(j)] = int(missing[:, j].sum())
    return out, report


# --- scaling --------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingParams:
    minimum: np.ndarray
    maximum: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.maximum <= self.minimum

    def transform(self, x: np.ndarray, clamp: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        span = np.where(self.constant, 1.0, self.maximum - self.minimum)
        out = (x - self.minimum) / span
        out = np.where(self.constant, 0.5, out)
        return np.clip(out, 0.0, 1.0) if clamp else out

    def inverse_transform(self, x: np.ndarray) -> np.ndarray:
        span = np.where(self.constant, 0.0, self.maximum - self.minimum)
        return np.asarray(x, dtype=np.float64) * span + self.minimum

    def to_dict(self) -> dict:
        return {"min": self.minimum.tolist(), "max": self.maximum.tolist()}


def fit_minmax(train: LabeledDataset) -> ScalingParams:
    if len(train) == 0:
        raise DataError("cannot fit scaling on an empty split")
    lo = train.features.min(axis=0)
    hi = train.features.max(axis=0)
    if np.any(hi <= lo):
        log.warning("constant feature(s) %s map to 0.5", np.flatnonzero(hi <= lo).tolist())
    return ScalingParams(lo.copy(), hi.copy())


def apply_scaling(data: LabeledDataset, params: ScalingParams) -> LabeledDataset:
    return LabeledDataset(params.transform(data.features), data.labels.copy(), data.synthetic.copy())


def scale_minmax(train: LabeledDataset, *others: LabeledDataset) -> tuple[list[LabeledDataset], ScalingParams]:
    """Fit min-max on ``train`` and apply the same map to every split."""
    params = fit_minmax(train)
    return [apply_scaling(d, params) for d in (train, *others)], params


# --- splitting --------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if min(fr) <= 0:
            raise ValueError("split fractions must be positive")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder allocation of ``n`` items; ties go to earlier slots."""
    exact = [n * f for f in fractions]
    base = [int(math.floor(e + 1e-9)) for e in exact]
    rest = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


def split(data: LabeledDataset, spec: SplitSpec = SplitSpec()) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    rng = np.random.default_rng(spec.seed)
    fractions = (spec.train, spec.val, spec.test)
    groups = [np.flatnonzero(data.labels == c) for c in (0, 1)] if spec.stratified else [np.arange(len(data))]
    parts: list[list[np.ndarray]] = [[], [], []]
    for idx in groups:
        if spec.stratified and 0 < idx.size < 3:
            raise DataError(f"class with {idx.size} row(s) is too small to stratify")
        perm = rng.permutation(idx)
        sizes = allocate(idx.size, fractions)
        bounds = np.cumsum([0, *sizes])
        for k in range(3):
            parts[k].append(perm[bounds[k] : bounds[k + 1]])
    return tuple(data.subset(np.sort(np.concatenate(p))) for p in parts)  # type: ignore[return-value]


# --- synthetic fixtures -------------------------------------------------------------


def make_blobs(
    n_per_class: tuple[int, int],
    dims: int,
    means=(0.2, 0.8),
    stddev: float = 0.05,
    seed: int = 0,
) -> LabeledDataset:
    """Gaussian class blobs clipped to [0, 1]; ``n_per_class`` is (label 0, label 1)."""
    if dims < 1:
        raise ValueError("dims must be >= 1")
    if stddev <= 0:
        raise ValueError("stddev must be positive")
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for label, (n, m) in enumerate(zip(n_per_class, means)):
        center = np.broadcast_to(np.asarray(m, dtype=np.float64), (dims,))
        xs.append(np.clip(rng.normal(center, stddev, size=(n, dims)), 0.0, 1.0))
        ys.append(np.full(n, label))
    return LabeledDataset(np.concatenate(xs), np.concatenate(ys))


def partition_rows(data: LabeledDataset, n_stations: int, seed: int = 0) -> list[StationPartition]:
    """Deal rows to stations round-robin within each class after a seeded shuffle."""
    if n_stations < 1:
        raise ValueError("n_stations must be >= 1")
    rng = np.random.default_rng(seed)
    buckets: list[list[int]] = [[] for _ in range(n_stations)]
    for c in (0, 1):
        for k, i in enumerate(rng.permutation(np.flatnonzero(data.labels == c))):
            buckets[k % n_stations].append(int(i))
    return [StationPartition(str(s + 1), data.subset(np.sort(b))) for s, b in enumerate(buckets)]


def table1_partitions(n_features: int = 13, seed: int = 0, scale: float = 1.0) -> list[StationPartition]:
    """Blob data with the published per-station rain / no-rain counts.

    ``scale`` < 1 shrinks every count proportionally (at least 3 per class).
    """
    out = []
    for station, _region, rain, dry, _ in TABLE1:
        n_rain = rain if scale == 1.0 else max(3, int(round(rain * scale)))
        n_dry = dry if scale == 1.0 else max(3, int(round(dry * scale)))
        ds = make_blobs((n_dry, n_rain), n_features, means=(0.35, 0.65), stddev=0.15, seed=seed * 1000 + station)
        out.append(StationPartition(str(station), ds))
    return out
