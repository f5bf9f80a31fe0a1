from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from ..dataio import LabeledDataset


@dataclass(frozen=True)
class SmoteConfig:
    k_neighbors: int = 5
    # None balances the classes; an int requests that many rows
    n_samples: Optional[int] = None

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.n_samples is not None and self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")


def minority_label(data: LabeledDataset) -> int:
    pos, neg = data.counts()
    return 1 if pos <= neg else 0


def deficit(data: LabeledDataset) -> int:
    """Rows the minority class is short of the majority."""
    pos, neg = data.counts()
    return abs(neg - pos)


def nearest_neighbors(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of each point's ``k`` nearest other points (Euclidean)."""
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k + 1)
    idx = np.atleast_2d(idx)
    out = np.empty((len(points), k), dtype=np.int64)
    for i, row in enumerate(idx):
        others = row[row != i]
        out[i] = others[:k]
    return out


def smote_points(minority: np.ndarray, n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Interpolate ``n`` points between minority rows and their k nearest neighbours."""
    m = len(minority)
    if m <= k:
        raise ValueError(f"minority class has {m} rows; SMOTE needs more than k={k}")
    if n == 0:
        return np.empty((0, minority.shape[1]))
    nn = nearest_neighbors(minority, k)
    base = rng.integers(0, m, size=n)
    pick = nn[base, rng.integers(0, k, size=n)]
    gap = rng.uniform(0.0, 1.0, size=(n, 1))
    x = minority[base]
    return x + gap * (minority[pick] - x)


def smote(data: LabeledDataset, cfg: SmoteConfig, rng: np.random.Generator) -> LabeledDataset:
    """Synthetic minority rows, labeled minority and flagged synthetic."""
    label = minority_label(data)
    n = deficit(data) if cfg.n_samples is None else cfg.n_samples
    rows = smote_points(data.features[data.labels == label], n, cfg.k_neighbors, rng)
    return LabeledDataset(rows, np.full(len(rows), label), np.ones(len(rows), dtype=bool))
