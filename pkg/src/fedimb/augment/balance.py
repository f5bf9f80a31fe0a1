from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..dataio import LabeledDataset
from .gan import GanConfig, TrainedGenerator, train_cgan, train_gan, train_wgan_gp
from .smote import SmoteConfig, deficit, minority_label, smote

METHODS = ("none", "smote", "gan_minority", "cgan", "smote_gan", "wgan_gp")


@dataclass(frozen=True)
class AugmentConfig:
    smote: SmoteConfig = field(default_factory=SmoteConfig)
    gan: GanConfig = field(default_factory=GanConfig)
    # keep half SMOTE rows / half GAN rows instead of GAN rows only
    smote_gan_keep_smote: bool = False


@dataclass
class BalanceOutcome:
    dataset: LabeledDataset
    generator: Optional[TrainedGenerator] = None


def balance_with_details(
    data: LabeledDataset, method: str, cfg: AugmentConfig, rng: np.random.Generator
) -> BalanceOutcome:
    if method not in METHODS:
        raise ValueError(f"unknown augmentation method {method!r}; choose from {METHODS}")
    pos, neg = data.counts()
    if method == "none":
        return BalanceOutcome(data.copy())
    if pos == 0 or neg == 0:
        raise ValueError("balancing needs both classes present")
    n = deficit(data)
    if n == 0:
        return BalanceOutcome(data.copy())
    label = minority_label(data)
    minority = data.features[data.labels == label]
    gen = None
    if method == "smote":
        synth = smote(data, SmoteConfig(cfg.smote.k_neighbors, n), rng)
    elif method == "gan_minority":
        gen = train_gan(minority, cfg.gan, rng)
        synth = gen.sample(n, rng, label)
    elif method == "wgan_gp":
        gen = train_wgan_gp(minority, cfg.gan, rng)
        synth = gen.sample(n, rng, label)
    elif method == "cgan":
        gen = train_cgan(data, cfg.gan, rng)
        synth = gen.sample(n, rng, label)
    else:  # smote_gan
        enriched = smote(data, SmoteConfig(cfg.smote.k_neighbors, n), rng)
        gen = train_gan(np.vstack([minority, enriched.features]), cfg.gan, rng)
        if cfg.smote_gan_keep_smote:
            n_gan = n // 2
            synth = LabeledDataset.concat([enriched.subset(np.arange(n - n_gan)), gen.sample(n_gan, rng, label)])
        else:
            synth = gen.sample(n, rng, label)
    return BalanceOutcome(LabeledDataset.concat([data.copy(), synth]), gen)


def balance(data: LabeledDataset, method: str, cfg: AugmentConfig, rng: np.random.Generator) -> LabeledDataset:
    """Original rows followed by enough synthetic minority rows to equalize the classes."""
    return balance_with_details(data, method, cfg, rng).dataset
