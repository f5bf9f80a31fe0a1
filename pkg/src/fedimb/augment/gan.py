"""Adversarial generators for minority oversampling.

Three trainers share one generator shape (latent noise -> sigmoid rows in
[0, 1]):

* :func:`train_gan`      - vanilla GAN, BCE losses, Adam, clipped discriminator
* :func:`train_cgan`     - label-conditioned GAN trained on both classes
* :func:`train_wgan_gp`  - Wasserstein critic with gradient penalty, RMSprop
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..dataio import LabeledDataset
from ..diffnet import Adam, NonFiniteError, RMSprop, Tape, WeightBlob, mlp
from ..diffnet import tape as T
from ..diffnet.network import Network
from ..diffnet.serialize import deserialize_weights, serialize_weights

EPS = 1e-7
GENERATOR_ARCH = ((512, "relu"), (256, "relu"), (128, "relu"))
DISCRIMINATOR_ARCH = ((128, "relu"), "batchnorm", (64, "relu"))


class DivergenceError(RuntimeError):
    """GAN training produced a non-finite or exploding loss."""


@dataclass(frozen=True)
class GanConfig:
    latent_dim: int = 13
    batch_size: int = 64
    epochs: int = 100
    generator_arch: tuple = GENERATOR_ARCH
    discriminator_arch: tuple = DISCRIMINATOR_ARCH
    clip_value: float = 0.01
    clip_discriminator: bool = True
    learning_rate: float = 0.001
    lambda_gp: float = 10.0
    critic_iterations: int = 5
    wgan_learning_rate: float = 0.0001
    wgan_clip: bool = True
    divergence_limit: float = 1e6

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.lambda_gp < 0:
            raise ValueError("lambda_gp must be >= 0")
        if self.critic_iterations < 1:
            raise ValueError("critic_iterations must be >= 1")
        if self.clip_value <= 0:
            raise ValueError("clip_value must be positive")


# --- objectives -------------------------------------------------------------------


def _p(x) -> T.Tensor:
    return T.clip(T.as_tensor(x), EPS, 1.0 - EPS)


def generator_loss_t(d_on_fake) -> T.Tensor:
    return T.neg(T.mean(T.log(_p(d_on_fake))))


def discriminator_loss_t(d_on_real, d_on_fake) -> T.Tensor:
    real = T.mean(T.log(_p(d_on_real)))
    fake = T.mean(T.log(T.sub(1.0, _p(d_on_fake))))
    return T.neg(T.add(real, fake))


def generator_loss(d_on_fake) -> float:
    """Mean of -ln D(G(z))."""
    return float(generator_loss_t(d_on_fake).value)


def discriminator_loss(d_on_real, d_on_fake) -> float:
    """Mean of -ln D(x) - ln(1 - D(G(z)))."""
    return float(discriminator_loss_t(d_on_real, d_on_fake).value)


def minimax_value(d_on_real, d_on_fake) -> float:
    """E[ln D(x)] + E[ln(1 - D(G(z)))]."""
    return -discriminator_loss(d_on_real, d_on_fake)


def critic_loss_gp(d_real_out, d_fake_out, gp: float, lam: float = 10.0) -> float:
    """Wasserstein critic loss: mean fake score - mean real score + lam * gp."""
    if gp < 0:
        raise ValueError("gradient penalty must be >= 0")
    return float(np.mean(d_fake_out) - np.mean(d_real_out) + lam * gp)


def interpolate(real: np.ndarray, fake: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if real.shape != fake.shape:
        raise ValueError(f"real batch {real.shape} and fake batch {fake.shape} differ")
    eps = rng.uniform(0.0, 1.0, size=(real.shape[0], 1))
    return eps * real + (1.0 - eps) * fake


def gradient_penalty_t(critic: Network, x_hat) -> T.Tensor:
    """mean over rows of (||d critic / d x||_2 - 1)^2, differentiable in the weights."""
    with critic.frozen():
        gx = critic.input_gradient(x_hat)
    norms = T.sqrt(T.sum(T.mul(gx, gx), axis=1))
    dev = T.sub(norms, 1.0)
    return T.mean(T.mul(dev, dev))


def gradient_penalty(critic: Network, real_batch, fake_batch, rng: np.random.Generator) -> float:
    x_hat = interpolate(np.asarray(real_batch, float), np.asarray(fake_batch, float), rng)
    return float(gradient_penalty_t(critic, x_hat).value)


# --- generator container -------------------------------------------------------------


@dataclass
class EpochLog:
    epoch: int
    g_loss: float
    d_loss: float
    minimax_value: float


@dataclass
class TrainedGenerator:
    network: Network
    variant: str
    feature_dim: int
    latent_dim: int
    arch: tuple = GENERATOR_ARCH
    history: list[EpochLog] = field(default_factory=list)
    schedule: list[str] = field(default_factory=list)
    scaling: Optional[dict] = None

    @property
    def conditional(self) -> bool:
        return self.variant == "cgan"

    def sample(self, n: int, rng: np.random.Generator, label: int = 1) -> LabeledDataset:
        """``n`` synthetic rows labeled ``label`` and flagged synthetic."""
        if n == 0:
            return LabeledDataset(np.empty((0, self.feature_dim)), np.empty(0, dtype=np.int64), np.empty(0, dtype=bool))
        z = rng.normal(size=(n, self.latent_dim))
        if self.conditional:
            z = np.hstack([z, np.full((n, 1), float(label))])
        self.network.eval()
        rows = self.network.predict(z)
        return LabeledDataset(rows, np.full(n, label), np.ones(n, dtype=bool))

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "g_loss", "d_loss", "minimax_value"])
        for e in self.history:
            w.writerow([e.epoch, repr(e.g_loss), repr(e.d_loss), repr(e.minimax_value)])
        return buf.getvalue()

    def save(self, path) -> None:
        header = json.dumps(
            {
                "variant": self.variant,
                "latent_dim": self.latent_dim,
                "feature_dim": self.feature_dim,
                "arch": [list(a) if isinstance(a, tuple) else a for a in self.arch],
                "scaling": self.scaling,
            },
            sort_keys=True,
        ).encode("utf-8")
        blob = serialize_weights(self.network).data
        Path(path).write_bytes(b"FAG1" + struct.pack("<I", len(header)) + header + blob)

    @classmethod
    def load(cls, path) -> "TrainedGenerator":
        raw = Path(path).read_bytes()
        if raw[:4] != b"FAG1":
            raise ValueError("not a saved generator")
        (n,) = struct.unpack_from("<I", raw, 4)
        meta = json.loads(raw[8 : 8 + n].decode("utf-8"))
        arch = tuple(tuple(a) if isinstance(a, list) else a for a in meta["arch"])
        in_dim = meta["latent_dim"] + (1 if meta["variant"] == "cgan" else 0)
        net = mlp(in_dim, [*arch, (meta["feature_dim"], "sigmoid")], np.random.default_rng(0))
        deserialize_weights(WeightBlob(raw[8 + n :]), net)
        return cls(net, meta["variant"], meta["feature_dim"], meta["latent_dim"], arch, scaling=meta["scaling"])


# --- training -------------------------------------------------------------------------


def _guard(values: dict, limit: float, epoch: int) -> None:
    for name, v in values.items():
        if not np.isfinite(v) or abs(v) > limit:
            raise DivergenceError(f"{name} = {v!r} at epoch {epoch} (limit {limit:g})")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    bs = min(batch_size, n)
    perm = rng.permutation(n)
    for start in range(0, n, bs):
        yield perm[start : start + bs]


def _build(cfg: GanConfig, feature_dim: int, rng, cond: int = 0, critic: bool = False):
    gen = mlp(cfg.latent_dim + cond, [*cfg.generator_arch, (feature_dim, "sigmoid")], rng)
    out_act = "linear" if critic else "sigmoid"
    disc = mlp(feature_dim + cond, [*cfg.discriminator_arch, (1, out_act)], rng)
    return gen, disc


def _adversarial_loop(
    real: np.ndarray,
    cond: Optional[np.ndarray],
    cfg: GanConfig,
    rng: np.random.Generator,
    variant: str,
) -> TrainedGenerator:
    n, d = real.shape
    if n == 0:
        raise ValueError("no rows to train on")
    k = 0 if cond is None else 1
    gen, disc = _build(cfg, d, rng, cond=k)
    opt_g, opt_d = Adam(cfg.learning_rate), Adam(cfg.learning_rate)
    out = TrainedGenerator(gen, variant, d, cfg.latent_dim, tuple(cfg.generator_arch))

    def with_cond(x, c):
        return x if c is None else np.hstack([x, c])

    for epoch in range(cfg.epochs):
        g_losses, d_losses, values = [], [], []
        try:
            for idx in _batches(n, cfg.batch_size, rng):
                b = len(idx)
                c = None if cond is None else cond[idx]
                gen.train()
                fake = gen.predict(with_cond(rng.normal(size=(b, cfg.latent_dim)), c))

                disc.train()
                with Tape() as tape:
                    scores = disc(np.vstack([with_cond(real[idx], c), with_cond(fake, c)]))
                    d_real, d_fake = T.take_rows(scores, 0, b), T.take_rows(scores, b, 2 * b)
                    loss_d = discriminator_loss_t(d_real, d_fake)
                opt_d.step(disc.parameters(), tape.gradient(loss_d, disc.parameters()))
                if cfg.clip_discriminator:
                    disc.clip_weights(cfg.clip_value)
                out.schedule.append("D")

                # discriminator frozen: no parameter or running-stat updates
                with disc.frozen(weights=True), Tape() as tape:
                    z = with_cond(rng.normal(size=(b, cfg.latent_dim)), c)
                    g_rows = gen(z)
                    d_on_g = disc(g_rows if c is None else T.concat_cols([g_rows, c]))
                    loss_g = generator_loss_t(d_on_g)
                opt_g.step(gen.parameters(), tape.gradient(loss_g, gen.parameters()))
                out.schedule.append("G")

                g_losses.append(float(loss_g.value))
                d_losses.append(float(loss_d.value))
                values.append(minimax_value(d_real.value, d_fake.value))
        except NonFiniteError as exc:
            raise DivergenceError(f"{variant}: {exc} at epoch {epoch}") from exc
        log = EpochLog(epoch, float(np.mean(g_losses)), float(np.mean(d_losses)), float(np.mean(values)))
        _guard({"g_loss": log.g_loss, "d_loss": log.d_loss}, cfg.divergence_limit, epoch)
        out.history.append(log)
    gen.eval()
    return out


def train_gan(minority_rows: np.ndarray, cfg: GanConfig, rng: np.random.Generator) -> TrainedGenerator:
    """Vanilla GAN on minority rows (already scaled to [0, 1])."""
    return _adversarial_loop(np.asarray(minority_rows, dtype=np.float64), None, cfg, rng, "gan")


def train_cgan(data: LabeledDataset, cfg: GanConfig, rng: np.random.Generator) -> TrainedGenerator:
    """Conditional GAN over the whole dataset; the label is appended to both inputs."""
    pos, neg = data.counts()
    if pos == 0 or neg == 0:
        raise ValueError("conditional GAN needs both classes")
    labels = data.labels.astype(np.float64).reshape(-1, 1)
    return _adversarial_loop(data.features, labels, cfg, rng, "cgan")


def train_wgan_gp(minority_rows: np.ndarray, cfg: GanConfig, rng: np.random.Generator) -> TrainedGenerator:
    """WGAN with gradient penalty; ``critic_iterations`` critic steps per generator step."""
    real = np.asarray(minority_rows, dtype=np.float64)
    n, d = real.shape
    if n == 0:
        raise ValueError("no rows to train on")
    gen, critic = _build(cfg, d, rng, critic=True)
    opt_g, opt_c = RMSprop(cfg.wgan_learning_rate), RMSprop(cfg.wgan_learning_rate)
    out = TrainedGenerator(gen, "wgan_gp", d, cfg.latent_dim, tuple(cfg.generator_arch))

    for epoch in range(cfg.epochs):
        g_losses, c_losses, gaps = [], [], []
        try:
            for idx in _batches(n, cfg.batch_size, rng):
                b = len(idx)
                batch = real[idx]
                for _ in range(cfg.critic_iterations):
                    gen.train()
                    fake = gen.predict(rng.normal(size=(b, cfg.latent_dim)))
                    x_hat = interpolate(batch, fake, rng)
                    critic.train()
                    with Tape() as tape:
                        scores = critic(np.vstack([batch, fake]))
                        d_real = T.mean(T.take_rows(scores, 0, b))
                        d_fake = T.mean(T.take_rows(scores, b, 2 * b))
                        gp = gradient_penalty_t(critic, x_hat)
                        loss_c = T.add(T.sub(d_fake, d_real), T.mul(cfg.lambda_gp, gp))
                    opt_c.step(critic.parameters(), tape.gradient(loss_c, critic.parameters()))
                    if cfg.wgan_clip:
                        critic.clip_weights(cfg.clip_value)
                    out.schedule.append("C")
                    c_losses.append(float(loss_c.value))
                    gaps.append(float(d_real.value - d_fake.value))

                with critic.frozen(weights=True), Tape() as tape:
                    scores = critic(gen(rng.normal(size=(b, cfg.latent_dim))))
                    loss_g = T.neg(T.mean(scores))
                opt_g.step(gen.parameters(), tape.gradient(loss_g, gen.parameters()))
                out.schedule.append("G")
                g_losses.append(float(loss_g.value))
        except NonFiniteError as exc:
            raise DivergenceError(f"wgan_gp: {exc} at epoch {epoch}") from exc
        # the minimax column carries the critic's Wasserstein estimate here
        log = EpochLog(epoch, float(np.mean(g_losses)), float(np.mean(c_losses)), float(np.mean(gaps)))
        _guard({"g_loss": log.g_loss, "critic_loss": log.d_loss}, cfg.divergence_limit, epoch)
        out.history.append(log)
    gen.eval()
    return out


def config_dict(cfg: GanConfig) -> dict:
    return asdict(cfg)
